//! Continuous piecewise-linear (P1) scalar space on a tet mesh: one dof
//! per vertex, constant shape-function gradients per element.

use super::quadrature::tet_rule;
use super::{bary_point, FemError, Velocity};
use crate::geo::{self, Point3};
use crate::linalg::{SparseMatrix, Symmetry, TripletMatrix};
use crate::mesh::{BoundaryLabel, Mesh};

pub struct P1Space<'a> {
    pub mesh: &'a Mesh,
    /// Shape-function gradients per tet (constant for P1).
    grads: Vec<[Point3; 4]>,
}

impl<'a> P1Space<'a> {
    pub fn new(mesh: &'a Mesh) -> Self {
        let mut grads = Vec::with_capacity(mesh.ntets());
        for k in 0..mesh.ntets() {
            let [a, b, c, d] = mesh.tet_vertices(k);
            let j = [geo::sub(b, a), geo::sub(c, a), geo::sub(d, a)];
            let inv = invert3(j);
            // Rows of J^{-1} are the gradients of the barycentric
            // coordinates of vertices 1..3; vertex 0 closes the partition
            // of unity.
            let g1 = inv[0];
            let g2 = inv[1];
            let g3 = inv[2];
            let g0 = [
                -g1[0] - g2[0] - g3[0],
                -g1[1] - g2[1] - g3[1],
                -g1[2] - g2[2] - g3[2],
            ];
            grads.push([g0, g1, g2, g3]);
        }
        P1Space { mesh, grads }
    }

    pub fn ndofs(&self) -> usize {
        self.mesh.nvertices()
    }

    pub fn gradients(&self, tet: usize) -> &[Point3; 4] {
        &self.grads[tet]
    }

    /// Dofs lying on boundary facets with any of the given labels.
    pub fn label_dofs(&self, labels: &[BoundaryLabel]) -> Vec<usize> {
        self.mesh.label_vertices(labels)
    }

    /// Mass matrix with a constant coefficient, assembled from the exact
    /// P1 element mass matrix. Flagged positive only for coeff >= 0.
    pub fn assemble_mass(&self, coeff: f64) -> SparseMatrix {
        let mut b = TripletMatrix::new(self.ndofs(), self.ndofs());
        for (k, tet) in self.mesh.tets.iter().enumerate() {
            let scale = coeff * self.mesh.tet_volume(k) / 20.0;
            for i in 0..4 {
                for j in 0..4 {
                    let w = if i == j { 2.0 } else { 1.0 };
                    b.add(tet[i], tet[j], scale * w);
                }
            }
        }
        b.finalize().with_symmetry(if coeff >= 0.0 {
            Symmetry::SymmetricPositive
        } else {
            Symmetry::Symmetric
        })
    }

    /// Mass matrix with a spatially varying coefficient evaluated at
    /// quadrature points of the given degree.
    pub fn assemble_weighted_mass<F>(&self, coeff: F, degree: usize) -> SparseMatrix
    where
        F: Fn(usize, Point3, &[f64; 4]) -> f64,
    {
        let rule = tet_rule(degree);
        let mut b = TripletMatrix::new(self.ndofs(), self.ndofs());
        for (k, tet) in self.mesh.tets.iter().enumerate() {
            let vs = self.mesh.tet_vertices(k);
            let vol = self.mesh.tet_volume(k);
            let mut local = [[0.0f64; 4]; 4];
            for (bary, w) in rule.points.iter().zip(&rule.weights) {
                let p = bary_point(&vs, bary);
                let c = coeff(k, p, bary) * w * vol;
                for i in 0..4 {
                    for j in 0..4 {
                        local[i][j] += c * bary[i] * bary[j];
                    }
                }
            }
            for i in 0..4 {
                for j in 0..4 {
                    b.add(tet[i], tet[j], local[i][j]);
                }
            }
        }
        b.finalize().with_symmetry(Symmetry::Symmetric)
    }

    /// Lumped mass vector: integral of each basis function.
    pub fn lumped_mass(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.ndofs()];
        for (k, tet) in self.mesh.tets.iter().enumerate() {
            let q = self.mesh.tet_volume(k) / 4.0;
            for &v in tet {
                m[v] += q;
            }
        }
        m
    }

    /// Stiffness matrix int coeff grad(u) . grad(v); exact for P1.
    pub fn assemble_stiffness(&self, coeff: f64) -> SparseMatrix {
        let mut b = TripletMatrix::new(self.ndofs(), self.ndofs());
        for (k, tet) in self.mesh.tets.iter().enumerate() {
            let g = &self.grads[k];
            let vol = self.mesh.tet_volume(k);
            for i in 0..4 {
                for j in 0..4 {
                    b.add(tet[i], tet[j], coeff * vol * geo::dot(g[i], g[j]));
                }
            }
        }
        b.finalize().with_symmetry(if coeff >= 0.0 {
            Symmetry::SymmetricPositive
        } else {
            Symmetry::Symmetric
        })
    }

    /// Advection matrix C_ij = int (u . grad(phi_j)) phi_i.
    pub fn assemble_advection<V: Velocity>(&self, vel: &V, degree: usize) -> SparseMatrix {
        self.assemble_advection_parts(vel, degree).advection
    }

    /// Assembles in one sweep the three velocity-dependent matrices of the
    /// stabilized transport forms:
    /// advection C_ij = int (u . grad phi_j) phi_i,
    /// streamline mass S_ij = int phi_j (u . grad phi_i) = C^T,
    /// streamline diffusion D_ij = int (u . grad phi_j)(u . grad phi_i).
    pub fn assemble_advection_parts<V: Velocity>(
        &self,
        vel: &V,
        degree: usize,
    ) -> AdvectionParts {
        let rule = tet_rule(degree);
        let n = self.ndofs();
        let mut bc = TripletMatrix::new(n, n);
        let mut bs = TripletMatrix::new(n, n);
        let mut bd = TripletMatrix::new(n, n);
        for (k, tet) in self.mesh.tets.iter().enumerate() {
            let vs = self.mesh.tet_vertices(k);
            let vol = self.mesh.tet_volume(k);
            let g = &self.grads[k];
            let mut c_loc = [[0.0f64; 4]; 4];
            let mut d_loc = [[0.0f64; 4]; 4];
            for (bary, w) in rule.points.iter().zip(&rule.weights) {
                let p = bary_point(&vs, bary);
                let u = vel.at(k, p);
                let ug: [f64; 4] = [
                    geo::dot(u, g[0]),
                    geo::dot(u, g[1]),
                    geo::dot(u, g[2]),
                    geo::dot(u, g[3]),
                ];
                let scale = w * vol;
                for i in 0..4 {
                    for j in 0..4 {
                        c_loc[i][j] += scale * ug[j] * bary[i];
                        d_loc[i][j] += scale * ug[j] * ug[i];
                    }
                }
            }
            for i in 0..4 {
                for j in 0..4 {
                    bc.add(tet[i], tet[j], c_loc[i][j]);
                    bs.add(tet[j], tet[i], c_loc[i][j]);
                    bd.add(tet[i], tet[j], d_loc[i][j]);
                }
            }
        }
        AdvectionParts {
            advection: bc.finalize(),
            streamline_mass: bs.finalize(),
            streamline_diffusion: bd.finalize().with_symmetry(Symmetry::SymmetricPositive),
        }
    }

    /// Nodal interpolation of an analytic function.
    pub fn interpolate<F: Fn(Point3) -> f64>(&self, f: F) -> Vec<f64> {
        self.mesh.vertices.iter().map(|&v| f(v)).collect()
    }

    /// Exact integral of a P1 field over the mesh.
    pub fn integrate(&self, dofs: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (k, tet) in self.mesh.tets.iter().enumerate() {
            let s: f64 = tet.iter().map(|&v| dofs[v]).sum();
            acc += s * self.mesh.tet_volume(k) / 4.0;
        }
        acc
    }

    /// Load vector int f phi_i with f evaluated at quadrature points.
    pub fn load<F: Fn(Point3) -> f64>(&self, f: F, degree: usize) -> Vec<f64> {
        let rule = tet_rule(degree);
        let mut out = vec![0.0; self.ndofs()];
        for (k, tet) in self.mesh.tets.iter().enumerate() {
            let vs = self.mesh.tet_vertices(k);
            let vol = self.mesh.tet_volume(k);
            for (bary, w) in rule.points.iter().zip(&rule.weights) {
                let p = bary_point(&vs, bary);
                let c = f(p) * w * vol;
                for i in 0..4 {
                    out[tet[i]] += c * bary[i];
                }
            }
        }
        out
    }

    /// Load vector int f (phi_i + d u . grad phi_i), the SUPG-extended test
    /// of an analytic source.
    pub fn load_supg<F: Fn(Point3) -> f64, V: Velocity>(
        &self,
        f: F,
        vel: &V,
        d: f64,
        degree: usize,
    ) -> Vec<f64> {
        let rule = tet_rule(degree);
        let mut out = vec![0.0; self.ndofs()];
        for (k, tet) in self.mesh.tets.iter().enumerate() {
            let vs = self.mesh.tet_vertices(k);
            let vol = self.mesh.tet_volume(k);
            let g = &self.grads[k];
            for (bary, w) in rule.points.iter().zip(&rule.weights) {
                let p = bary_point(&vs, bary);
                let u = vel.at(k, p);
                let c = f(p) * w * vol;
                for i in 0..4 {
                    out[tet[i]] += c * (bary[i] + d * geo::dot(u, g[i]));
                }
            }
        }
        out
    }

    /// Evaluates a P1 field at a located point.
    pub fn eval(&self, dofs: &[f64], tet: usize, bary: &[f64; 4]) -> f64 {
        let t = self.mesh.tets[tet];
        (0..4).map(|i| dofs[t[i]] * bary[i]).sum()
    }

    /// L2 norm of the difference between a P1 field and an analytic
    /// function, by quadrature of the given degree.
    pub fn l2_error<F: Fn(Point3) -> f64>(&self, dofs: &[f64], exact: F, degree: usize) -> f64 {
        let rule = tet_rule(degree);
        let mut acc = 0.0;
        for (k, tet) in self.mesh.tets.iter().enumerate() {
            let vs = self.mesh.tet_vertices(k);
            let vol = self.mesh.tet_volume(k);
            for (bary, w) in rule.points.iter().zip(&rule.weights) {
                let p = bary_point(&vs, bary);
                let fh: f64 = (0..4).map(|i| dofs[tet[i]] * bary[i]).sum();
                let diff = fh - exact(p);
                acc += w * vol * diff * diff;
            }
        }
        acc.sqrt()
    }

    pub fn check_dofs(&self, dofs: &[f64]) -> Result<(), FemError> {
        if dofs.len() != self.ndofs() {
            return Err(FemError::DofMismatch {
                got: dofs.len(),
                want: self.ndofs(),
            });
        }
        Ok(())
    }
}

fn invert3(m: [Point3; 3]) -> [Point3; 3] {
    // m holds columns of J; returns rows of J^{-1}.
    let det = geo::dot(m[0], geo::cross(m[1], m[2]));
    let c0 = geo::cross(m[1], m[2]);
    let c1 = geo::cross(m[2], m[0]);
    let c2 = geo::cross(m[0], m[1]);
    [
        geo::scale(c0, 1.0 / det),
        geo::scale(c1, 1.0 / det),
        geo::scale(c2, 1.0 / det),
    ]
}

pub struct AdvectionParts {
    pub advection: SparseMatrix,
    pub streamline_mass: SparseMatrix,
    pub streamline_diffusion: SparseMatrix,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::ConstVelocity;
    use crate::mesh::{generate_solid, GeometrySpec};

    fn cube(n: usize, side: f64) -> crate::mesh::Mesh {
        generate_solid(
            &GeometrySpec {
                base_side: side,
                height: side,
                wall_slope: 0.0,
                target_mesh_size: side / n as f64,
                ..GeometrySpec::default()
            },
            [n, n, n],
        )
        .unwrap()
    }

    /// Cube [0,1]^3 in corner-anchored coordinates.
    fn unit_cube(n: usize) -> crate::mesh::Mesh {
        let (verts, tets) = crate::mesh::structured_tets([n, n, n], |x, y, z| [x, y, z]);
        crate::mesh::classify_boundary(
            verts,
            tets,
            &GeometrySpec {
                base_side: 1.0,
                height: 1.0,
                wall_slope: 0.0,
                ..GeometrySpec::default()
            },
        )
        .unwrap()
    }

    fn to_map(m: &SparseMatrix) -> std::collections::HashMap<(usize, usize), f64> {
        let mut out = std::collections::HashMap::new();
        for r in 0..m.nrows() {
            for (c, v) in m.row(r) {
                if v != 0.0 {
                    out.insert((r, c), v);
                }
            }
        }
        out
    }

    fn single_ref_tet() -> crate::mesh::Mesh {
        let verts = vec![
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
        ];
        crate::mesh::classify_boundary(
            verts,
            vec![[0, 1, 2, 3]],
            &GeometrySpec {
                base_side: 1.0,
                height: 1.0,
                wall_slope: 0.0,
                ..GeometrySpec::default()
            },
        )
        .unwrap()
    }

    fn entry_sum(m: &SparseMatrix) -> f64 {
        (0..m.nrows()).map(|r| m.row(r).map(|(_, v)| v).sum::<f64>()).sum()
    }

    #[test]
    fn mass_sum_is_volume_times_coeff() {
        let mesh = single_ref_tet();
        let space = P1Space::new(&mesh);
        let m = space.assemble_mass(1.0);
        assert!((entry_sum(&m) - 1.0 / 6.0).abs() < 1e-14);

        let mesh = cube(3, 3.0);
        let space = P1Space::new(&mesh);
        let m = space.assemble_mass(0.3);
        assert!((entry_sum(&m) - 8.1).abs() < 1e-10 * 8.1);
        assert_eq!(m.symmetry(), Symmetry::SymmetricPositive);
    }

    #[test]
    fn negative_coeff_flagged_non_spd() {
        let mesh = single_ref_tet();
        let space = P1Space::new(&mesh);
        let m = space.assemble_mass(-1.0);
        assert_eq!(m.symmetry(), Symmetry::Symmetric);
    }

    #[test]
    fn stiffness_kills_constants() {
        let mesh = cube(2, 1.0);
        let space = P1Space::new(&mesh);
        let k = space.assemble_stiffness(2.5);
        let ones = vec![1.0; space.ndofs()];
        let y = k.matvec_alloc(&ones);
        for v in y {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn stiffness_zero_coeff_is_zero_matrix() {
        let mesh = single_ref_tet();
        let space = P1Space::new(&mesh);
        let k = space.assemble_stiffness(0.0);
        for r in 0..k.nrows() {
            for (_, v) in k.row(r) {
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn reference_tet_stiffness_matches_hand_assembly() {
        // For the reference tet, grad(l0) = (-1,-1,-1), grad(l_i) = e_i,
        // V = 1/6, so K = V * G G^T with the rows above.
        let mesh = single_ref_tet();
        let space = P1Space::new(&mesh);
        let k = space.assemble_stiffness(1.0);
        let expected = [
            [0.5, -1.0 / 6.0, -1.0 / 6.0, -1.0 / 6.0],
            [-1.0 / 6.0, 1.0 / 6.0, 0.0, 0.0],
            [-1.0 / 6.0, 0.0, 1.0 / 6.0, 0.0],
            [-1.0 / 6.0, 0.0, 0.0, 1.0 / 6.0],
        ];
        let mut dense = [[0.0f64; 4]; 4];
        for r in 0..4 {
            for (c, v) in k.row(r) {
                dense[r][c] = v;
            }
        }
        for i in 0..4 {
            for j in 0..4 {
                assert!(
                    (dense[i][j] - expected[i][j]).abs() < 1e-14,
                    "K[{i}][{j}] = {} want {}",
                    dense[i][j],
                    expected[i][j]
                );
            }
        }
    }

    #[test]
    fn advection_of_linear_field_equals_unit_load() {
        let mesh = cube(2, 1.0);
        let space = P1Space::new(&mesh);
        let c = space.assemble_advection(&ConstVelocity([1.0, 0.0, 0.0]), 2);
        let g = space.interpolate(|p| p[0]);
        let cg = c.matvec_alloc(&g);
        let unit_load = space.load(|_| 1.0, 1);
        for (a, b) in cg.iter().zip(&unit_load) {
            assert!((a - b).abs() < 1e-13, "{a} vs {b}");
        }
    }

    #[test]
    fn advection_zero_velocity_is_zero() {
        let mesh = cube(2, 1.0);
        let space = P1Space::new(&mesh);
        let c = space.assemble_advection(&ConstVelocity([0.0; 3]), 2);
        assert_eq!(entry_sum(&c), 0.0);
    }

    #[test]
    fn advection_reversal_negates_and_divfree_is_skew() {
        let mesh = cube(2, 1.0);
        let space = P1Space::new(&mesh);
        let c_fwd = to_map(&space.assemble_advection(&ConstVelocity([0.3, -0.2, 0.9]), 2));
        let c_rev = to_map(&space.assemble_advection(&ConstVelocity([-0.3, 0.2, -0.9]), 2));
        for (key, vf) in &c_fwd {
            let vr = c_rev.get(key).copied().unwrap_or(0.0);
            assert!((vf + vr).abs() < 1e-14);
        }

        // Divergence-free tangential field: u = (pi sin(pi x) cos(pi y),
        // -pi cos(pi x) sin(pi y), 0); u.n = 0 on the unit cube.
        let pi = std::f64::consts::PI;
        let vel = crate::fem::FnVelocity(move |p: [f64; 3]| {
            [
                pi * (pi * p[0]).sin() * (pi * p[1]).cos(),
                -pi * (pi * p[0]).cos() * (pi * p[1]).sin(),
                0.0,
            ]
        });
        let mesh = unit_cube(3);
        let space = P1Space::new(&mesh);
        let c = to_map(&space.assemble_advection(&vel, 8));
        for (&(r, col), &va) in &c {
            let vb = c.get(&(col, r)).copied().unwrap_or(0.0);
            assert!(
                (va + vb).abs() < 1e-8,
                "entry ({r},{col}) not skew: {va} vs {vb}"
            );
        }
    }

    #[test]
    fn interpolate_and_integrate() {
        let mesh = unit_cube(2);
        let space = P1Space::new(&mesh);
        let ones = space.interpolate(|_| 1.0);
        assert!((space.integrate(&ones) - 1.0).abs() < 1e-13);
        let linear = space.interpolate(|p| p[0]);
        assert!((space.integrate(&linear) - 0.5).abs() < 1e-13);
    }

    #[test]
    fn quadratic_interpolation_error_is_second_order() {
        // integral of the interpolant of x^2 vs exact 1/3: the defect
        // shrinks by ~4 when the mesh is refined 2x.
        let errs: Vec<f64> = [4usize, 8]
            .iter()
            .map(|&n| {
                let mesh = unit_cube(n);
                let space = P1Space::new(&mesh);
                let f = space.interpolate(|p| p[0] * p[0]);
                (space.integrate(&f) - 1.0 / 3.0).abs()
            })
            .collect();
        let ratio = errs[0] / errs[1];
        assert!(
            (3.5..=4.5).contains(&ratio),
            "expected second order, ratio {ratio} (errors {errs:?})"
        );
    }

    #[test]
    fn streamline_matrices_are_consistent() {
        let mesh = cube(2, 1.0);
        let space = P1Space::new(&mesh);
        let vel = ConstVelocity([0.4, 0.1, -0.3]);
        let parts = space.assemble_advection_parts(&vel, 2);
        let ct = to_map(&parts.advection.transpose());
        let s_map = to_map(&parts.streamline_mass);
        for (key, va) in &ct {
            assert_eq!(s_map.get(key).copied().unwrap_or(0.0), *va);
        }
        for (key, vb) in &s_map {
            assert!(ct.contains_key(key) || *vb == 0.0);
        }
        // D is PSD: x'Dx >= 0 for a few vectors.
        let n = space.ndofs();
        for seed in 0..3u64 {
            let x: Vec<f64> = (0..n).map(|i| ((i as f64 + 1.3) * (seed as f64 + 0.7)).sin()).collect();
            let dx = parts.streamline_diffusion.matvec_alloc(&x);
            let quad: f64 = x.iter().zip(&dx).map(|(a, b)| a * b).sum();
            assert!(quad >= -1e-12);
        }
    }
}
