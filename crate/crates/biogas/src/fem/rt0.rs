//! Lowest-order Raviart-Thomas space paired with piecewise constants:
//! one normal-flux dof per facet (the integral of u . n over the facet),
//! one pressure dof per tet.
//!
//! Global facet orientation: the normal points out of the lower-id tet
//! (outward on the boundary), so the dof layout is independent of the
//! traversal order.

use super::quadrature::tet_rule;
use super::{bary_point, FemError, Velocity};
use crate::geo::{self, Point3};
use crate::mesh::{Locator, Mesh, LOCAL_FACES};
use std::collections::HashMap;

#[derive(Debug, Clone)]
pub struct FacetInfo {
    /// Vertices wound so the right-hand normal points out of `minus`.
    pub verts: [usize; 3],
    pub minus: u32,
    pub plus: Option<u32>,
    pub area: f64,
    /// Unit normal out of `minus`.
    pub normal: Point3,
}

pub struct Rt0P0Space<'a> {
    pub mesh: &'a Mesh,
    pub facets: Vec<FacetInfo>,
    /// Facet id opposite each local vertex of each tet.
    pub tet_facets: Vec<[u32; 4]>,
    /// +1 when the facet's global normal points out of the tet.
    pub tet_signs: Vec<[f64; 4]>,
    /// Facet ids on the domain boundary (u . n = 0 constraints).
    pub boundary: Vec<usize>,
}

impl<'a> Rt0P0Space<'a> {
    pub fn new(mesh: &'a Mesh) -> Self {
        let mut key_to_id: HashMap<[usize; 3], u32> = HashMap::new();
        let mut facets: Vec<FacetInfo> = Vec::new();
        let mut tet_facets = vec![[0u32; 4]; mesh.ntets()];
        let mut tet_signs = vec![[0.0f64; 4]; mesh.ntets()];
        for (k, tet) in mesh.tets.iter().enumerate() {
            for (local, face) in LOCAL_FACES.iter().enumerate() {
                let verts = [tet[face[0]], tet[face[1]], tet[face[2]]];
                let mut key = verts;
                key.sort_unstable();
                match key_to_id.get(&key) {
                    None => {
                        let id = facets.len() as u32;
                        key_to_id.insert(key, id);
                        let [a, b, c] = verts.map(|v| mesh.vertices[v]);
                        facets.push(FacetInfo {
                            verts,
                            minus: k as u32,
                            plus: None,
                            area: geo::tri_area(a, b, c),
                            normal: geo::tri_normal(a, b, c),
                        });
                        tet_facets[k][local] = id;
                        tet_signs[k][local] = 1.0;
                    }
                    Some(&id) => {
                        facets[id as usize].plus = Some(k as u32);
                        tet_facets[k][local] = id;
                        tet_signs[k][local] = -1.0;
                    }
                }
            }
        }
        let boundary = facets
            .iter()
            .enumerate()
            .filter_map(|(i, f)| f.plus.is_none().then_some(i))
            .collect();
        Rt0P0Space {
            mesh,
            facets,
            tet_facets,
            tet_signs,
            boundary,
        }
    }

    pub fn nfluxes(&self) -> usize {
        self.facets.len()
    }

    pub fn npressures(&self) -> usize {
        self.mesh.ntets()
    }

    /// Basis function of the facet opposite local vertex `local` of `tet`,
    /// normalized to unit flux along the global facet normal.
    #[inline]
    pub fn basis(&self, tet: usize, local: usize, p: Point3) -> Point3 {
        let v = self.mesh.vertices[self.mesh.tets[tet][local]];
        let c = self.tet_signs[tet][local] / (3.0 * self.mesh.tet_volume(tet));
        geo::scale(geo::sub(p, v), c)
    }

    /// Divergence of the basis over the tet (constant): sign / volume.
    #[inline]
    pub fn basis_div(&self, tet: usize, local: usize) -> f64 {
        self.tet_signs[tet][local] / self.mesh.tet_volume(tet)
    }

    /// Evaluates a flux-dof field inside a tet.
    pub fn eval(&self, dofs: &[f64], tet: usize, p: Point3) -> Point3 {
        let mut u = [0.0; 3];
        for local in 0..4 {
            let f = self.tet_facets[tet][local] as usize;
            let b = self.basis(tet, local, p);
            for d in 0..3 {
                u[d] += dofs[f] * b[d];
            }
        }
        u
    }

    /// Elementwise divergence of a flux-dof field.
    pub fn divergence(&self, dofs: &[f64], tet: usize) -> f64 {
        (0..4)
            .map(|local| dofs[self.tet_facets[tet][local] as usize] * self.basis_div(tet, local))
            .sum()
    }

    /// Interpolates a vector field: each dof is the facet flux, evaluated
    /// by the centroid rule (exact for affine fields).
    pub fn interpolate<F: Fn(Point3) -> Point3>(&self, f: F) -> Vec<f64> {
        self.facets
            .iter()
            .map(|facet| {
                let [a, b, c] = facet.verts.map(|v| self.mesh.vertices[v]);
                let centroid = [
                    (a[0] + b[0] + c[0]) / 3.0,
                    (a[1] + b[1] + c[1]) / 3.0,
                    (a[2] + b[2] + c[2]) / 3.0,
                ];
                facet.area * geo::dot(f(centroid), facet.normal)
            })
            .collect()
    }

    /// Local velocity mass (Gram) matrix of the four facet basis
    /// functions on a tet.
    pub fn local_gram(&self, tet: usize) -> [[f64; 4]; 4] {
        let rule = tet_rule(2);
        let vs = self.mesh.tet_vertices(tet);
        let vol = self.mesh.tet_volume(tet);
        let mut g = [[0.0f64; 4]; 4];
        for (bary, w) in rule.points.iter().zip(&rule.weights) {
            let p = bary_point(&vs, bary);
            let basis: [Point3; 4] = [
                self.basis(tet, 0, p),
                self.basis(tet, 1, p),
                self.basis(tet, 2, p),
                self.basis(tet, 3, p),
            ];
            for i in 0..4 {
                for j in 0..4 {
                    g[i][j] += w * vol * geo::dot(basis[i], basis[j]);
                }
            }
        }
        g
    }
}

/// RT0 flux field adapted to the [`Velocity`] trait for transport
/// assembly.
pub struct Rt0Velocity<'a, 'm> {
    pub space: &'a Rt0P0Space<'m>,
    pub dofs: &'a [f64],
}

impl Velocity for Rt0Velocity<'_, '_> {
    fn at(&self, tet: usize, p: Point3) -> Point3 {
        self.space.eval(self.dofs, tet, p)
    }
}

/// Point evaluation of an RT0 field; errors when the point is outside the
/// mesh.
pub fn velocity_at(
    space: &Rt0P0Space,
    locator: &Locator,
    dofs: &[f64],
    p: Point3,
) -> Result<Point3, FemError> {
    let (tet, _) = locator
        .locate(p)
        .ok_or(FemError::PointOutsideMesh(p[0], p[1], p[2]))?;
    Ok(space.eval(dofs, tet, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_solid, GeometrySpec};

    fn cube(n: usize) -> Mesh {
        generate_solid(
            &GeometrySpec {
                base_side: 1.0,
                height: 1.0,
                wall_slope: 0.0,
                target_mesh_size: 1.0 / n as f64,
                ..GeometrySpec::default()
            },
            [n, n, n],
        )
        .unwrap()
    }

    #[test]
    fn constant_field_is_reproduced_with_zero_divergence() {
        let mesh = cube(2);
        let space = Rt0P0Space::new(&mesh);
        let c = [0.7, -0.4, 1.3];
        let dofs = space.interpolate(|_| c);
        for k in 0..mesh.ntets() {
            let vs = mesh.tet_vertices(k);
            let p = bary_point(&vs, &[0.25; 4]);
            let u = space.eval(&dofs, k, p);
            for d in 0..3 {
                assert!((u[d] - c[d]).abs() < 1e-12, "component {d}: {} vs {}", u[d], c[d]);
            }
            assert!(space.divergence(&dofs, k).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_flux_normalization() {
        // The basis of facet f has unit flux through f and zero through
        // the other three facets of the tet.
        let mesh = cube(1);
        let space = Rt0P0Space::new(&mesh);
        let k = 3; // arbitrary tet
        for local in 0..4 {
            let fid = space.tet_facets[k][local] as usize;
            for other in 0..4 {
                let oid = space.tet_facets[k][other] as usize;
                let facet = &space.facets[oid];
                let [a, b, c] = facet.verts.map(|v| mesh.vertices[v]);
                let centroid = [
                    (a[0] + b[0] + c[0]) / 3.0,
                    (a[1] + b[1] + c[1]) / 3.0,
                    (a[2] + b[2] + c[2]) / 3.0,
                ];
                // normal-flux density is constant per facet for RT0
                let flux = geo::dot(space.basis(k, local, centroid), facet.normal) * facet.area;
                let want = if oid == fid { 1.0 } else { 0.0 };
                assert!((flux - want).abs() < 1e-12, "flux {flux} want {want}");
            }
        }
    }

    #[test]
    fn normal_component_is_continuous_across_interior_facets() {
        let mesh = cube(2);
        let space = Rt0P0Space::new(&mesh);
        // Arbitrary dof vector.
        let dofs: Vec<f64> = (0..space.nfluxes()).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let mut checked = 0;
        for f in &space.facets {
            let Some(plus) = f.plus else { continue };
            let [a, b, c] = f.verts.map(|v| mesh.vertices[v]);
            let centroid = [
                (a[0] + b[0] + c[0]) / 3.0,
                (a[1] + b[1] + c[1]) / 3.0,
                (a[2] + b[2] + c[2]) / 3.0,
            ];
            let from_minus = geo::dot(space.eval(&dofs, f.minus as usize, centroid), f.normal);
            let from_plus = geo::dot(space.eval(&dofs, plus as usize, centroid), f.normal);
            assert!(
                (from_minus - from_plus).abs() < 1e-12,
                "facet jump {} vs {}",
                from_minus,
                from_plus
            );
            checked += 1;
        }
        assert!(checked > 0);
    }

    #[test]
    fn zero_field_evaluates_to_zero_and_outside_points_error() {
        let mesh = cube(2);
        let space = Rt0P0Space::new(&mesh);
        let locator = Locator::new(&mesh);
        let dofs = vec![0.0; space.nfluxes()];
        let u = velocity_at(&space, &locator, &dofs, [0.3, 0.4, 0.5]).unwrap();
        assert_eq!(u, [0.0, 0.0, 0.0]);
        assert!(velocity_at(&space, &locator, &dofs, [2.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn facet_counts_on_structured_cube() {
        let n = 2usize;
        let mesh = cube(n);
        let space = Rt0P0Space::new(&mesh);
        // 6n^3 tets, each with 4 facets, interior shared by 2:
        // nfacets = (4*6n^3 + nboundary)/2 with nboundary = 12n^2.
        let nb = 12 * n * n;
        assert_eq!(space.boundary.len(), nb);
        assert_eq!(space.nfluxes(), (24 * n * n * n + nb) / 2);
    }
}
