//! Gas velocity from a perturbed dual-mixed Darcy problem with
//! least-squares stabilization, discretized in RT0 x P0.
//!
//! The strong form is div(u) + lambda p = F, u = -grad(p), u.n = 0 on the
//! whole boundary; the perturbation lambda ~ max element diameter makes
//! the problem well posed even when the source does not integrate to
//! zero. The stabilized bilinear form combines the dual-mixed form with
//! three residual terms: the Darcy residual (subtracted, weight d1 < 1 to
//! keep coercivity), the mass-balance residual (weight d2) and the curl
//! residual (weight d3).
//!
//! Two structural facts of the RT0/P0 pair shape the assembly: the broken
//! pressure gradient vanishes elementwise, so the Darcy residual term
//! reduces to a velocity mass term; and the curl of every RT0 basis
//! function is identically zero, so the curl term assembles to nothing
//! (d3 is accepted and has no effect for this pair).
//!
//! The mass-balance test is taken with the sign that makes the symmetric
//! part of the system positive definite on the constrained space, which is
//! what lets BiCGStab converge reliably.

use crate::fem::quadrature::tet_rule;
use crate::fem::{bary_point, P1Space, Rt0P0Space, SampledLine};
use crate::geo::Point3;
use crate::linalg::{self, LinalgError, SolveReport, SparseMatrix, TripletMatrix};
use crate::mesh::Locator;

#[derive(Debug, Clone, Copy)]
pub struct DarcyParams {
    /// Weight of the subtracted Darcy-residual term; must stay below 1.
    pub d1: f64,
    /// Weight of the mass-balance residual term.
    pub d2: f64,
    /// Weight of the curl residual term (no effect for RT0/P0).
    pub d3: f64,
    /// Pressure perturbation; defaults to the largest element diameter.
    pub lambda: Option<f64>,
    /// Extraction rate per production pipe (m^3/day).
    pub j_out: f64,
    /// Floor for the gas line integral under which an extractor counts as
    /// depleted.
    pub depletion_floor: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for DarcyParams {
    fn default() -> Self {
        DarcyParams {
            d1: 0.5,
            d2: 0.5,
            d3: 0.5,
            lambda: None,
            j_out: 258.0,
            depletion_floor: 1e-10,
            tol: 1e-10,
            max_iter: 200_000,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DarcyError {
    #[error("d1 must lie in (0,1) to keep the stabilized form coercive, got {0}")]
    BadD1(f64),
    #[error("d2 and d3 must be nonnegative, got d2 = {0}, d3 = {1}")]
    BadWeights(f64, f64),
    #[error("lambda must be positive, got {0}")]
    BadLambda(f64),
    #[error("gas depleted at extractor {pipe}: total concentration integral {integral:.3e} along the pipe")]
    GasDepleted { pipe: usize, integral: f64 },
    #[error("velocity solve failed (lambda = {lambda:.3e}, d = [{d1}, {d2}, {d3}]): {source}")]
    Solver {
        lambda: f64,
        d1: f64,
        d2: f64,
        d3: f64,
        source: LinalgError,
    },
    #[error("velocity solve stalled (lambda = {lambda:.3e}, d = [{d1}, {d2}, {d3}]): residual {residual:.3e} after {iterations} iterations")]
    NotConverged {
        lambda: f64,
        d1: f64,
        d2: f64,
        d3: f64,
        residual: f64,
        iterations: usize,
    },
}

/// Discrete velocity/pressure pair: facet fluxes (RT0 dofs) and per-tet
/// pressures.
#[derive(Debug, Clone)]
pub struct VelocityPressure {
    pub fluxes: Vec<f64>,
    pub pressure: Vec<f64>,
    pub report: SolveReport,
}

/// Extraction line densities: one constant line density per production
/// pipe, -J_out normalized by the line integral of the total gas
/// concentration along that pipe.
pub fn fout_density(
    space: &P1Space,
    lines: &[&SampledLine],
    c_tot: &[f64],
    j_out: f64,
    floor: f64,
) -> Result<Vec<f64>, DarcyError> {
    let mut densities = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if j_out == 0.0 {
            densities.push(0.0);
            continue;
        }
        let integral = line.integrate_p1(space, c_tot);
        if integral < floor {
            return Err(DarcyError::GasDepleted { pipe: i, integral });
        }
        densities.push(-j_out / integral);
    }
    Ok(densities)
}

/// Right-hand-side data for the velocity solve.
pub enum DarcySource<'a> {
    /// Line measures with constant densities (one per pipe), optionally
    /// mollified over nearby cells.
    Lines {
        lines: &'a [&'a SampledLine],
        densities: &'a [f64],
        moll: Option<(&'a Locator<'a>, f64)>,
    },
    /// Smooth volumetric source, for verification problems.
    Volumetric(&'a dyn Fn(Point3) -> f64),
}

/// Assembled stabilized operator for one mesh and parameter set; the
/// matrix is state-independent, so it is built once and reused for every
/// time step.
pub struct DarcySolver<'a, 'm> {
    pub space: &'a Rt0P0Space<'m>,
    pub lambda: f64,
    pub params: DarcyParams,
    system: SparseMatrix,
    nu: usize,
}

impl<'a, 'm> DarcySolver<'a, 'm> {
    pub fn new(space: &'a Rt0P0Space<'m>, params: DarcyParams) -> Result<Self, DarcyError> {
        if !(params.d1 > 0.0 && params.d1 < 1.0) {
            return Err(DarcyError::BadD1(params.d1));
        }
        if params.d2 < 0.0 || params.d3 < 0.0 {
            return Err(DarcyError::BadWeights(params.d2, params.d3));
        }
        let lambda = params.lambda.unwrap_or_else(|| space.mesh.max_diameter());
        if !(lambda > 0.0) {
            return Err(DarcyError::BadLambda(lambda));
        }
        let mesh = space.mesh;
        let nu = space.nfluxes();
        let np = space.npressures();
        let (d1, d2) = (params.d1, params.d2);
        let mut b = TripletMatrix::new(nu + np, nu + np);
        for k in 0..mesh.ntets() {
            let vol = mesh.tet_volume(k);
            let gram = space.local_gram(k);
            let facets = space.tet_facets[k];
            let signs = space.tet_signs[k];
            for i in 0..4 {
                let fi = facets[i] as usize;
                for j in 0..4 {
                    let fj = facets[j] as usize;
                    // (1 - d1) velocity mass + d2 div-div coupling.
                    b.add(
                        fi,
                        fj,
                        (1.0 - d1) * gram[i][j] + d2 * signs[i] * signs[j] / vol,
                    );
                }
                // Pressure couplings: (d2 lambda - 1)(p, div du) on the
                // velocity rows, (1 + d2 lambda)(div u, dp) on the
                // pressure rows.
                b.add(fi, nu + k, (d2 * lambda - 1.0) * signs[i]);
                b.add(nu + k, fi, (1.0 + d2 * lambda) * signs[i]);
            }
            b.add(nu + k, nu + k, lambda * (1.0 + d2 * lambda) * vol);
        }
        let mut system = b.finalize();
        let mut dummy = vec![0.0; nu + np];
        let constraints: Vec<(usize, f64)> =
            space.boundary.iter().map(|&f| (f, 0.0)).collect();
        system.apply_dirichlet(&mut dummy, &constraints);
        Ok(DarcySolver {
            space,
            lambda,
            params,
            system,
            nu,
        })
    }

    /// Per-tet integrals of the source term.
    fn source_cell_integrals(&self, source: &DarcySource) -> Vec<f64> {
        let mesh = self.space.mesh;
        match source {
            DarcySource::Lines {
                lines,
                densities,
                moll,
            } => {
                let mut cell = vec![0.0; mesh.ntets()];
                for (line, &rho) in lines.iter().zip(densities.iter()) {
                    let load = match moll {
                        Some((locator, r)) => line.p0_load_mollified(mesh, locator, |_| rho, *r),
                        None => line.p0_load(mesh, |_| rho),
                    };
                    for (k, v) in load.iter().enumerate() {
                        cell[k] += v;
                    }
                }
                cell
            }
            DarcySource::Volumetric(f) => {
                let rule = tet_rule(4);
                (0..mesh.ntets())
                    .map(|k| {
                        let vs = mesh.tet_vertices(k);
                        let vol = mesh.tet_volume(k);
                        rule.points
                            .iter()
                            .zip(&rule.weights)
                            .map(|(bary, w)| w * vol * f(bary_point(&vs, bary)))
                            .sum()
                    })
                    .collect()
            }
        }
    }

    pub fn solve(&self, source: &DarcySource) -> Result<VelocityPressure, DarcyError> {
        let mesh = self.space.mesh;
        let (nu, _np) = (self.nu, self.space.npressures());
        let (d2, lambda) = (self.params.d2, self.lambda);
        let cell_src = self.source_cell_integrals(source);

        let mut rhs = vec![0.0; self.system.nrows()];
        // d2 <F, div du>: elementwise-constant divergence lets both line
        // and volumetric sources reuse the per-tet integrals.
        for k in 0..mesh.ntets() {
            let vol = mesh.tet_volume(k);
            for local in 0..4 {
                let f = self.space.tet_facets[k][local] as usize;
                rhs[f] += d2 * cell_src[k] * self.space.tet_signs[k][local] / vol;
            }
            rhs[nu + k] = (1.0 + d2 * lambda) * cell_src[k];
        }
        for &f in &self.space.boundary {
            rhs[f] = 0.0;
        }

        let diag_err = |source: LinalgError| DarcyError::Solver {
            lambda,
            d1: self.params.d1,
            d2: self.params.d2,
            d3: self.params.d3,
            source,
        };
        let (x, report) =
            linalg::bicgstab_solve_jacobi(&self.system, &rhs, self.params.tol, self.params.max_iter)
                .map_err(diag_err)?;
        if !report.converged {
            return Err(DarcyError::NotConverged {
                lambda,
                d1: self.params.d1,
                d2: self.params.d2,
                d3: self.params.d3,
                residual: report.residual,
                iterations: report.iterations,
            });
        }
        let fluxes = x[..nu].to_vec();
        let pressure = x[nu..].to_vec();
        Ok(VelocityPressure {
            fluxes,
            pressure,
            report,
        })
    }

    /// Discrete balance residual int (div u + lambda p - F) dx; zero to
    /// solver tolerance for any source.
    pub fn balance_residual(&self, vp: &VelocityPressure, source: &DarcySource) -> f64 {
        let mesh = self.space.mesh;
        let cell_src = self.source_cell_integrals(source);
        let mut acc = 0.0;
        for k in 0..mesh.ntets() {
            let div: f64 = (0..4)
                .map(|local| {
                    vp.fluxes[self.space.tet_facets[k][local] as usize]
                        * self.space.tet_signs[k][local]
                })
                .sum();
            acc += div + self.lambda * vp.pressure[k] * mesh.tet_volume(k) - cell_src[k];
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{P1Space, Rt0P0Space, SampledLine};
    use crate::mesh::{
        classify_boundary, generate_solid, structured_tets, GeometrySpec, Locator, Mesh,
    };

    fn cube(n: usize, side: f64) -> Mesh {
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

    #[test]
    fn zero_source_gives_zero_solution() {
        let mesh = cube(2, 1.0);
        let space = Rt0P0Space::new(&mesh);
        let solver = DarcySolver::new(&space, DarcyParams::default()).unwrap();
        let vp = solver.solve(&DarcySource::Volumetric(&|_| 0.0)).unwrap();
        for v in vp.fluxes.iter().chain(&vp.pressure) {
            assert_eq!(*v, 0.0);
        }
    }

    #[test]
    fn fout_density_closed_form_and_symmetry() {
        let mesh = cube(6, 30.0);
        let locator = Locator::new(&mesh);
        let p1 = P1Space::new(&mesh);
        let mk = |y: f64| {
            SampledLine::new(&mesh, &locator, &[[-10.0, y, 15.0], [10.0, y, 15.0]]).unwrap()
        };
        let la = mk(-6.0);
        let lb = mk(6.0); // mirror position
        let lines = [&la, &lb];
        let c = vec![3.0; p1.ndofs()];
        let d = fout_density(&p1, &lines, &c, 258.0, 1e-10).unwrap();
        let expected = -258.0 / (3.0 * 20.0);
        assert!(
            (d[0] - expected).abs() < 1e-10 * expected.abs(),
            "{} vs {expected}",
            d[0]
        );
        assert!((d[0] - d[1]).abs() < 1e-12);

        let zero = fout_density(&p1, &lines, &c, 0.0, 1e-10).unwrap();
        assert_eq!(zero, vec![0.0, 0.0]);

        let depleted = vec![0.0; p1.ndofs()];
        match fout_density(&p1, &lines, &depleted, 258.0, 1e-10) {
            Err(DarcyError::GasDepleted { pipe, .. }) => assert_eq!(pipe, 0),
            other => panic!("expected depletion error, got {other:?}"),
        }
    }

    #[test]
    fn invalid_weights_are_rejected() {
        let mesh = cube(1, 1.0);
        let space = Rt0P0Space::new(&mesh);
        for d1 in [0.0, 1.0, 1.5] {
            let params = DarcyParams {
                d1,
                ..DarcyParams::default()
            };
            assert!(matches!(
                DarcySolver::new(&space, params),
                Err(DarcyError::BadD1(_))
            ));
        }
        let params = DarcyParams {
            d2: -0.1,
            ..DarcyParams::default()
        };
        assert!(matches!(
            DarcySolver::new(&space, params),
            Err(DarcyError::BadWeights(..))
        ));
    }

    #[test]
    fn incompatible_source_is_absorbed_by_the_perturbation() {
        // With u.n = 0 everywhere, int div u = 0, so lambda int p must
        // equal int F.
        let mesh = cube(3, 1.0);
        let space = Rt0P0Space::new(&mesh);
        let solver = DarcySolver::new(&space, DarcyParams::default()).unwrap();
        let src = DarcySource::Volumetric(&|_| 1.0);
        let vp = solver.solve(&src).unwrap();
        let int_p: f64 = (0..mesh.ntets())
            .map(|k| vp.pressure[k] * mesh.tet_volume(k))
            .sum();
        let int_f = mesh.volume();
        assert!(
            (solver.lambda * int_p - int_f).abs() < 1e-8 * int_f,
            "lambda int p = {} vs int F = {int_f}",
            solver.lambda * int_p
        );
        assert!(solver.balance_residual(&vp, &src).abs() < 1e-8 * int_f);
        for &f in &space.boundary {
            assert_eq!(vp.fluxes[f], 0.0);
        }
    }

    #[test]
    fn curl_weight_has_no_effect_for_rt0() {
        let mesh = cube(2, 1.0);
        let space = Rt0P0Space::new(&mesh);
        let src = DarcySource::Volumetric(&|p: [f64; 3]| p[0] - p[2]);
        let solve = |d3: f64| {
            let params = DarcyParams {
                d3,
                ..DarcyParams::default()
            };
            DarcySolver::new(&space, params)
                .unwrap()
                .solve(&src)
                .unwrap()
        };
        let a = solve(0.0);
        let b = solve(0.5);
        for (x, y) in a.fluxes.iter().zip(&b.fluxes) {
            assert!((x - y).abs() < 1e-8);
        }
        for (x, y) in a.pressure.iter().zip(&b.pressure) {
            assert!((x - y).abs() < 1e-8);
        }
    }

    #[test]
    fn symmetric_part_is_positive_definite_on_small_mesh() {
        // Dense check of the constrained system on a mesh with < 200 dofs:
        // Cholesky of (A + A')/2 must succeed.
        let (verts, tets) = structured_tets([1, 2, 1], |x, y, z| [x, y * 2.0, z]);
        let mesh = classify_boundary(
            verts,
            tets,
            &GeometrySpec {
                base_side: 1.0,
                height: 1.0,
                wall_slope: 0.0,
                ..GeometrySpec::default()
            },
        )
        .unwrap();
        let space = Rt0P0Space::new(&mesh);
        let solver = DarcySolver::new(&space, DarcyParams::default()).unwrap();
        let n = solver.system.nrows();
        assert!(n <= 200, "test mesh too large: {n} dofs");
        let mut dense = vec![vec![0.0f64; n]; n];
        for r in 0..n {
            for (c, v) in solver.system.row(r) {
                dense[r][c] = v;
            }
        }
        let mut sym = vec![vec![0.0f64; n]; n];
        for i in 0..n {
            for j in 0..n {
                sym[i][j] = 0.5 * (dense[i][j] + dense[j][i]);
            }
        }
        // In-place Cholesky; fails on a non-positive pivot.
        for i in 0..n {
            for j in 0..=i {
                let mut s = sym[i][j];
                for k in 0..j {
                    s -= sym[i][k] * sym[j][k];
                }
                if i == j {
                    assert!(s > 0.0, "pivot {i} is {s:.3e}; symmetric part not PD");
                    sym[i][i] = s.sqrt();
                } else {
                    sym[i][j] = s / sym[j][j];
                }
            }
        }
    }
}
