//! Implicit-Euler heat equation with the reaction heating source.
//!
//! Each step solves (M + dt k_T K) T_{n+1} = M T_n - c_T M (C_{n+1} - C_n)
//! with temperature pinned to the membrane value on the top boundary and
//! to the ground value on the bottom and lateral boundaries. Dirichlet
//! data enters by symmetric elimination with lifting, so the system stays
//! SPD and is solved with Jacobi-scaled CG.

use crate::fem::P1Space;
use crate::linalg::{self, LinalgError, SolveReport, SparseMatrix};
use crate::mesh::BoundaryLabel;

#[derive(Debug, Clone, Copy)]
pub struct HeatParams {
    /// Thermal diffusivity (m^2/day).
    pub k_t: f64,
    /// Heating per unit consumed carbon (K).
    pub c_t: f64,
    /// Membrane (top) temperature (K).
    pub t_m: f64,
    /// Ground temperature (K).
    pub t_g: f64,
    /// Initial temperature (K).
    pub t0: f64,
}

impl Default for HeatParams {
    fn default() -> Self {
        HeatParams {
            k_t: 9e-2,
            c_t: 1e2,
            t_m: 293.0,
            t_g: 278.0,
            t0: 293.0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum HeatError {
    #[error("heat solve failed: {0}")]
    Solver(#[from] LinalgError),
    #[error("heat solve did not converge: residual {residual:.3e} after {iterations} iterations")]
    NotConverged { residual: f64, iterations: usize },
}

/// Reusable implicit-Euler operator for one diffusivity, time step and
/// Dirichlet dof set. Boundary values may vary per step.
pub struct HeatOperator<'m, 'a> {
    pub space: &'a P1Space<'m>,
    pub mass: SparseMatrix,
    system: SparseMatrix,
    original: SparseMatrix,
    pub bc_dofs: Vec<usize>,
    pub dt: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl<'m, 'a> HeatOperator<'m, 'a> {
    pub fn new(space: &'a P1Space<'m>, k_t: f64, dt: f64, bc_dofs: Vec<usize>, tol: f64) -> Self {
        let mass = space.assemble_mass(1.0);
        let stiffness = space.assemble_stiffness(k_t);
        let original = SparseMatrix::linear_combination(&[(1.0, &mass), (dt, &stiffness)])
            .with_symmetry(crate::linalg::Symmetry::SymmetricPositive);
        let mut system = original.clone();
        let mut dummy = vec![0.0; space.ndofs()];
        let constraints: Vec<(usize, f64)> = bc_dofs.iter().map(|&d| (d, 0.0)).collect();
        system.apply_dirichlet(&mut dummy, &constraints);
        HeatOperator {
            space,
            mass,
            system,
            original,
            bc_dofs,
            dt,
            tol,
            max_iter: 10_000,
        }
    }

    /// Advances one step: `source_load` is the assembled load added to
    /// M T_n, `bc_values` the Dirichlet values (parallel to `bc_dofs`).
    pub fn step(
        &self,
        t_n: &[f64],
        source_load: &[f64],
        bc_values: &[f64],
    ) -> Result<(Vec<f64>, SolveReport), HeatError> {
        let n = self.space.ndofs();
        let mut rhs = self.mass.matvec_alloc(t_n);
        for (r, s) in rhs.iter_mut().zip(source_load) {
            *r += s;
        }
        // Lifting: move the constrained columns of the unmodified matrix
        // to the right-hand side.
        let mut lift_in = vec![0.0; n];
        for (&dof, &val) in self.bc_dofs.iter().zip(bc_values) {
            lift_in[dof] = val;
        }
        let lift = self.original.matvec_alloc(&lift_in);
        for i in 0..n {
            rhs[i] -= lift[i];
        }
        for (&dof, &val) in self.bc_dofs.iter().zip(bc_values) {
            rhs[dof] = val;
        }
        let (x, report) = linalg::cg_solve_jacobi(&self.system, &rhs, self.tol, self.max_iter)?;
        if !report.converged {
            return Err(HeatError::NotConverged {
                residual: report.residual,
                iterations: report.iterations,
            });
        }
        Ok((x, report))
    }
}

/// The production stepper: membrane temperature on TOP, ground
/// temperature on BOTTOM and LATERAL (ground wins on shared rim nodes),
/// heating source -c_T M (C_{n+1} - C_n).
pub struct HeatStepper<'m, 'a> {
    pub op: HeatOperator<'m, 'a>,
    pub params: HeatParams,
    bc_values: Vec<f64>,
}

impl<'m, 'a> HeatStepper<'m, 'a> {
    pub fn new(space: &'a P1Space<'m>, params: HeatParams, dt: f64, tol: f64) -> Self {
        let top: std::collections::HashSet<usize> = space
            .label_dofs(&[BoundaryLabel::Top])
            .into_iter()
            .collect();
        let ground: std::collections::HashSet<usize> = space
            .label_dofs(&[BoundaryLabel::Bottom, BoundaryLabel::Lateral])
            .into_iter()
            .collect();
        let mut bc_dofs: Vec<usize> = top.union(&ground).cloned().collect();
        bc_dofs.sort_unstable();
        let bc_values = bc_dofs
            .iter()
            .map(|d| {
                if ground.contains(d) {
                    params.t_g
                } else {
                    params.t_m
                }
            })
            .collect();
        let op = HeatOperator::new(space, params.k_t, dt, bc_dofs, tol);
        HeatStepper {
            op,
            params,
            bc_values,
        }
    }

    /// Assembled heating load: -c_T M (C_{n+1} - C_n); entries are
    /// nonnegative wherever carbon decreased.
    pub fn source_load(&self, corg_next: &[f64], corg_n: &[f64]) -> Vec<f64> {
        let delta: Vec<f64> = corg_next
            .iter()
            .zip(corg_n)
            .map(|(a, b)| -(a - b) * self.params.c_t)
            .collect();
        self.op.mass.matvec_alloc(&delta)
    }

    pub fn step(
        &self,
        t_n: &[f64],
        corg_next: &[f64],
        corg_n: &[f64],
    ) -> Result<(Vec<f64>, SolveReport), HeatError> {
        let load = self.source_load(corg_next, corg_n);
        self.op.step(t_n, &load, &self.bc_values)
    }
}
