//! SUPG-stabilized transport: pure advection of the gas species (methane,
//! carbon dioxide, water vapor, optionally oxygen and nitrogen) by the
//! Darcy velocity, advection-diffusion of liquid water by the gravity
//! drift, and the phase-transition laws coupling vapor and liquid water.
//!
//! Every transported field G solves, per implicit-Euler step,
//!
//! ```text
//! int phi G_{n+1} (dG + d u.grad dG)
//!   + dt int (u.grad G_{n+1}) (dG + d u.grad dG)
//!   = int phi G_n (dG + d u.grad dG) + source terms
//! ```
//!
//! with d the SUPG parameter max_K l_K / (2 ||u||), ||u|| the RMS velocity
//! magnitude over the domain (constant in space and time; d = 0 when the
//! velocity vanishes, falling back to plain Galerkin). The liquid-water
//! step adds dt k_w grad-grad; the Laplacian part of its streamline
//! residual vanishes elementwise for P1 and is not reconstructed.

use crate::fem::{P1Space, Velocity};
use crate::linalg::{self, LinalgError, SolveReport, SparseMatrix};
use crate::mesh::Mesh;

/// Gas production constants and initial concentrations.
#[derive(Debug, Clone, Copy)]
pub struct GasParams {
    /// Methane produced per unit consumed carbon.
    pub c_m: f64,
    /// Carbon dioxide produced per unit consumed carbon.
    pub c_c: f64,
    /// Water vapor produced per unit consumed carbon.
    pub c_h: f64,
    pub m0: f64,
    pub cdx0: f64,
    pub o0: f64,
    pub n0: f64,
    pub h0: f64,
}

impl Default for GasParams {
    fn default() -> Self {
        GasParams {
            c_m: 1.8e7,
            c_c: 2.6e7,
            c_h: 2.5e6,
            m0: 1.0,
            cdx0: 1.0,
            o0: 0.0,
            n0: 0.0,
            h0: 1.0,
        }
    }
}

/// Liquid-water transport constants.
#[derive(Debug, Clone, Copy)]
pub struct WaterParams {
    /// Magnitude of the downward drift (m/day); the velocity is
    /// (0, 0, -u_w).
    pub u_w: f64,
    /// Isotropic diffusion (m^2/day).
    pub k_w: f64,
    /// Injection rate per injector pipe (m^3/day).
    pub j_in: f64,
    /// Initial liquid water (kg/m^3).
    pub w0: f64,
}

impl Default for WaterParams {
    fn default() -> Self {
        WaterParams {
            u_w: 2.1,
            k_w: 8.6e-2,
            j_in: 258.0,
            w0: 50.0,
        }
    }
}

/// Phase-transition constants: saturation pressure laws and exchange
/// rates. Evaporation is disabled by default (c_wh = 0).
#[derive(Debug, Clone, Copy)]
pub struct PhaseParams {
    /// Rankine reference pressure (Pa).
    pub p0: f64,
    pub s0: f64,
    /// Rankine temperature constant (K).
    pub s1: f64,
    /// Linear-law offset (Pa).
    pub h0_lin: f64,
    /// Linear-law slope (Pa/K).
    pub h1_lin: f64,
    /// Condensation rate (1/day).
    pub c_hw: f64,
    /// Evaporation rate (1/day); 0 disables evaporation.
    pub c_wh: f64,
    /// Reference pressure in the saturation threshold (Pa); physical
    /// atmospheric pressure by default.
    pub p_ref: f64,
}

impl Default for PhaseParams {
    fn default() -> Self {
        PhaseParams {
            p0: 133.322,
            s0: 20.386,
            s1: 5132.0,
            h0_lin: -9.56e4,
            h1_lin: 337.89,
            c_hw: 1e-1,
            c_wh: 0.0,
            p_ref: 1.013e5,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TransportError {
    #[error("temperature must be positive for the saturation law, got {0} K")]
    NonPositiveTemperature(f64),
    #[error("transport solve failed: {0}")]
    Solver(#[from] LinalgError),
    #[error("transport solve stalled: residual {residual:.3e} after {iterations} iterations")]
    NotConverged { residual: f64, iterations: usize },
}

/// Saturation vapor pressure by the Rankine law p0 exp(s0 - s1/T).
pub fn vapor_pressure_rankine(t: f64, phase: &PhaseParams) -> Result<f64, TransportError> {
    if t <= 0.0 {
        return Err(TransportError::NonPositiveTemperature(t));
    }
    Ok(phase.p0 * (phase.s0 - phase.s1 / t).exp())
}

/// Linearized saturation pressure H0 + H1 T.
pub fn vapor_pressure_linear(t: f64, phase: &PhaseParams) -> f64 {
    phase.h0_lin + phase.h1_lin * t
}

/// Nodewise saturation threshold for the vapor concentration:
/// c_tot (H0 + H1 T) / p_ref. Above it the air is saturated and vapor
/// condenses.
pub fn saturation_threshold(phase: &PhaseParams, c_tot: &[f64], t: &[f64]) -> Vec<f64> {
    c_tot
        .iter()
        .zip(t)
        .map(|(&c, &tk)| c * vapor_pressure_linear(tk, phase) / phase.p_ref)
        .collect()
}

/// Condensation source c_hw max(h - H, 0); nonnegative.
pub fn condensation_rate(phase: &PhaseParams, h: &[f64], threshold: &[f64]) -> Vec<f64> {
    h.iter()
        .zip(threshold)
        .map(|(&hv, &th)| phase.c_hw * (hv - th).max(0.0))
        .collect()
}

/// Evaporation source c_wh max(H - h, 0) w; zero when disabled.
pub fn evaporation_rate(phase: &PhaseParams, h: &[f64], threshold: &[f64], w: &[f64]) -> Vec<f64> {
    h.iter()
        .zip(threshold)
        .zip(w)
        .map(|((&hv, &th), &wv)| phase.c_wh * (th - hv).max(0.0) * wv)
        .collect()
}

/// Velocity norm below which stabilization is switched off.
pub const SUPG_VELOCITY_FLOOR: f64 = 1e-12;

/// SUPG parameter: max element diameter over twice the RMS velocity
/// magnitude; 0 for a vanishing velocity (plain Galerkin).
pub fn supg_tau<V: Velocity>(mesh: &Mesh, vel: &V) -> f64 {
    let rms = vel.rms(mesh);
    if rms < SUPG_VELOCITY_FLOOR {
        0.0
    } else {
        mesh.max_diameter() / (2.0 * rms)
    }
}

/// Assembled implicit step for one advected species family sharing a
/// velocity field: system phi (M + d S) + dt (C + d D), right-hand sides
/// built from the SUPG-extended test matrix M + d S.
pub struct GasStepper {
    system: SparseMatrix,
    /// M + d S: tests a nodal field with (dG + d u.grad dG).
    test_ext: SparseMatrix,
    pub tau: f64,
    pub phi: f64,
    pub dt: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl GasStepper {
    pub fn new<V: Velocity>(
        space: &P1Space,
        vel: &V,
        tau: f64,
        phi: f64,
        dt: f64,
        quad_degree: usize,
        tol: f64,
    ) -> Self {
        let mass = space.assemble_mass(1.0);
        let parts = space.assemble_advection_parts(vel, quad_degree);
        let test_ext =
            SparseMatrix::linear_combination(&[(1.0, &mass), (tau, &parts.streamline_mass)]);
        let system = SparseMatrix::linear_combination(&[
            (phi, &test_ext),
            (dt, &parts.advection),
            (dt * tau, &parts.streamline_diffusion),
        ]);
        GasStepper {
            system,
            test_ext,
            tau,
            phi,
            dt,
            tol,
            max_iter: 100_000,
        }
    }

    /// Tests a nodal field against (dG + d u.grad dG): the building block
    /// of every source term.
    pub fn tested_load(&self, field: &[f64]) -> Vec<f64> {
        self.test_ext.matvec_alloc(field)
    }

    /// Advances one step; `source_load` is the fully scaled right-hand
    /// side contribution beyond phi (M + dS) G_n.
    pub fn step(
        &self,
        g_n: &[f64],
        source_load: Option<&[f64]>,
    ) -> Result<(Vec<f64>, SolveReport), TransportError> {
        let mut rhs = self.test_ext.matvec_alloc(g_n);
        for v in rhs.iter_mut() {
            *v *= self.phi;
        }
        if let Some(load) = source_load {
            for (r, s) in rhs.iter_mut().zip(load) {
                *r += s;
            }
        }
        let (x, report) =
            linalg::bicgstab_solve_jacobi(&self.system, &rhs, self.tol, self.max_iter)?;
        if !report.converged {
            return Err(TransportError::NotConverged {
                residual: report.residual,
                iterations: report.iterations,
            });
        }
        Ok((x, report))
    }

    /// The assembled system matrix (diagnostics and stabilization
    /// regression tests).
    pub fn system(&self) -> &SparseMatrix {
        &self.system
    }
}

/// Implicit advection-diffusion step for liquid water: downward constant
/// drift, isotropic diffusion, natural (zero-flux) boundary conditions on
/// the whole boundary, so no constraint rows.
pub struct WaterStepper {
    gas: GasStepper,
}

impl WaterStepper {
    pub fn new(
        space: &P1Space,
        water: &WaterParams,
        phi: f64,
        dt: f64,
        quad_degree: usize,
        tol: f64,
    ) -> Self {
        let vel = crate::fem::ConstVelocity([0.0, 0.0, -water.u_w]);
        let tau = supg_tau(space.mesh, &vel);
        let mut gas = GasStepper::new(space, &vel, tau, phi, dt, quad_degree, tol);
        let stiffness = space.assemble_stiffness(water.k_w);
        gas.system = SparseMatrix::linear_combination(&[(1.0, &gas.system), (dt, &stiffness)]);
        WaterStepper { gas }
    }

    pub fn tau(&self) -> f64 {
        self.gas.tau
    }

    pub fn tested_load(&self, field: &[f64]) -> Vec<f64> {
        self.gas.tested_load(field)
    }

    pub fn step(
        &self,
        w_n: &[f64],
        source_load: Option<&[f64]>,
    ) -> Result<(Vec<f64>, SolveReport), TransportError> {
        self.gas.step(w_n, source_load)
    }

    pub fn system(&self) -> &SparseMatrix {
        self.gas.system()
    }
}
