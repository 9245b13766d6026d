//! Finite-element simulator for the anaerobic digestion of a bioreactor
//! landfill cell (alveolus).
//!
//! The model couples seven fields on a tetrahedral mesh of the alveolus:
//! organic carbon and bacteria (nonlinear reaction), temperature (heat
//! equation with reaction heating), a Darcy velocity for the gas mixture
//! (dual-mixed RT0/P0 with least-squares stabilization and line-source
//! extraction wells), advected gas species (methane, carbon dioxide, water
//! vapor, optionally oxygen and nitrogen) with SUPG stabilization, and
//! liquid water (advection-diffusion with line-source injectors and a
//! condensation exchange term).
//!
//! The crate is organized as a library plus a batch CLI. Entry points:
//!
//! * [`mesh`] — alveolus mesh generation, MSH 2.2 import/export,
//!   boundary classification, embedded pipe networks.
//! * [`linalg`] — CSR matrices, CG and BiCGStab with diagonal scaling.
//! * [`fem`] — P1 and RT0/P0 spaces, quadrature, assembly, line sources.
//! * [`reaction`], [`heat`], [`darcy`], [`transport`] — the physics steps.
//! * [`driver`] — scenario orchestration, JSON configuration, CSV/VTK output.

pub mod darcy;
pub mod driver;
pub mod fem;
pub mod geo;
pub mod heat;
pub mod linalg;
pub mod mesh;
pub mod reaction;
pub mod transport;
