//! Scenario orchestration: the explicit coupling loop.
//!
//! Per step, in order: (1) semi-implicit carbon using the level-n water
//! and temperature; (2) heat, sourced by the just-computed carbon
//! increment; (3) the velocity solve from the level-n gas state (full
//! scenario); (4) SUPG advection of methane, carbon dioxide and vapor
//! (oxygen/nitrogen behind a flag); (5) phase sources and the liquid
//! water step. All cross-equation sources other than the carbon
//! increment in the heat equation are taken from the previous level.

use super::config::{AlphaUnit, Scenario, ScenarioConfig};
use super::output::{
    self, OutputError, Record, StepDiagnostics, TimeSeries,
};
use crate::darcy::{self, DarcySolver, DarcySource};
use crate::fem::{FemError, P1Space, Rt0P0Space, Rt0Velocity, SampledLine};
use crate::heat::HeatStepper;
use crate::mesh::{
    generate_alveolus, read_msh, GeometrySpec, Locator, Mesh, MeshError, MshError, Pipe,
    PipeNetwork, PipeRole,
};
use crate::reaction::{self, ReactionOptions};
use crate::transport::{
    condensation_rate, evaporation_rate, saturation_threshold, supg_tau, GasStepper, WaterStepper,
};
use std::collections::BTreeMap;

/// Nodal fields of one time level, plus the last computed velocity
/// (facet fluxes) and cell pressures.
#[derive(Debug, Clone)]
pub struct FieldState {
    pub corg: Vec<f64>,
    pub b: Vec<f64>,
    pub temp: Vec<f64>,
    pub m: Vec<f64>,
    pub cdx: Vec<f64>,
    pub o: Vec<f64>,
    pub n: Vec<f64>,
    pub h: Vec<f64>,
    pub w: Vec<f64>,
    pub pressure: Vec<f64>,
    pub fluxes: Vec<f64>,
}

impl FieldState {
    pub fn initial(config: &ScenarioConfig, nverts: usize) -> FieldState {
        let p = &config.params;
        let uniform = |v: f64| vec![v; nverts];
        let (w_init, t_init) = match config.scenario {
            Scenario::CarbonOnly => (p.reaction.w_max / 2.0, p.reaction.t_opt),
            Scenario::CoupledCarbonHeat => (p.reaction.w_max / 2.0, p.heat.t0),
            _ => (p.water.w0, p.heat.t0),
        };
        let corg = uniform(p.reaction.corg0);
        let b = reaction::bacteria_of(&p.reaction, &corg);
        FieldState {
            corg,
            b,
            temp: uniform(t_init),
            m: uniform(p.gas.m0),
            cdx: uniform(p.gas.cdx0),
            o: uniform(p.gas.o0),
            n: uniform(p.gas.n0),
            h: uniform(p.gas.h0),
            w: uniform(w_init),
            pressure: Vec::new(),
            fluxes: Vec::new(),
        }
    }

    fn c_tot(&self) -> Vec<f64> {
        (0..self.corg.len())
            .map(|i| self.cdx[i] + self.m[i] + self.o[i] + self.n[i] + self.h[i])
            .collect()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("mesh construction failed: {0}")]
    Mesh(#[from] MeshError),
    #[error("mesh file error: {0}")]
    Msh(#[from] MshError),
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("output failed: {0}")]
    Output(#[from] OutputError),
    #[error("well discretization failed: {0}")]
    Fem(#[from] FemError),
    #[error("step {step} ({phase}): {message}")]
    Step {
        step: usize,
        phase: &'static str,
        message: String,
    },
    #[error("checkpoint state has {got} nodes but the mesh has {want}")]
    CheckpointMismatch { got: usize, want: usize },
}

impl RunError {
    /// Failures of the time loop (solver trouble) versus setup problems;
    /// the CLI maps these to different exit codes.
    pub fn is_solver_failure(&self) -> bool {
        matches!(self, RunError::Step { .. })
    }
}

pub struct RunOutput {
    pub series: TimeSeries,
    pub final_state: FieldState,
    pub t_final: f64,
    pub steps_done: usize,
}

/// Loads or generates the mesh and pipe networks of a configuration.
pub fn build_domain(config: &ScenarioConfig) -> Result<(Mesh, PipeNetwork), RunError> {
    match &config.mesh_path {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| RunError::Io {
                path: path.display().to_string(),
                source,
            })?;
            let mesh = read_msh(&text, &config.boundary_tags)?;
            let pipes = pipes_from_spec(&config.geometry)?;
            pipes.validate(&mesh)?;
            Ok((mesh, pipes))
        }
        None => Ok(generate_alveolus(&config.geometry)?),
    }
}

fn pipes_from_spec(spec: &GeometrySpec) -> Result<PipeNetwork, MeshError> {
    // Reuse the generator's pipe placement without rebuilding the mesh.
    let (_, pipes) = generate_alveolus(&GeometrySpec {
        // One cell is enough; only the pipe plan is kept.
        target_mesh_size: spec.base_side.max(spec.height),
        ..spec.clone()
    })?;
    Ok(pipes)
}

/// The exponential carbon profile of the heat-given-carbon scenario.
/// When no explicit rate is configured, the rate is fitted so the profile
/// ends at the carbon-only recurrence end value.
pub fn hgc_alpha_per_day(config: &ScenarioConfig) -> f64 {
    match (config.hgc.alpha, config.hgc.alpha_unit) {
        (Some(a), AlphaUnit::PerDay) => a,
        (Some(a), AlphaUnit::PerYear) => a / 365.0,
        (None, _) => {
            let end = carbon_recurrence_end(config);
            -(end / config.params.reaction.corg0).ln() / config.s_fin_days
        }
    }
}

/// Scalar carbon recurrence under optimal conditions (uniform fields),
/// mirroring the discrete scheme including the first-step bootstrap.
pub fn carbon_recurrence(config: &ScenarioConfig) -> Vec<f64> {
    let p = &config.params.reaction;
    let dt = config.dt_days;
    let w = p.w_max / 2.0;
    let t = p.t_opt;
    let mut values = Vec::with_capacity(config.nsteps() + 1);
    let mut c = p.corg0;
    values.push(c);
    for step in 0..config.nsteps() {
        c = if step == 0 && config.solver.bootstrap_first_step {
            let predictor = reaction::carbon_update(p, c, c, w, t, dt);
            reaction::carbon_update(p, c, predictor, w, t, dt)
        } else {
            reaction::carbon_update(p, c, c, w, t, dt)
        };
        values.push(c);
    }
    values
}

pub fn carbon_recurrence_end(config: &ScenarioConfig) -> f64 {
    *carbon_recurrence(config).last().unwrap()
}

fn step_err<E: std::fmt::Display>(step: usize, phase: &'static str) -> impl FnOnce(E) -> RunError {
    move |e| RunError::Step {
        step,
        phase,
        message: e.to_string(),
    }
}

/// Runs a configuration end to end, writing the configured outputs.
pub fn run(config: &ScenarioConfig) -> Result<RunOutput, RunError> {
    let (mesh, pipes) = build_domain(config)?;
    run_on_mesh(config, &mesh, &pipes, None)
}

/// Runs on a prebuilt domain, optionally resuming from a checkpointed
/// state at (t, step).
pub fn run_on_mesh(
    config: &ScenarioConfig,
    mesh: &Mesh,
    pipes: &PipeNetwork,
    resume: Option<(FieldState, f64, usize)>,
) -> Result<RunOutput, RunError> {
    let space = P1Space::new(mesh);
    let locator = Locator::new(mesh);
    let nverts = mesh.nvertices();
    let p = &config.params;
    let dt = config.dt_days;
    let tol = config.solver.tol;

    let reaction_opts = ReactionOptions {
        consistent_mass: config.solver.consistent_mass,
        quadrature_degree: 4,
        solver_tol: tol.min(1e-12),
        solver_max_iter: config.solver.max_iter,
    };

    let needs_heat = matches!(
        config.scenario,
        Scenario::HeatGivenCarbon | Scenario::CoupledCarbonHeat | Scenario::Full
    ) && !config.solver.freeze_temperature;
    let heat = needs_heat.then(|| HeatStepper::new(&space, p.heat, dt, tol));

    let full = config.scenario == Scenario::Full;
    let rt0 = full.then(|| Rt0P0Space::new(mesh));
    let darcy_solver = match &rt0 {
        Some(space_rt0) => {
            Some(DarcySolver::new(space_rt0, p.darcy).map_err(step_err(0, "darcy setup"))?)
        }
        None => None,
    };

    let sample =
        |pipe: &Pipe| -> Result<SampledLine, FemError> {
            SampledLine::new(mesh, &locator, &pipe.polyline)
        };
    let (extractor_lines, injector_data): (Vec<SampledLine>, Vec<(SampledLine, f64)>) = if full {
        let mut ex = Vec::new();
        for pipe in pipes.pipes.iter().filter(|p| p.role == PipeRole::Extractor) {
            ex.push(sample(pipe)?);
        }
        let mut inj = Vec::new();
        for pipe in pipes.pipes.iter().filter(|p| p.role == PipeRole::Injector) {
            inj.push((sample(pipe)?, pipe.length));
        }
        (ex, inj)
    } else {
        (Vec::new(), Vec::new())
    };

    let water = (full && !config.solver.freeze_water).then(|| {
        WaterStepper::new(
            &space,
            &p.water,
            p.reaction.phi,
            dt,
            config.solver.quadrature_degree,
            tol,
        )
    });
    // Injector load (Galerkin + streamline parts) is constant in time.
    let injector_load: Vec<f64> = match &water {
        Some(stepper) => {
            let vel = crate::fem::ConstVelocity([0.0, 0.0, -p.water.u_w]);
            let mut load = vec![0.0; nverts];
            for (line, length) in &injector_data {
                let density = p.water.j_in / length;
                let galerkin = line.p1_load(&space, &locator, |_| density, p.r_moll);
                let streamline = line.p1_streamline_load(&space, |_| density, &vel, stepper.tau());
                for i in 0..nverts {
                    load[i] += galerkin[i] + streamline[i];
                }
            }
            load
        }
        None => Vec::new(),
    };

    let hgc_alpha = (config.scenario == Scenario::HeatGivenCarbon).then(|| hgc_alpha_per_day(config));

    let (mut state, t0, step0) = match resume {
        Some((state, t, step)) => {
            if state.corg.len() != nverts {
                return Err(RunError::CheckpointMismatch {
                    got: state.corg.len(),
                    want: nverts,
                });
            }
            (state, t, step)
        }
        None => (FieldState::initial(config, nverts), 0.0, 0),
    };

    // Map snapshot times onto step indices (nearest step).
    let mut snapshot_steps: BTreeMap<usize, f64> = BTreeMap::new();
    for &t in &config.output.vtk_times_days {
        snapshot_steps.insert((t / dt).round() as usize, t);
    }

    let mut series = TimeSeries::default();
    if step0 == 0 {
        series
            .records
            .push(make_record(&space, &state, t0, 0));
        series.diagnostics.push(StepDiagnostics::default());
        if let Some(&t) = snapshot_steps.get(&0) {
            write_snapshot(config, mesh, &state, rt0.as_ref(), t)?;
        }
    }

    let nsteps = config.nsteps();
    let mut t = t0;
    let mut result: Result<(), RunError> = Ok(());
    let mut steps_done = step0;
    for step in step0..nsteps {
        match advance(
            config,
            mesh,
            &space,
            &locator,
            &reaction_opts,
            heat.as_ref(),
            rt0.as_ref(),
            darcy_solver.as_ref(),
            water.as_ref(),
            &extractor_lines,
            &injector_load,
            hgc_alpha,
            &mut state,
            t,
            step,
        ) {
            Ok((iters, diag)) => {
                t += dt;
                steps_done = step + 1;
                series.records.push(make_record(&space, &state, t, iters));
                series.diagnostics.push(diag);
                if let Some(&snap_t) = snapshot_steps.get(&(step + 1)) {
                    write_snapshot(config, mesh, &state, rt0.as_ref(), snap_t)?;
                }
            }
            Err(e) => {
                result = Err(e);
                break;
            }
        }
    }

    // Flush the (possibly partial) series before reporting errors.
    if let Some(csv) = &config.output.csv_path {
        series.write_csv(csv)?;
    }
    result?;
    if let Some(path) = &config.output.checkpoint_path {
        output::write_checkpoint(mesh, &state, rt0.as_ref(), t, steps_done, path)?;
    }
    Ok(RunOutput {
        series,
        final_state: state,
        t_final: t,
        steps_done,
    })
}

#[allow(clippy::too_many_arguments)]
fn advance(
    config: &ScenarioConfig,
    mesh: &Mesh,
    space: &P1Space,
    locator: &Locator,
    reaction_opts: &ReactionOptions,
    heat: Option<&HeatStepper>,
    rt0: Option<&Rt0P0Space>,
    darcy_solver: Option<&DarcySolver>,
    water: Option<&WaterStepper>,
    extractor_lines: &[SampledLine],
    injector_load: &[f64],
    hgc_alpha: Option<f64>,
    state: &mut FieldState,
    t: f64,
    step: usize,
) -> Result<(u64, StepDiagnostics), RunError> {
    let p = &config.params;
    let dt = config.dt_days;
    let mut iters: u64 = 0;

    // (1) Carbon.
    let corg_n = state.corg.clone();
    let (corg_next, diag) = match hgc_alpha {
        Some(alpha) => {
            let value = p.reaction.corg0 * (-alpha * (t + dt)).exp();
            (vec![value; corg_n.len()], StepDiagnostics::default())
        }
        None => {
            let next = if step == 0 && config.solver.bootstrap_first_step {
                reaction::step_carbon_first(
                    space,
                    &p.reaction,
                    reaction_opts,
                    &corg_n,
                    &state.w,
                    &state.temp,
                    dt,
                )
            } else {
                reaction::step_carbon(
                    space,
                    &p.reaction,
                    reaction_opts,
                    &corg_n,
                    &state.w,
                    &state.temp,
                    dt,
                )
            }
            .map_err(step_err(step, "carbon"))?;
            let mut diag = StepDiagnostics::default();
            for i in 0..corg_n.len() {
                if reaction::psi2(state.temp[i], p.reaction.t_opt, p.reaction.a_t) == 0.0 {
                    diag.psi2_frozen_nodes += 1;
                    diag.frozen_max_dcorg = diag.frozen_max_dcorg.max((next[i] - corg_n[i]).abs());
                }
            }
            (next, diag)
        }
    };
    let b_next = reaction::bacteria_of(&p.reaction, &corg_next);

    // (2) Heat, sourced by the current carbon increment.
    let temp_next = match heat {
        Some(stepper) => {
            let (temp, report) = stepper
                .step(&state.temp, &corg_next, &corg_n)
                .map_err(step_err(step, "heat"))?;
            iters += report.iterations as u64;
            temp
        }
        None => state.temp.clone(),
    };

    // (3) Velocity from the level-n gas state.
    if let (Some(rt0), Some(solver)) = (rt0, darcy_solver) {
        let c_tot = state.c_tot();
        let line_refs: Vec<&SampledLine> = extractor_lines.iter().collect();
        let densities = darcy::fout_density(
            space,
            &line_refs,
            &c_tot,
            p.darcy.j_out,
            p.darcy.depletion_floor,
        )
        .map_err(step_err(step, "extraction"))?;
        let source = DarcySource::Lines {
            lines: &line_refs,
            densities: &densities,
            moll: Some((locator, p.r_moll)),
        };
        let vp = solver.solve(&source).map_err(step_err(step, "darcy"))?;
        iters += vp.report.iterations as u64;
        state.fluxes = vp.fluxes;
        state.pressure = vp.pressure;

        // (4) Gas transport. All species share the system matrix.
        let vel = Rt0Velocity {
            space: rt0,
            dofs: &state.fluxes,
        };
        let tau = supg_tau(mesh, &vel);
        let gas_stepper = GasStepper::new(
            space,
            &vel,
            tau,
            p.reaction.phi,
            dt,
            config.solver.quadrature_degree,
            config.solver.tol,
        );
        let dcorg: Vec<f64> = corg_next
            .iter()
            .zip(&corg_n)
            .map(|(a, b)| a - b)
            .collect();
        let carbon_load = |c_j: f64| -> Vec<f64> {
            let field: Vec<f64> = dcorg.iter().map(|&d| -c_j * d).collect();
            gas_stepper.tested_load(&field)
        };
        let mut solve_species =
            |name: &'static str, g: &[f64], load: Option<Vec<f64>>| -> Result<Vec<f64>, RunError> {
                let (next, report) = gas_stepper
                    .step(g, load.as_deref())
                    .map_err(step_err(step, name))?;
                iters += report.iterations as u64;
                Ok(next)
            };

        let threshold = saturation_threshold(&p.phase, &state.c_tot(), &state.temp);
        let f_cond = condensation_rate(&p.phase, &state.h, &threshold);
        let f_evap = evaporation_rate(&p.phase, &state.h, &threshold, &state.w);
        let exchange: Vec<f64> = f_cond.iter().zip(&f_evap).map(|(c, e)| c - e).collect();

        let m_next = solve_species("methane", &state.m, Some(carbon_load(p.gas.c_m)))?;
        let cdx_next = solve_species("carbon dioxide", &state.cdx, Some(carbon_load(p.gas.c_c)))?;
        let (o_next, n_next) = if config.solver.transport_oxygen_nitrogen {
            (
                solve_species("oxygen", &state.o, None)?,
                solve_species("nitrogen", &state.n, None)?,
            )
        } else {
            (state.o.clone(), state.n.clone())
        };
        let vapor_load = {
            let mut load = carbon_load(p.gas.c_h);
            let tested = gas_stepper.tested_load(&exchange);
            for (l, v) in load.iter_mut().zip(&tested) {
                *l -= dt * v;
            }
            load
        };
        let h_next = solve_species("water vapor", &state.h, Some(vapor_load))?;

        // (5) Liquid water.
        if let Some(stepper) = water {
            let mut load = stepper.tested_load(&exchange);
            for (l, inj) in load.iter_mut().zip(injector_load) {
                *l = dt * (*l + inj);
            }
            let (w_next, report) = stepper
                .step(&state.w, Some(&load))
                .map_err(step_err(step, "liquid water"))?;
            iters += report.iterations as u64;
            state.w = w_next;
        }

        state.m = m_next;
        state.cdx = cdx_next;
        state.o = o_next;
        state.n = n_next;
        state.h = h_next;
    }

    state.corg = corg_next;
    state.b = b_next;
    state.temp = temp_next;
    Ok((iters, diag))
}

fn make_record(space: &P1Space, state: &FieldState, t: f64, iters: u64) -> Record {
    let volume = space.mesh.volume();
    let min = |f: &[f64]| f.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = |f: &[f64]| f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Record {
        t_days: t,
        corg_total: space.integrate(&state.corg),
        b_total: space.integrate(&state.b),
        t_mean_k: space.integrate(&state.temp) / volume,
        t_max_k: max(&state.temp),
        m_total: space.integrate(&state.m),
        cdx_total: space.integrate(&state.cdx),
        h_total: space.integrate(&state.h),
        w_total: space.integrate(&state.w),
        min_corg: min(&state.corg),
        min_m: min(&state.m),
        min_cdx: min(&state.cdx),
        min_h: min(&state.h),
        min_w: min(&state.w),
        cg_iters_total: iters,
    }
}

fn write_snapshot(
    config: &ScenarioConfig,
    mesh: &Mesh,
    state: &FieldState,
    rt0: Option<&Rt0P0Space>,
    t: f64,
) -> Result<(), RunError> {
    let path = config
        .output
        .out_dir
        .join(format!("snapshot_t{t}d.vtk"));
    output::write_vtk(mesh, state, rt0, &path)?;
    Ok(())
}
