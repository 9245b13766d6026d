//! JSON configuration: every physical constant is optional and defaults
//! to the built-in parameter set; unknown keys are rejected and errors
//! carry the JSON path of the offending field.

use crate::darcy::DarcyParams;
use crate::heat::HeatParams;
use crate::mesh::{BoundaryLabel, GeometrySpec, TagTable};
use crate::reaction::ReactionParams;
use crate::transport::{GasParams, PhaseParams, WaterParams};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Scenario {
    /// Carbon consumption only; water and temperature pinned at their
    /// optimal values.
    CarbonOnly,
    /// Heat driven by a prescribed exponential carbon profile.
    HeatGivenCarbon,
    /// Carbon and heat coupled; water pinned.
    CoupledCarbonHeat,
    /// All seven fields.
    Full,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config parse error at {path}: {message}")]
    Json { path: String, message: String },
    #[error("invalid config: {0}")]
    Validation(String),
}

/// Raw JSON schema. All sections and fields are optional.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct ConfigFile {
    scenario: Option<Scenario>,
    dt_days: Option<f64>,
    s_fin_days: Option<f64>,
    geometry: Option<GeometrySpec>,
    mesh_path: Option<PathBuf>,
    /// Physical-tag table for external meshes: tag number -> label name.
    boundary_tags: Option<BTreeMap<String, String>>,
    params: ParamOverrides,
    solver: SolverOverrides,
    output: OutputOverrides,
    heat_given_carbon: HgcOverrides,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct ParamOverrides {
    phi: Option<f64>,
    a_b: Option<f64>,
    c_b: Option<f64>,
    b0: Option<f64>,
    corg0: Option<f64>,
    w_max: Option<f64>,
    t_opt: Option<f64>,
    a_t: Option<f64>,
    k_t: Option<f64>,
    c_t: Option<f64>,
    t_m: Option<f64>,
    t_g: Option<f64>,
    t0: Option<f64>,
    c_m: Option<f64>,
    c_c: Option<f64>,
    c_h: Option<f64>,
    m0: Option<f64>,
    cdx0: Option<f64>,
    o0: Option<f64>,
    n0: Option<f64>,
    h0: Option<f64>,
    u_w: Option<f64>,
    k_w: Option<f64>,
    w0: Option<f64>,
    j_in: Option<f64>,
    j_out: Option<f64>,
    c_hw: Option<f64>,
    c_wh: Option<f64>,
    p_ref: Option<f64>,
    vp_p0: Option<f64>,
    vp_s0: Option<f64>,
    vp_s1: Option<f64>,
    vp_h0: Option<f64>,
    vp_h1: Option<f64>,
    /// Mollification radius for well sources (m); defaults to twice the
    /// target mesh size.
    r_moll: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SolverOverrides {
    tol: Option<f64>,
    max_iter: Option<usize>,
    d1: Option<f64>,
    d2: Option<f64>,
    d3: Option<f64>,
    lambda: Option<f64>,
    quadrature_degree: Option<usize>,
    consistent_mass: Option<bool>,
    bootstrap_first_step: Option<bool>,
    transport_oxygen_nitrogen: Option<bool>,
    freeze_water: Option<bool>,
    freeze_temperature: Option<bool>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct OutputOverrides {
    out_dir: Option<PathBuf>,
    csv_path: Option<PathBuf>,
    vtk_times_days: Option<Vec<f64>>,
    checkpoint_path: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct HgcOverrides {
    /// Decay rate of the prescribed carbon profile; when absent, derived
    /// so the profile matches the carbon-only end value over the run.
    alpha: Option<f64>,
    alpha_time_unit: Option<AlphaUnit>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaUnit {
    PerDay,
    PerYear,
}

/// Fully resolved solver and stepping settings.
#[derive(Debug, Clone)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iter: usize,
    pub quadrature_degree: usize,
    pub consistent_mass: bool,
    pub bootstrap_first_step: bool,
    pub transport_oxygen_nitrogen: bool,
    pub freeze_water: bool,
    pub freeze_temperature: bool,
}

#[derive(Debug, Clone)]
pub struct OutputPlan {
    pub out_dir: PathBuf,
    pub csv_path: Option<PathBuf>,
    pub vtk_times_days: Vec<f64>,
    pub checkpoint_path: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct HeatGivenCarbon {
    pub alpha: Option<f64>,
    pub alpha_unit: AlphaUnit,
}

/// All physical constants of the model, resolved.
#[derive(Debug, Clone)]
pub struct Parameters {
    pub reaction: ReactionParams,
    pub heat: HeatParams,
    pub gas: GasParams,
    pub water: WaterParams,
    pub phase: PhaseParams,
    pub darcy: DarcyParams,
    pub r_moll: f64,
}

/// A fully resolved and validated run configuration.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub dt_days: f64,
    pub s_fin_days: f64,
    pub geometry: GeometrySpec,
    pub mesh_path: Option<PathBuf>,
    pub boundary_tags: TagTable,
    pub params: Parameters,
    pub solver: SolverSettings,
    pub output: OutputPlan,
    pub hgc: HeatGivenCarbon,
}

impl ScenarioConfig {
    pub fn nsteps(&self) -> usize {
        (self.s_fin_days / self.dt_days).round().max(1.0) as usize
    }
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        resolve(ConfigFile::default()).expect("default config is valid")
    }
}

/// Parses and validates a JSON configuration.
pub fn load_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: ConfigFile = serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Json {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    resolve(file)
}

fn resolve(file: ConfigFile) -> Result<ScenarioConfig, ConfigError> {
    let p = &file.params;
    let reaction = {
        let d = ReactionParams::default();
        ReactionParams {
            phi: p.phi.unwrap_or(d.phi),
            a_b: p.a_b.unwrap_or(d.a_b),
            c_b: p.c_b.unwrap_or(d.c_b),
            b0: p.b0.unwrap_or(d.b0),
            corg0: p.corg0.unwrap_or(d.corg0),
            w_max: p.w_max.unwrap_or(d.w_max),
            t_opt: p.t_opt.unwrap_or(d.t_opt),
            a_t: p.a_t.unwrap_or(d.a_t),
        }
    };
    let heat = {
        let d = HeatParams::default();
        HeatParams {
            k_t: p.k_t.unwrap_or(d.k_t),
            c_t: p.c_t.unwrap_or(d.c_t),
            t_m: p.t_m.unwrap_or(d.t_m),
            t_g: p.t_g.unwrap_or(d.t_g),
            t0: p.t0.unwrap_or(d.t0),
        }
    };
    let gas = {
        let d = GasParams::default();
        GasParams {
            c_m: p.c_m.unwrap_or(d.c_m),
            c_c: p.c_c.unwrap_or(d.c_c),
            c_h: p.c_h.unwrap_or(d.c_h),
            m0: p.m0.unwrap_or(d.m0),
            cdx0: p.cdx0.unwrap_or(d.cdx0),
            o0: p.o0.unwrap_or(d.o0),
            n0: p.n0.unwrap_or(d.n0),
            h0: p.h0.unwrap_or(d.h0),
        }
    };
    let water = {
        let d = WaterParams::default();
        WaterParams {
            u_w: p.u_w.unwrap_or(d.u_w),
            k_w: p.k_w.unwrap_or(d.k_w),
            j_in: p.j_in.unwrap_or(d.j_in),
            w0: p.w0.unwrap_or(d.w0),
        }
    };
    let phase = {
        let d = PhaseParams::default();
        PhaseParams {
            p0: p.vp_p0.unwrap_or(d.p0),
            s0: p.vp_s0.unwrap_or(d.s0),
            s1: p.vp_s1.unwrap_or(d.s1),
            h0_lin: p.vp_h0.unwrap_or(d.h0_lin),
            h1_lin: p.vp_h1.unwrap_or(d.h1_lin),
            c_hw: p.c_hw.unwrap_or(d.c_hw),
            c_wh: p.c_wh.unwrap_or(d.c_wh),
            p_ref: p.p_ref.unwrap_or(d.p_ref),
        }
    };
    let s = &file.solver;
    let darcy = {
        let d = DarcyParams::default();
        DarcyParams {
            d1: s.d1.unwrap_or(d.d1),
            d2: s.d2.unwrap_or(d.d2),
            d3: s.d3.unwrap_or(d.d3),
            lambda: s.lambda.or(d.lambda),
            j_out: p.j_out.unwrap_or(d.j_out),
            depletion_floor: d.depletion_floor,
            tol: s.tol.unwrap_or(d.tol),
            max_iter: s.max_iter.unwrap_or(d.max_iter),
        }
    };
    let geometry = file.geometry.unwrap_or_default();
    let params = Parameters {
        reaction,
        heat,
        gas,
        water,
        phase,
        darcy,
        r_moll: p.r_moll.unwrap_or(2.0 * geometry.target_mesh_size),
    };

    let dt_days = file.dt_days.unwrap_or(365.0);
    let s_fin_days = file.s_fin_days.unwrap_or(14600.0);
    if !(dt_days > 0.0) {
        return Err(ConfigError::Validation(format!(
            "dt_days must be positive, got {dt_days}"
        )));
    }
    if !(s_fin_days >= dt_days) {
        return Err(ConfigError::Validation(format!(
            "s_fin_days ({s_fin_days}) must be at least one time step ({dt_days})"
        )));
    }
    if !(params.reaction.phi > 0.0 && params.reaction.phi < 1.0) {
        return Err(ConfigError::Validation(format!(
            "phi must lie in (0,1), got {}",
            params.reaction.phi
        )));
    }
    for (name, v) in [
        ("a_b", params.reaction.a_b),
        ("w_max", params.reaction.w_max),
        ("a_t", params.reaction.a_t),
        ("k_t", params.heat.k_t),
        ("k_w", params.water.k_w),
        ("p_ref", params.phase.p_ref),
    ] {
        if !(v > 0.0) {
            return Err(ConfigError::Validation(format!(
                "{name} must be positive, got {v}"
            )));
        }
    }
    if params.water.u_w < 0.0 {
        return Err(ConfigError::Validation(format!(
            "u_w is a magnitude and must be nonnegative, got {}",
            params.water.u_w
        )));
    }
    geometry
        .validate()
        .map_err(|e| ConfigError::Validation(e.to_string()))?;

    let boundary_tags = match &file.boundary_tags {
        None => TagTable::default(),
        Some(map) => {
            let mut table = TagTable {
                map: Default::default(),
            };
            for (tag, name) in map {
                let tag: i64 = tag.parse().map_err(|_| {
                    ConfigError::Validation(format!("boundary tag {tag:?} is not an integer"))
                })?;
                let label = match name.as_str() {
                    "TOP" => BoundaryLabel::Top,
                    "BOTTOM" => BoundaryLabel::Bottom,
                    "LATERAL" => BoundaryLabel::Lateral,
                    other => {
                        return Err(ConfigError::Validation(format!(
                            "unknown boundary label {other:?}; expected TOP, BOTTOM or LATERAL"
                        )))
                    }
                };
                table.map.insert(tag, label);
            }
            table
        }
    };

    let vtk_times_days = match file.output.vtk_times_days {
        Some(times) => {
            for &t in &times {
                if !(0.0..=s_fin_days).contains(&t) {
                    return Err(ConfigError::Validation(format!(
                        "vtk snapshot time {t} outside [0, {s_fin_days}]"
                    )));
                }
            }
            times
        }
        // Default snapshots at years 1, 10, 20 and 40, clipped to the run.
        None => [365.0, 3650.0, 7300.0, 14600.0]
            .into_iter()
            .filter(|&t| t <= s_fin_days)
            .collect(),
    };
    let out_dir = file.output.out_dir.unwrap_or_else(|| PathBuf::from("out"));

    Ok(ScenarioConfig {
        scenario: file.scenario.unwrap_or(Scenario::Full),
        dt_days,
        s_fin_days,
        geometry,
        mesh_path: file.mesh_path,
        boundary_tags,
        params,
        solver: SolverSettings {
            tol: s.tol.unwrap_or(1e-10),
            max_iter: s.max_iter.unwrap_or(200_000),
            quadrature_degree: s.quadrature_degree.unwrap_or(2),
            consistent_mass: s.consistent_mass.unwrap_or(false),
            bootstrap_first_step: s.bootstrap_first_step.unwrap_or(true),
            transport_oxygen_nitrogen: s.transport_oxygen_nitrogen.unwrap_or(false),
            freeze_water: s.freeze_water.unwrap_or(false),
            freeze_temperature: s.freeze_temperature.unwrap_or(false),
        },
        output: OutputPlan {
            csv_path: file.output.csv_path,
            vtk_times_days,
            checkpoint_path: file.output.checkpoint_path,
            out_dir,
        },
        hgc: HeatGivenCarbon {
            alpha: file.heat_given_carbon.alpha,
            alpha_unit: file
                .heat_given_carbon
                .alpha_time_unit
                .unwrap_or(AlphaUnit::PerDay),
        },
    })
}
