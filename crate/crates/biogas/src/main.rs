//! Batch CLI for the alveolus simulator.
//!
//! Exit codes: 0 on success, 2 on configuration/validation errors, 3 on
//! solver failures during the time loop.

use biogas::driver::{self, Scenario, ScenarioConfig};
use biogas::mesh::{generate_alveolus, write_msh, GeometrySpec};
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "biogas", version, about = "Bioreactor-landfill alveolus simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario described by a JSON config.
    Run {
        /// Path to the JSON configuration.
        #[arg(long)]
        config: PathBuf,
        /// Override the configured scenario (CARBON_ONLY,
        /// HEAT_GIVEN_CARBON, COUPLED_CARBON_HEAT, FULL).
        #[arg(long)]
        scenario: Option<String>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the mesh path (MSH 2.2 ASCII).
        #[arg(long)]
        mesh: Option<PathBuf>,
        /// Run only the first N steps.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Generate an alveolus mesh from a geometry spec and write it as
    /// MSH 2.2 ASCII.
    Mesh {
        /// Path to the JSON geometry spec.
        #[arg(long)]
        spec: PathBuf,
        /// Output mesh path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Parse and validate a configuration, reporting problems.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

const EXIT_VALIDATION: u8 = 2;
const EXIT_SOLVER: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            scenario,
            out,
            mesh,
            steps,
        } => cmd_run(config, scenario, out, mesh, steps),
        Command::Mesh { spec, out } => cmd_mesh(spec, out),
        Command::Validate { config } => cmd_validate(config),
    }
}

fn load(config_path: &PathBuf) -> Result<ScenarioConfig, u8> {
    let text = std::fs::read_to_string(config_path).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", config_path.display());
        EXIT_VALIDATION
    })?;
    driver::load_config(&text).map_err(|e| {
        eprintln!("error: {e}");
        EXIT_VALIDATION
    })
}

fn parse_scenario(name: &str) -> Option<Scenario> {
    match name {
        "CARBON_ONLY" => Some(Scenario::CarbonOnly),
        "HEAT_GIVEN_CARBON" => Some(Scenario::HeatGivenCarbon),
        "COUPLED_CARBON_HEAT" => Some(Scenario::CoupledCarbonHeat),
        "FULL" => Some(Scenario::Full),
        _ => None,
    }
}

fn cmd_run(
    config_path: PathBuf,
    scenario: Option<String>,
    out: Option<PathBuf>,
    mesh: Option<PathBuf>,
    steps: Option<usize>,
) -> ExitCode {
    let mut config = match load(&config_path) {
        Ok(c) => c,
        Err(code) => return ExitCode::from(code),
    };
    if let Some(name) = scenario {
        match parse_scenario(&name) {
            Some(s) => config.scenario = s,
            None => {
                eprintln!("error: unknown scenario {name:?}");
                return ExitCode::from(EXIT_VALIDATION);
            }
        }
    }
    if let Some(dir) = out {
        config.output.out_dir = dir;
    }
    if let Some(path) = mesh {
        config.mesh_path = Some(path);
    }
    if let Some(n) = steps {
        if n == 0 {
            eprintln!("error: --steps must be positive");
            return ExitCode::from(EXIT_VALIDATION);
        }
        config.s_fin_days = config.dt_days * n as f64;
        config
            .output
            .vtk_times_days
            .retain(|&t| t <= config.s_fin_days);
    }
    if config.output.csv_path.is_none() {
        config.output.csv_path = Some(config.output.out_dir.join("series.csv"));
    }

    match driver::run(&config) {
        Ok(output) => {
            println!(
                "completed {} steps to t = {} days; CSV at {}",
                output.steps_done,
                output.t_final,
                config
                    .output
                    .csv_path
                    .as_ref()
                    .map(|p| p.display().to_string())
                    .unwrap_or_default()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_solver_failure() {
                ExitCode::from(EXIT_SOLVER)
            } else {
                ExitCode::from(EXIT_VALIDATION)
            }
        }
    }
}

fn cmd_mesh(spec_path: PathBuf, out: PathBuf) -> ExitCode {
    let text = match std::fs::read_to_string(&spec_path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", spec_path.display());
            return ExitCode::from(EXIT_VALIDATION);
        }
    };
    let de = &mut serde_json::Deserializer::from_str(&text);
    let spec: GeometrySpec = match serde_path_to_error::deserialize(de) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: geometry spec at {}: {}", e.path(), e.inner());
            return ExitCode::from(EXIT_VALIDATION);
        }
    };
    let (mesh, pipes) = match generate_alveolus(&spec) {
        Ok(pair) => pair,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_VALIDATION);
        }
    };
    if let Err(e) = std::fs::write(&out, write_msh(&mesh)) {
        eprintln!("error: cannot write {}: {e}", out.display());
        return ExitCode::from(EXIT_SOLVER);
    }
    println!(
        "wrote {} ({} vertices, {} tets, {} pipes)",
        out.display(),
        mesh.nvertices(),
        mesh.ntets(),
        pipes.pipes.len()
    );
    ExitCode::SUCCESS
}

fn cmd_validate(config_path: PathBuf) -> ExitCode {
    match load(&config_path) {
        Ok(config) => {
            println!(
                "config ok: scenario {:?}, dt = {} days, {} steps",
                config.scenario,
                config.dt_days,
                config.nsteps()
            );
            ExitCode::SUCCESS
        }
        Err(code) => ExitCode::from(code),
    }
}
