//! `spintomo`: JSON-file pipelines for spin-l state tomography.
//!
//! Exit status is 0 on success, 1 for invalid input, 2 for numerical
//! failures. Errors are reported on stderr as `{"error": kind, "message": text}`.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use spintomo::basis::complete_basis;
use spintomo::bipartite::{product_settings, reconstruct_bipartite, sample_joint_record, simulate_joint_record, ProductBasis};
use spintomo::io::{self, StateFile};
use spintomo::measurement::{sample_record, simulate_record};
use spintomo::random::spiral_directions;
use spintomo::spin::{spin1_five_directions, Direction, SpinLength};
use spintomo::strategy::{evolvers, reconstructors};
use spintomo::tomography::{build_design_matrix, consistency_residuals, DirectionSet};
use spintomo::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "spintomo", version, about = "Spin-statistics tomography for spin-l systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Io {
    /// Input JSON file.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Expected 2l; checked against the input when given.
    #[arg(long)]
    two_l: Option<u32>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Dump the operator basis for a spin length.
    Basis {
        #[arg(long)]
        two_l: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact measurement record of a state file.
    Simulate {
        #[command(flatten)]
        io: Io,
        /// Preset name (spin1-five, paper-spin1-five, spiral) or a directions file.
        #[arg(long, default_value = "spiral")]
        directions: String,
        /// Directions for subsystem B of a pair state; defaults to --directions.
        #[arg(long)]
        directions_b: Option<String>,
    },
    /// Multinomial counts drawn from an exact record.
    Sample {
        #[command(flatten)]
        io: Io,
        #[arg(long)]
        shots: u64,
        #[arg(long)]
        seed: u64,
    },
    /// Reconstruct a state from a single-spin record.
    Reconstruct {
        #[command(flatten)]
        io: Io,
        /// linear, linear-weighted or spin1-explicit.
        #[arg(long, default_value = "linear")]
        method: String,
        /// Shorthand for --method linear-weighted.
        #[arg(long)]
        weighted: bool,
        /// Emit the nearest physical state rather than the raw inversion as "state".
        #[arg(long)]
        project_psd: bool,
    },
    /// Evolve a state (or the state of a report) under isotropic spin diffusion.
    Evolve {
        #[command(flatten)]
        io: Io,
        #[arg(long)]
        gamma_t: f64,
        /// closed-form or rk4.
        #[arg(long, default_value = "closed-form")]
        method: String,
        /// RK4 step in units of 1/Γ.
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
    },
    /// Reconstruct a two-spin state from a joint record.
    BipartiteReconstruct {
        #[command(flatten)]
        io: Io,
        #[arg(long)]
        project_psd: bool,
    },
    /// Consistency residuals and design-matrix diagnostics of a record.
    Check {
        #[command(flatten)]
        io: Io,
    },
}

fn spin(two_l: u32) -> Result<SpinLength> {
    SpinLength::new(two_l)
}

fn check_spin(expected: Option<u32>, actual: SpinLength) -> Result<()> {
    match expected {
        Some(e) if e != actual.two_l() => Err(Error::InvalidInput(format!(
            "--two-l {e} does not match the input (2l = {})",
            actual.two_l()
        ))),
        _ => Ok(()),
    }
}

fn read_json(path: &PathBuf) -> Result<Value> {
    let text = fs::read_to_string(path).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    io::parse(&text)
}

fn write_json(out: &Option<PathBuf>, value: &Value) -> Result<()> {
    let text = io::to_canonical_string(value);
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display()))),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::InvalidInput(format!("stdout: {e}"))),
    }
}

fn resolve_directions(spec: &str, l: SpinLength) -> Result<Vec<Direction>> {
    match spec {
        "spin1-five" | "paper-spin1-five" => Ok(spin1_five_directions().to_vec()),
        "spiral" => Ok(spiral_directions(l.min_directions())),
        path => io::directions_from_json(&read_json(&PathBuf::from(path))?),
    }
}

fn is_joint(v: &Value) -> bool {
    v.get("two_l_a").is_some()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Basis { two_l, out } => {
            let basis = complete_basis(spin(two_l)?)?;
            write_json(&out, &io::basis_to_json(&basis))
        }
        Command::Simulate { io: files, directions, directions_b } => {
            match io::state_from_json(&read_json(&files.input)?)? {
                StateFile::Single { l, rho } => {
                    check_spin(files.two_l, l)?;
                    let record = simulate_record(&rho, &resolve_directions(&directions, l)?)?;
                    write_json(&files.out, &io::record_to_json(&record))
                }
                StateFile::Pair { l_a, l_b, rho } => {
                    let dirs_a = resolve_directions(&directions, l_a)?;
                    let dirs_b = resolve_directions(directions_b.as_deref().unwrap_or(&directions), l_b)?;
                    let record = simulate_joint_record(&rho, l_a, l_b, &product_settings(&dirs_a, &dirs_b))?;
                    write_json(&files.out, &io::joint_record_to_json(&record))
                }
            }
        }
        Command::Sample { io: files, shots, seed } => {
            let v = read_json(&files.input)?;
            if is_joint(&v) {
                let record = io::joint_record_from_json(&v)?;
                write_json(&files.out, &io::joint_record_to_json(&sample_joint_record(&record, shots, seed)?))
            } else {
                let record = io::record_from_json(&v)?;
                check_spin(files.two_l, record.l())?;
                write_json(&files.out, &io::record_to_json(&sample_record(&record, shots, seed)?))
            }
        }
        Command::Reconstruct { io: files, method, weighted, project_psd } => {
            let record = io::record_from_json(&read_json(&files.input)?)?;
            let l = record.l();
            check_spin(files.two_l, l)?;
            let name = if weighted { "linear-weighted" } else { method.as_str() };
            let registry = reconstructors();
            let strategy = registry.get(name)?;
            let report = strategy.reconstruct(&record, &complete_basis(l)?)?;
            let state = if project_psd { &report.rho_physical } else { &report.rho_raw };
            let mut v = io::report_to_json(&report, report.coefficients.keyed(), io::state_to_json(l, state));
            v["method"] = json!(strategy.name());
            write_json(&files.out, &v)
        }
        Command::Evolve { io: files, gamma_t, method, dt } => {
            let v = read_json(&files.input)?;
            let state = io::state_from_json(v.get("state").unwrap_or(&v))?;
            let StateFile::Single { l, rho } = state else {
                return Err(Error::InvalidInput("evolve expects a single-spin state".into()));
            };
            check_spin(files.two_l, l)?;
            let registry = evolvers(dt);
            let evolved = registry.get(&method)?.evolve(&rho, &complete_basis(l)?, gamma_t)?;
            write_json(&files.out, &io::state_to_json(l, &evolved))
        }
        Command::BipartiteReconstruct { io: files, project_psd } => {
            let record = io::joint_record_from_json(&read_json(&files.input)?)?;
            let (l_a, l_b) = (record.l_a(), record.l_b());
            let report = reconstruct_bipartite(&record, &ProductBasis::new(l_a, l_b)?)?;
            let state = if project_psd { &report.rho_physical } else { &report.rho_raw };
            let v = io::report_to_json(&report, report.coefficients.keyed(), io::pair_state_to_json(l_a, l_b, state));
            write_json(&files.out, &v)
        }
        Command::Check { io: files } => {
            let record = io::record_from_json(&read_json(&files.input)?)?;
            let l = record.l();
            check_spin(files.two_l, l)?;
            let dirs = DirectionSet::new(l, record.directions())?;
            let design = build_design_matrix(l, &dirs, &complete_basis(l)?)?;
            let relations = consistency_residuals(&record).ok().map(|r| r.to_vec());
            let cond = design.condition_number();
            let v = json!({
                "two_l": l.two_l(),
                "directions": record.len(),
                "min_directions": l.min_directions(),
                "rank": design.rank(1e-10),
                "parameters": design.ncols(),
                "informationally_complete": design.is_informationally_complete(),
                "singular_values": design.singular_values(),
                "condition_number": if cond.is_finite() { json!(cond) } else { Value::Null },
                "consistency_residuals": relations,
            });
            write_json(&files.out, &v)
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("SPINTOMO_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Error::InvalidInput(format!("SPINTOMO_THREADS must be a positive integer, got '{raw}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Internal(e.to_string()))
}

fn fail(kind: &str, message: String, code: u8) -> ExitCode {
    eprintln!("{}", json!({ "error": kind, "message": message }));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("Usage", e.to_string(), 1),
    };
    match configure_threads().and_then(|_| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.kind(), e.to_string(), if e.is_numerical() { 2 } else { 1 }),
    }
}
