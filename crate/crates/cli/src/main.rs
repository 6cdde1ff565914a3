//! `rlq` — solve, sweep, certify, and verify robust time-inconsistent LQ
//! equilibria from a JSON model configuration.
//!
//! Exit codes: 0 success, 1 validation/usage failure, 2 solver failure,
//! 3 verification failure (failed checks or a false certificate).

mod output;
mod values;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use rlq_core::baseline::{closed_loop_nonrobust, open_loop_nonrobust};
use rlq_core::ctrldep::{certify_ctrl, solve_ctrl, CtrlCertConstants};
use rlq_core::model::{self, AmbiguityMode, ModelSpec, TimeGrid};
use rlq_core::mv::{relation_sweep, sweep_ambiguity, sweep_risk, RelationForm};
use rlq_core::statedep::{certify_state, solve_state, StateCertConstants};
use rlq_core::verify::{mc_cross_check, residuals, spike_ladder, SpikeKind};
use rlq_core::{SolveError, Solution};

#[derive(Parser)]
#[command(name = "rlq", version, about = "Robust time-inconsistent LQ equilibrium solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum VaryArg {
    Mu1,
    Xi,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormArg {
    Linear,
    Quadratic,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineArg {
    Open,
    Closed,
}

#[derive(Clone, Copy, ValueEnum)]
enum SpikeArg {
    U,
    H,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the configured equilibrium and write the policy CSV.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the grid resolution from the config (default 2000).
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Sweep one aversion parameter and write the frontier CSV.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        vary: VaryArg,
        /// Either `a:b:step` (inclusive when step divides the range) or a
        /// comma-separated list.
        #[arg(long)]
        values: Option<String>,
        /// Whitespace/newline-separated values, one file.
        #[arg(long)]
        values_file: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Sweep mu1 with xi coupled through a linear or quadratic relation.
    Relation {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        form: FormArg,
        /// Intercept of the linear relation `xi = a0 + a1 mu1`.
        #[arg(long)]
        a0: Option<f64>,
        /// Slope (linear) or curvature (quadratic `xi = a1 mu1^2`).
        #[arg(long)]
        a1: f64,
        #[arg(long)]
        values: Option<String>,
        #[arg(long)]
        values_file: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Write a non-robust baseline path CSV.
    Baseline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        kind: BaselineArg,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Print the well-posedness certificate as JSON (exit 3 if it fails).
    Certify {
        #[arg(long)]
        config: PathBuf,
        /// JSON file with explicit truncation constants.
        #[arg(long)]
        constants: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Run residual, Monte Carlo, and spike checks; print a JSON report.
    Verify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        mc_paths: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Restrict to one spike kind (default: both).
        #[arg(long, value_enum)]
        spike: Option<SpikeArg>,
        /// Perturbation magnitude for the selected spike kind.
        #[arg(long)]
        mag: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
    },
}

/// Error carrying its process exit code.
enum CliError {
    Usage(anyhow::Error),
    Solver(SolveError),
    Verification(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Solver(_) => 2,
            CliError::Verification(_) => 3,
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Usage(e)
    }
}

impl From<SolveError> for CliError {
    fn from(e: SolveError) -> Self {
        CliError::Solver(e)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version are not failures.
            use clap::error::ErrorKind;
            let kind = e.kind();
            let _ = e.print();
            return if matches!(kind, ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Usage(err) => eprintln!("error: {err:#}"),
                CliError::Solver(err) => eprintln!("solver failure: {err}"),
                CliError::Verification(msg) => eprintln!("verification failure: {msg}"),
            }
            ExitCode::from(e.code())
        }
    }
}

fn load_spec(
    config: &PathBuf,
    steps_flag: Option<usize>,
) -> Result<(ModelSpec<f64>, TimeGrid<f64>), CliError> {
    let text = std::fs::read_to_string(config)
        .with_context(|| format!("reading config {}", config.display()))?;
    let (spec, steps) = model::from_json_str::<f64>(&text).map_err(|e| anyhow!(e))?;
    let grid = TimeGrid::new(spec.horizon, steps_flag.unwrap_or(steps));
    let violations = spec.validate(&grid);
    if !violations.is_empty() {
        let mut msg = String::from("invalid model configuration:");
        for v in &violations {
            msg.push_str(&format!("\n  - {v}"));
        }
        return Err(CliError::Usage(anyhow!(msg)));
    }
    Ok((spec, grid))
}

fn solve_any(spec: &ModelSpec<f64>, grid: &TimeGrid<f64>) -> Result<Solution, SolveError> {
    match spec.mode {
        AmbiguityMode::StateDep => solve_state(spec, grid),
        AmbiguityMode::CtrlDep => solve_ctrl(spec, grid),
    }
}

/// Sweep concurrency from `RLQ_THREADS` (0 or unset = sequential).
fn sweep_threads() -> usize {
    std::env::var("RLQ_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(0)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConstants {
    m_lower: f64,
    m_upper: f64,
    delta_lower: Option<f64>,
    e_lower: Option<f64>,
    delta_upper: Option<f64>,
    e_upper: Option<f64>,
    phi: Option<f64>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve { config, out, steps } => {
            let (spec, grid) = load_spec(&config, steps)?;
            let sol = solve_any(&spec, &grid)?;
            if !sol.info.branch_flag_nodes.is_empty() {
                eprintln!(
                    "note: root branch chosen by continuity at {} node(s)",
                    sol.info.branch_flag_nodes.len()
                );
            }
            output::write_policy_csv(&out, &sol, &grid).map_err(|e| anyhow!(e))?;
            Ok(())
        }
        Command::Sweep {
            config,
            vary,
            values,
            values_file,
            out,
            steps,
        } => {
            let (spec, grid) = load_spec(&config, steps)?;
            let vals = values::parse_values(values.as_deref(), values_file.as_deref())
                .map_err(CliError::Usage)?;
            let rows = match vary {
                VaryArg::Mu1 => {
                    for &v in &vals {
                        if v < 0.0 {
                            return Err(CliError::Usage(anyhow!(
                                "field `mu1`: sweep values must be non-negative, got {v}"
                            )));
                        }
                    }
                    sweep_risk(&spec, &grid, &vals, sweep_threads())
                }
                VaryArg::Xi => sweep_ambiguity(&spec, &grid, &vals, sweep_threads())
                    .map_err(|e| anyhow!("field `xi`: {e}"))?,
            };
            output::write_frontier_csv(&out, &rows, spec.dim).map_err(|e| anyhow!(e))?;
            Ok(())
        }
        Command::Relation {
            config,
            form,
            a0,
            a1,
            values,
            values_file,
            out,
            steps,
        } => {
            let (spec, grid) = load_spec(&config, steps)?;
            let vals = values::parse_values(values.as_deref(), values_file.as_deref())
                .map_err(CliError::Usage)?;
            let form = match form {
                FormArg::Linear => RelationForm::Linear {
                    a0: a0.ok_or_else(|| anyhow!("--a0 is required for the linear form"))?,
                    a1,
                },
                FormArg::Quadratic => {
                    if a0.is_some() {
                        return Err(CliError::Usage(anyhow!(
                            "--a0 applies to the linear form only"
                        )));
                    }
                    RelationForm::Quadratic { a1 }
                }
            };
            let rows = relation_sweep(&spec, &grid, form, &vals, sweep_threads())
                .map_err(|e| anyhow!("field `xi`: {e}"))?;
            output::write_frontier_csv(&out, &rows, spec.dim).map_err(|e| anyhow!(e))?;
            Ok(())
        }
        Command::Baseline {
            config,
            kind,
            out,
            steps,
        } => {
            let (spec, grid) = load_spec(&config, steps)?;
            let path = match kind {
                BaselineArg::Open => open_loop_nonrobust(&spec, &grid),
                BaselineArg::Closed => closed_loop_nonrobust(&spec, &grid)?,
            };
            output::write_baseline_csv(&out, &path, &grid).map_err(|e| anyhow!(e))?;
            Ok(())
        }
        Command::Certify {
            config,
            constants,
            steps,
        } => {
            let (spec, grid) = load_spec(&config, steps)?;
            let raw: Option<RawConstants> = match constants {
                Some(path) => {
                    let text = std::fs::read_to_string(&path)
                        .with_context(|| format!("reading constants {}", path.display()))?;
                    Some(serde_json::from_str(&text).map_err(|e| anyhow!("constants: {e}"))?)
                }
                None => None,
            };
            let cert = match spec.mode {
                AmbiguityMode::StateDep => {
                    let cs = raw
                        .map(|r| -> Result<_, anyhow::Error> {
                            Ok(StateCertConstants {
                                m_lower: r.m_lower,
                                m_upper: r.m_upper,
                                delta_lower: r
                                    .delta_lower
                                    .ok_or_else(|| anyhow!("constants: delta_lower required"))?,
                                e_lower: r
                                    .e_lower
                                    .ok_or_else(|| anyhow!("constants: e_lower required"))?,
                            })
                        })
                        .transpose()?;
                    certify_state(&spec, &grid, cs).map_err(|e| anyhow!(e))?
                }
                AmbiguityMode::CtrlDep => {
                    let cs = raw
                        .map(|r| -> Result<_, anyhow::Error> {
                            Ok(CtrlCertConstants {
                                m_lower: r.m_lower,
                                m_upper: r.m_upper,
                                delta_upper: r
                                    .delta_upper
                                    .ok_or_else(|| anyhow!("constants: delta_upper required"))?,
                                e_upper: r
                                    .e_upper
                                    .ok_or_else(|| anyhow!("constants: e_upper required"))?,
                                phi: r.phi,
                            })
                        })
                        .transpose()?;
                    certify_ctrl(&spec, &grid, cs).map_err(|e| anyhow!(e))?
                }
            };
            println!(
                "{}",
                serde_json::to_string_pretty(&cert).map_err(|e| anyhow!(e))?
            );
            if cert.verdict {
                Ok(())
            } else {
                let worst = cert
                    .margins
                    .iter()
                    .filter(|m| !m.satisfied)
                    .map(|m| m.name.as_str())
                    .collect::<Vec<_>>()
                    .join(", ");
                Err(CliError::Verification(format!(
                    "certificate failed: {worst}"
                )))
            }
        }
        Command::Verify {
            config,
            mc_paths,
            seed,
            spike,
            mag,
            steps,
        } => {
            let (spec, grid) = load_spec(&config, steps)?;
            let sol = solve_any(&spec, &grid)?;
            let mut pass = true;
            let mut failures: Vec<String> = Vec::new();

            let res = residuals(&sol.coeffs, &sol.policy, &spec);
            if !(res.max_rho_zeta < 1e-8 && res.max_rho_x < 1e-8 && res.min_sigma >= -1e-10) {
                pass = false;
                failures.push("first-order residuals".into());
            }

            let mc = if matches!(spike, Some(_)) && mag.is_some() {
                None
            } else {
                let rep = mc_cross_check(&sol.policy, &spec, &grid, mc_paths, seed)
                    .map_err(|e| anyhow!(e))?;
                if rep.max_abs_z() >= 4.0 {
                    pass = false;
                    failures.push("Monte Carlo z-scores".into());
                }
                Some(rep)
            };

            let dim = spec.dim;
            let mut spikes = Vec::new();
            let run_u = |mag: f64| -> Result<_, SolveError> {
                spike_ladder(
                    SpikeKind::Investment,
                    &vec![mag; dim],
                    &[1e-2, 1e-3, 1e-4],
                    &spec,
                    &sol.policy,
                )
            };
            let run_h = |mag: f64| -> Result<_, SolveError> {
                spike_ladder(
                    SpikeKind::Distortion,
                    &vec![mag; dim],
                    &[1e-3, 1e-4],
                    &spec,
                    &sol.policy,
                )
            };
            match spike {
                Some(SpikeArg::U) => spikes.push(run_u(mag.unwrap_or(1.0))?),
                Some(SpikeArg::H) => spikes.push(run_h(mag.unwrap_or(0.5))?),
                None => {
                    spikes.push(run_u(mag.unwrap_or(1.0))?);
                    for eta in [0.25, -0.25, 0.5, -0.5, 1.0, -1.0] {
                        spikes.push(run_h(eta)?);
                    }
                }
            }
            for rep in &spikes {
                let ok = match rep.kind.as_str() {
                    "u-spike" => {
                        let q = *rep.quotients.last().unwrap();
                        (q - rep.predicted).abs() <= 0.01 * rep.predicted.abs()
                    }
                    _ => rep.quotients.iter().all(|&q| q <= 1e-6),
                };
                if !ok {
                    pass = false;
                    failures.push(format!("{} ({:?})", rep.kind, rep.perturbation));
                }
            }

            let report = serde_json::json!({
                "residuals": res,
                "mc": mc,
                "spikes": spikes,
                "pass": pass,
            });
            println!(
                "{}",
                serde_json::to_string_pretty(&report).map_err(|e| anyhow!(e))?
            );
            if pass {
                Ok(())
            } else {
                Err(CliError::Verification(failures.join("; ")))
            }
        }
    }
}
