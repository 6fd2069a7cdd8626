//! `cbl`: command-line driver for the collaborative-estimation mechanism
//! toolkit. Every command reads a JSON experiment config (instance, work-
//! division choice, strategy profile, Monte Carlo settings), writes its
//! result to `--out`, and drops a small run manifest next to it.
//!
//! Agent and distribution indices are 1-based everywhere on this surface.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use cbl_core::bargaining::{
    brute_force_bargain, check_favorable, compute_bargaining_approx, resolve_bargain,
};
use cbl_core::config::{parse_config, plan_approx_to_json, plan_to_json, Config, DEFAULT_NODES};
use cbl_core::corruption::{
    penalty_closed_form, solve_alpha, CellParams, ALPHA_TOL,
};
use cbl_core::mechanisms::Branch;
use cbl_core::sim::{
    analytic_penalty_cbl, classify_cells, efficiency_report, hardness_instance, nic_sweep,
    run_game, Mechanism,
};
use cbl_core::{Error, Provenance, WorkPlan};

const BARGAIN_TOL: f64 = 1e-9;

#[derive(Parser)]
#[command(name = "cbl", version, about = "Collaborative-estimation mechanism toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute a division of work and write it as a plan file.
    Bargain {
        #[arg(long)]
        config: PathBuf,
        /// "utilitarian" (solver), "grid" (exhaustive oracle), or
        /// "explicit" (validate the config's plan).
        #[arg(long, default_value = "utilitarian")]
        method: String,
        /// Grid for --method grid as lo:hi:steps (cells range over
        /// [lo, hi] in (hi-lo)/steps increments).
        #[arg(long)]
        grid: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the enforceable-plan adjustment and write the adjusted plan,
    /// working-alone sets, and frozen totals.
    Plan {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve the corruption coefficients for every corruption-branch cell.
    Alpha {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Analytic per-cell penalties at the recommended strategies.
    Penalty {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte Carlo penalties for the config's strategy profile.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Mechanism: "cbl" or "sample-mean".
        #[arg(long, default_value = "cbl")]
        method: String,
        /// Override the config's replication count.
        #[arg(long)]
        reps: Option<u64>,
        /// Override the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep one agent's own count and report the penalty curve.
    VerifyNic {
        #[arg(long)]
        config: PathBuf,
        /// Agent index (1-based).
        #[arg(long)]
        agent: usize,
        /// Distribution index (1-based).
        #[arg(long)]
        dist: usize,
        /// Sweep grid as lo:hi:steps.
        #[arg(long)]
        grid: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Penalty ratios against the compliant benchmark; exits nonzero if
    /// the branch's bound is violated.
    Efficiency {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate the worst-case instance family and its bounds.
    Hardness {
        #[arg(long)]
        m: usize,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        /// Optional CSV output (m,optimum,ne_lower_bound,ratio_bound).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_digest: String,
    master_seed: Option<u64>,
    tool_version: &'a str,
    duration_secs: f64,
}

fn digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let mut out = String::from("sha256:");
    for b in hasher.finalize() {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

fn write_output(
    out: &Path,
    content: &str,
    command: &str,
    config_bytes: &[u8],
    master_seed: Option<u64>,
    started: Instant,
) -> Result<(), String> {
    std::fs::write(out, content).map_err(|e| format!("cannot write {}: {e}", out.display()))?;
    let manifest = Manifest {
        command,
        config_digest: digest(config_bytes),
        master_seed,
        tool_version: env!("CARGO_PKG_VERSION"),
        duration_secs: started.elapsed().as_secs_f64(),
    };
    let manifest_path = out.with_file_name(format!(
        "{}.manifest.json",
        out.file_name().unwrap_or_default().to_string_lossy()
    ));
    std::fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest).unwrap(),
    )
    .map_err(|e| format!("cannot write {}: {e}", manifest_path.display()))?;
    Ok(())
}

fn load_config(path: &Path) -> Result<(Config, Vec<u8>), String> {
    let bytes =
        std::fs::read(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|e| format!("{} is not UTF-8: {e}", path.display()))?;
    let config = parse_config(&text).map_err(|e| e.to_string())?;
    Ok((config, bytes))
}

fn resolve_plan(cfg: &Config) -> Result<WorkPlan, String> {
    let spec = cfg
        .bargain
        .as_ref()
        .ok_or("config has no \"bargain\" section")?;
    resolve_bargain(&cfg.instance, spec, BARGAIN_TOL).map_err(|e| e.to_string())
}

fn parse_grid(text: &str) -> Result<(f64, f64, usize), String> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(format!("grid must be lo:hi:steps, got {text}"));
    }
    let lo: f64 = parts[0].parse().map_err(|_| format!("bad grid lo {}", parts[0]))?;
    let hi: f64 = parts[1].parse().map_err(|_| format!("bad grid hi {}", parts[1]))?;
    let steps: usize = parts[2]
        .parse()
        .map_err(|_| format!("bad grid steps {}", parts[2]))?;
    if !hi.is_finite() || !lo.is_finite() || hi <= lo || steps == 0 {
        return Err(format!("grid must satisfy lo < hi and steps >= 1, got {text}"));
    }
    Ok((lo, hi, steps))
}

fn branch_csv(label: &Branch) -> &'static str {
    label.label()
}

fn run(cli: Cli) -> Result<ExitCode, String> {
    let started = Instant::now();
    match cli.command {
        Command::Bargain {
            config,
            method,
            grid,
            out,
        } => {
            let (cfg, bytes) = load_config(&config)?;
            let plan = match method.as_str() {
                "utilitarian" => cbl_core::bargaining::utilitarian_bargain(
                    &cfg.instance,
                    BARGAIN_TOL,
                )
                .map_err(|e| e.to_string())?,
                "grid" => {
                    let spec = grid.ok_or("--method grid requires --grid lo:hi:steps")?;
                    let (lo, hi, steps) = parse_grid(&spec)?;
                    let step = (hi - lo) / steps as f64;
                    brute_force_bargain(&cfg.instance, step, hi).map_err(|e| e.to_string())?
                }
                "explicit" => resolve_plan(&cfg)?,
                other => return Err(format!("unknown bargain method {other}")),
            };
            write_output(&out, &plan_to_json(&plan), "bargain", &bytes, None, started)?;
        }
        Command::Plan { config, out } => {
            let (cfg, bytes) = load_config(&config)?;
            let plan = resolve_plan(&cfg)?;
            let approx = compute_bargaining_approx(&cfg.instance, &plan);
            write_output(&out, &plan_approx_to_json(&approx), "plan", &bytes, None, started)?;
        }
        Command::Alpha { config, out } => {
            let (cfg, bytes) = load_config(&config)?;
            let plan = resolve_plan(&cfg)?;
            let inst = &cfg.instance;
            if !check_favorable(inst, &plan).favorable {
                return Err(
                    "per-distribution sharing does not hold; no corruption coefficients exist"
                        .into(),
                );
            }
            let approx = compute_bargaining_approx(inst, &plan);
            let mut csv = String::from("agent,dist,n_star,t_prime,alpha,residual,penalty\n");
            for i in 0..inst.agents() {
                for k in 0..inst.dists() {
                    if approx.is_donating(i, k) || approx.n_tilde.get(i, k) == 0.0 {
                        continue;
                    }
                    let params = CellParams::new(
                        approx.n_tilde.get(i, k),
                        approx.totals[k],
                        inst.cost(i, k),
                        inst.sigma(),
                    )
                    .map_err(|e| e.to_string())?;
                    let alpha = solve_alpha(&params, ALPHA_TOL).map_err(|e| e.to_string())?;
                    let penalty = penalty_closed_form(&params, &alpha);
                    csv.push_str(&format!(
                        "{},{},{},{},{},{},{}\n",
                        i + 1,
                        k + 1,
                        params.n_star,
                        params.t_prime,
                        alpha.value,
                        alpha.residual,
                        penalty
                    ));
                }
            }
            write_output(&out, &csv, "alpha", &bytes, None, started)?;
        }
        Command::Penalty { config, out } => {
            let (cfg, bytes) = load_config(&config)?;
            let plan = resolve_plan(&cfg)?;
            let pens = analytic_penalty_cbl(&cfg.instance, &plan).map_err(|e| e.to_string())?;
            let branches = classify_cells(&cfg.instance, &plan);
            let mut csv = String::from("agent,dist,value,stderr,branch\n");
            for (i, row) in pens.per_cell.iter().enumerate() {
                for (k, value) in row.iter().enumerate() {
                    csv.push_str(&format!(
                        "{},{},{value},0,{}\n",
                        i + 1,
                        k + 1,
                        branch_csv(&branches[i][k])
                    ));
                }
            }
            write_output(&out, &csv, "penalty", &bytes, None, started)?;
        }
        Command::Simulate {
            config,
            method,
            reps,
            seed,
            out,
        } => {
            let (cfg, bytes) = load_config(&config)?;
            let plan = resolve_plan(&cfg)?;
            let profile = cfg
                .profile
                .as_ref()
                .ok_or("config has no \"profile\" section")?;
            let mut sim_cfg = cfg.sim.clone().ok_or("config has no \"sim\" section")?;
            if let Some(r) = reps {
                sim_cfg.replications = r;
            }
            if let Some(s) = seed {
                sim_cfg.master_seed = s;
            }
            let mechanism = match method.as_str() {
                "cbl" => Mechanism::Cbl,
                "sample-mean" => Mechanism::SampleMean,
                other => return Err(format!("unknown mechanism {other}")),
            };
            let pens = run_game(&cfg.instance, &plan, profile, mechanism, &sim_cfg)
                .map_err(|e| e.to_string())?;
            let branches = match mechanism {
                Mechanism::Cbl => classify_cells(&cfg.instance, &plan),
                Mechanism::SampleMean => vec![
                    vec![Branch::PooledMean; cfg.instance.dists()];
                    cfg.instance.agents()
                ],
            };
            let std_error = match &pens.provenance {
                Provenance::MonteCarlo { std_error, .. } => std_error.clone(),
                Provenance::Analytic => unreachable!("run_game output is Monte Carlo"),
            };
            let mut csv = String::from("agent,dist,value,stderr,branch\n");
            for (i, row) in pens.per_cell.iter().enumerate() {
                for (k, value) in row.iter().enumerate() {
                    csv.push_str(&format!(
                        "{},{},{value},{},{}\n",
                        i + 1,
                        k + 1,
                        std_error[i][k],
                        branch_csv(&branches[i][k])
                    ));
                }
            }
            write_output(
                &out,
                &csv,
                "simulate",
                &bytes,
                Some(sim_cfg.master_seed),
                started,
            )?;
        }
        Command::VerifyNic {
            config,
            agent,
            dist,
            grid,
            out,
        } => {
            let (cfg, bytes) = load_config(&config)?;
            let plan = resolve_plan(&cfg)?;
            if agent == 0 || dist == 0 {
                return Err("agent and dist are 1-based".into());
            }
            let (lo, hi, steps) = parse_grid(&grid)?;
            let nodes = cfg.sim.as_ref().map_or(DEFAULT_NODES, |s| s.nodes);
            let sweep = nic_sweep(
                &cfg.instance,
                &plan,
                agent - 1,
                dist - 1,
                lo,
                hi,
                steps,
                nodes,
            )
            .map_err(|e| e.to_string())?;
            let mut csv = String::from("n,penalty\n");
            for (n, p) in &sweep.curve {
                csv.push_str(&format!("{n},{p}\n"));
            }
            write_output(&out, &csv, "verify-nic", &bytes, None, started)?;
            println!(
                "recommended count {} argmin {} penalty {} derivative {}",
                sweep.n_star, sweep.argmin.0, sweep.argmin.1, sweep.derivative_at_plan
            );
        }
        Command::Efficiency { config, out } => {
            let (cfg, bytes) = load_config(&config)?;
            let plan = resolve_plan(&cfg)?;
            let report = efficiency_report(&cfg.instance, &plan).map_err(|e| e.to_string())?;
            let mut csv = String::from("agent,dist,ratio\n");
            for (i, row) in report.per_cell_ratio.iter().enumerate() {
                for (k, ratio) in row.iter().enumerate() {
                    csv.push_str(&format!("{},{},{ratio}\n", i + 1, k + 1));
                }
            }
            write_output(&out, &csv, "efficiency", &bytes, None, started)?;
            println!(
                "favorable {} max_ratio {} social_ratio {} bound {}",
                report.favorable, report.max_ratio, report.social_ratio, report.bound
            );
            if !report.within_bound {
                return Err(format!(
                    "efficiency bound violated: bound {}, max per-cell ratio {}, social ratio {}",
                    report.bound, report.max_ratio, report.social_ratio
                ));
            }
        }
        Command::Hardness {
            m,
            gamma,
            sigma,
            out,
        } => {
            let hard = hardness_instance(m, gamma, sigma).map_err(|e| e.to_string())?;
            let json = serde_json::json!({
                "optimum": hard.optimum,
                "ne_lower_bound": hard.ne_social_lower_bound,
                "ratio_bound": hard.ratio_lower_bound,
            });
            println!("{json}");
            if let Some(out) = out {
                let csv = format!(
                    "m,optimum,ne_lower_bound,ratio_bound\n{},{},{},{}\n",
                    m, hard.optimum, hard.ne_social_lower_bound, hard.ratio_lower_bound
                );
                let params = format!("m={m} gamma={gamma} sigma={sigma}");
                write_output(&out, &csv, "hardness", params.as_bytes(), None, started)?;
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}

// Referenced so the error enum's display formats stay exercised from the
// binary crate during compilation.
#[allow(dead_code)]
fn _error_type_check(e: Error) -> String {
    e.to_string()
}
