use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tacit::experiment::{run_experiment, validate_cascades, ExperimentConfig};
use tacit::replay::{replay_experiment, replay_run};

#[derive(Parser)]
#[command(name = "tacit", version, about = "Misinformation spread and fact-checking simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the full counterfactual experiment grid.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the number of repetitions.
        #[arg(long)]
        reps: Option<usize>,
    },
    /// Check that misinformation cascades outgrow anti-misinformation ones.
    ValidateCascades {
        #[arg(long)]
        config: PathBuf,
        /// Seeds that must pass (default: 80% of the seeds run).
        #[arg(long)]
        min_pass: Option<usize>,
    },
    /// Recompute metrics from exported CSV files.
    Replay {
        #[arg(long)]
        log: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse().cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cmd: Cmd) -> tacit::Result<ExitCode> {
    match cmd {
        Cmd::Run {
            config,
            out,
            seed,
            reps,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            if let Some(r) = reps {
                cfg.repetitions = r;
            }
            let res = run_experiment(&cfg, Some(&out))?;
            let labels = tacit::experiment::group_labels(res.num_communities);
            println!("mitigation\t{}", labels.join("\t"));
            for (m, eff) in cfg.grid.iter().zip(&res.effects) {
                let cells: Vec<String> = eff.iter().map(|e| format!("{:+.4}±{:.4}", e.mean, e.se)).collect();
                println!("{}\t{}", m.name(), cells.join("\t"));
            }
            let per_rep = res.ordinal_checks_per_rep()?;
            for (i, (name, ok)) in res.pooled_ordinal_checks().into_iter().enumerate() {
                let held = per_rep.iter().filter(|r| r[i].1).count();
                println!(
                    "{} {name} (pooled means; held in {held}/{} repetitions)",
                    if ok { "ok  " } else { "FAIL" },
                    per_rep.len()
                );
            }
            if res.reps.iter().any(|r| !r.pairing_ok()) {
                eprintln!("pre-period logs differ between paired runs");
                return Ok(ExitCode::FAILURE);
            }
            Ok(if res.is_partial() {
                ExitCode::FAILURE
            } else {
                ExitCode::SUCCESS
            })
        }
        Cmd::ValidateCascades { config, min_pass } => {
            let cfg = ExperimentConfig::load(&config)?;
            let results = validate_cascades(&cfg)?;
            let mut passed = 0;
            for (s, c) in results.iter().enumerate() {
                let ok = c.passes();
                passed += ok as usize;
                println!(
                    "seed {s}: depth {:.3}/{:.3} breadth {:.3}/{:.3} readers {:.2}/{:.2} max utterances/claim {}/{} -> {}",
                    c.mean_depth[2],
                    c.mean_depth[0],
                    c.mean_max_breadth[2],
                    c.mean_max_breadth[0],
                    c.mean_unique_readers[2],
                    c.mean_unique_readers[0],
                    c.max_utterances_per_claim[0],
                    c.max_utterances_per_claim[2],
                    if ok { "pass" } else { "FAIL" }
                );
                for (name, v) in c.checks() {
                    if !v {
                        println!("    failed: {name}");
                    }
                }
            }
            let need = min_pass.unwrap_or((results.len() * 4).div_ceil(5));
            println!("{passed}/{} seeds pass (need {need})", results.len());
            Ok(if passed >= need {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Cmd::Replay { log } => {
            if log.join("effective_config.json").exists() {
                let rows = replay_experiment(&log)?;
                let mut worst = 0f64;
                println!("mitigation\tgroup\trecomputed\treported");
                for r in &rows {
                    worst = worst.max((r.recomputed - r.reported).abs());
                    println!("{}\t{}\t{:?}\t{:?}", r.mitigation, r.group, r.recomputed, r.reported);
                }
                println!("max abs difference {worst:e}");
                Ok(if worst <= 1e-12 {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::FAILURE
                })
            } else {
                let r = replay_run(&log)?;
                let c = &r.comparison;
                println!("cascades by veracity (anti, noise, misinfo): {:?}", c.cascades);
                println!("mean depth {:?}", c.mean_depth);
                println!("mean max breadth {:?}", c.mean_max_breadth);
                println!("mean unique readers {:?}", c.mean_unique_readers);
                println!("max utterances per claim {:?}", c.max_utterances_per_claim);
                let n = r.iwcib.len().max(1) as f64;
                println!(
                    "mean belief change (impactedness-weighted) {:?}",
                    r.iwcib.iter().sum::<f64>() / n
                );
                Ok(ExitCode::SUCCESS)
            }
        }
    }
}
