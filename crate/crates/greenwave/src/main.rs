//! Thin command-line front end over the greenwave library. Every
//! subcommand is a direct call into `greenwave::harness`.

use std::error::Error;
use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use greenwave::harness::{
    self, compare_baselines, gen_scenario, grid_search, report, sparsity_sweep, train_experiment,
    ControllerSpec, ExperimentConfig, Mode, ObservationOverrides, Template,
};
use greenwave::metrics::MetricsReport;
use greenwave::obs::ReprKind;
use greenwave::prune::default_sparsity_levels;
use greenwave::sim::{load_scenario, save_scenario};

#[derive(Parser)]
#[command(name = "greenwave", version, about = "Reinforcement-learning traffic signal control lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonRunArgs {
    /// Scenario file produced by gen-scenario (or handwritten).
    #[arg(long)]
    scenario: PathBuf,
    /// Optional experiment config JSON; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// State representation.
    #[arg(long, value_parser = clap::value_parser!(ReprKind), default_value = "count")]
    repr: ReprKind,
    /// Comma-separated seed list, e.g. 1,2,3,4,5.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    seeds: Option<Vec<u64>>,
    /// Training episodes per seed.
    #[arg(long)]
    episodes: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Write a built-in scenario template with seeded demand.
    GenScenario {
        /// Template name: single4way or arterial3.
        #[arg(long, default_value = "single4way")]
        template: Template,
        /// Demand level in vehicles per hour per approach.
        #[arg(long, default_value_t = 360.0)]
        demand: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Multi-seed DQN training with greedy evaluation per seed.
    Train(CommonRunArgs),
    /// Evaluate a controller (fixed-time, random, or a checkpoint path).
    Evaluate {
        #[command(flatten)]
        common: CommonRunArgs,
        /// fixed-time | random | path to a checkpoint file or directory.
        #[arg(long)]
        controller: String,
        /// Also run both baselines and warn if their ordering is off.
        #[arg(long, default_value_t = false)]
        with_baselines: bool,
    },
    /// Hyperparameter grid search (27 combinations by default).
    Sweep(CommonRunArgs),
    /// Prune a trained checkpoint across sparsity levels and evaluate each.
    PruneSweep {
        #[command(flatten)]
        common: CommonRunArgs,
        /// Checkpoint file or directory from a training run.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Comma-separated sparsity levels in [0, 1). Default 0,0.05,...,0.5.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        levels: Option<Vec<f64>>,
    },
    /// Summarize run artifacts into comparison tables and plot data.
    Report {
        /// Directory holding per-representation run outputs.
        #[arg(long)]
        artifacts: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn build_config(common: &CommonRunArgs, mode: Mode) -> Result<ExperimentConfig, Box<dyn Error>> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig {
            schema_version: harness::CONFIG_SCHEMA_VERSION,
            scenario: common.scenario.clone(),
            mode,
            repr: common.repr,
            observation: ObservationOverrides::default(),
            agent: greenwave::dqn::AgentConfig::default(),
            grid: None,
            episodes: 200,
            seeds: vec![1, 2, 3, 4, 5],
            out: common.out.clone(),
        },
    };
    if common.config.is_some() {
        // Flags override config-file fields where given.
        cfg.scenario = common.scenario.clone();
        cfg.out = common.out.clone();
        cfg.repr = common.repr;
        if cfg.mode != mode {
            return Err(format!(
                "config file mode {:?} does not match the subcommand",
                cfg.mode
            )
            .into());
        }
    }
    if let Some(seeds) = &common.seeds {
        cfg.seeds = seeds.clone();
    }
    if let Some(episodes) = common.episodes {
        cfg.episodes = episodes;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_rows(rows: &[(u64, MetricsReport, f64)]) {
    println!("seed  att       awt       ad        aql      arrived unfinished reward");
    for (seed, m, r) in rows {
        println!(
            "{:<5} {:<9.2} {:<9.2} {:<9.2} {:<8.3} {:<7} {:<10} {:.1}",
            seed, m.avg_travel_time, m.avg_waiting_time, m.avg_delay, m.avg_queue_length,
            m.arrived, m.unfinished, r
        );
    }
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn run() -> Result<(), Box<dyn Error>> {
    let cli = Cli::parse();
    match cli.command {
        Command::GenScenario {
            template,
            demand,
            seed,
            out,
        } => {
            let doc = gen_scenario(template, demand, seed)?;
            if let Some(parent) = out.parent() {
                if !parent.as_os_str().is_empty() {
                    fs::create_dir_all(parent)?;
                }
            }
            save_scenario(&doc, &out)?;
            println!(
                "wrote {} ({} lanes, {} intersections, {} vehicles)",
                out.display(),
                doc.lanes.len(),
                doc.intersections.len(),
                doc.demand.len()
            );
        }
        Command::Train(common) => {
            let cfg = build_config(&common, Mode::Train)?;
            let outcome = train_experiment(&cfg)?;
            println!(
                "trained {} seeds; best seed {} with AWT {:.2} s (att {:.2}, ad {:.2}, aql {:.3})",
                cfg.seeds.len(),
                outcome.best_seed,
                outcome.best.avg_waiting_time,
                outcome.best.avg_travel_time,
                outcome.best.avg_delay,
                outcome.best.avg_queue_length,
            );
            println!("artifacts in {}", cfg.out.display());
        }
        Command::Evaluate {
            common,
            controller,
            with_baselines,
        } => {
            let cfg = build_config(&common, Mode::Eval)?;
            let scenario = load_scenario(&cfg.scenario)?;
            let obs = cfg.observation.resolve(cfg.repr, &scenario)?;
            let spec = ControllerSpec::parse(&controller);
            let rows = harness::evaluate(&spec, &scenario, &obs, &cfg.seeds)?;
            println!("controller: {}", spec.label());
            print_rows(&rows);
            fs::create_dir_all(&cfg.out)?;
            harness::write_manifest(&cfg.out, "evaluate", &cfg.seeds, &cfg)?;
            let mut csv = String::from(MetricsReport::CSV_HEADER);
            csv.push('\n');
            for (seed, m, _) in &rows {
                csv.push_str(&m.csv_row(&spec.label(), *seed, cfg.repr.name(), 0));
                csv.push('\n');
            }
            fs::write(cfg.out.join("eval.csv"), csv)?;
            if with_baselines {
                let (fixed, random, _) = compare_baselines(&scenario, &cfg.seeds)?;
                println!("baselines: fixed-time AWT {fixed:.2} s, random AWT {random:.2} s");
            }
        }
        Command::Sweep(common) => {
            let cfg = build_config(&common, Mode::Sweep)?;
            let scenario = load_scenario(&cfg.scenario)?;
            let obs = cfg.observation.resolve(cfg.repr, &scenario)?;
            let spec = cfg.grid.clone().unwrap_or_default();
            let master = cfg.seeds[0];
            let outcome = grid_search(&spec, &scenario, &obs, &cfg.agent, master)?;
            fs::create_dir_all(&cfg.out)?;
            harness::write_manifest(&cfg.out, "sweep", &cfg.seeds, &cfg)?;
            fs::write(cfg.out.join("ranking.csv"), outcome.ranking_csv())?;
            let mut best = serde_json::to_string_pretty(&outcome.best)?;
            best.push('\n');
            fs::write(cfg.out.join("best_config.json"), best)?;
            let w = &outcome.table[0];
            println!(
                "{} combinations x {} runs x {} episodes",
                spec.len(),
                spec.runs_per_combo,
                spec.episodes_per_run
            );
            println!(
                "best combo {}: gamma {}, lr {}, target update {} (score {:.4})",
                w.index, w.gamma, w.learning_rate, w.target_update, w.score
            );
            println!("ranking written to {}", cfg.out.join("ranking.csv").display());
        }
        Command::PruneSweep {
            common,
            checkpoint,
            levels,
        } => {
            let cfg = build_config(&common, Mode::PruneSweep)?;
            let scenario = load_scenario(&cfg.scenario)?;
            let obs = cfg.observation.resolve(cfg.repr, &scenario)?;
            let levels = levels.unwrap_or_else(default_sparsity_levels);
            let report = sparsity_sweep(&checkpoint, &scenario, &obs, &levels, &cfg.seeds)?;
            fs::create_dir_all(&cfg.out)?;
            harness::write_manifest(&cfg.out, "prune-sweep", &cfg.seeds, &cfg)?;
            fs::write(cfg.out.join("prune_sweep.csv"), report.to_csv())?;
            println!("level  measured  mean_reward  awt");
            for e in &report.entries {
                println!(
                    "{:<6.2} {:<9.4} {:<12.1} {:.2}",
                    e.level, e.measured_sparsity, e.mean_reward, e.metrics.avg_waiting_time
                );
            }
            let best = report.best_entry();
            println!(
                "best level {:.2} (mean reward {:.1}); dense reward {:.1}",
                best.level, best.mean_reward, report.dense.mean_reward
            );
        }
        Command::Report { artifacts, out } => {
            let summary = report(&artifacts, &out)?;
            println!("repr   att      ad       awt      aql");
            for r in &summary.rows {
                println!(
                    "{:<6} {:<8.2} {:<8.2} {:<8.2} {:.3}",
                    r.repr, r.att, r.ad, r.awt, r.aql
                );
            }
            for (base, metric, frac) in &summary.improvements {
                println!("image vs {base} on {metric}: {:+.1}%", frac * 100.0);
            }
            println!("tables written to {}", out.display());
        }
    }
    Ok(())
}
