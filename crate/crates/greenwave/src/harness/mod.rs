//! Experiment orchestration: multi-seed training runs, baseline and
//! checkpoint evaluation, hyperparameter grid search, sparsity sweeps, and
//! CSV/manifest reporting. Everything is reproducible from the seeds in the
//! experiment config; no output ever embeds wall-clock time.

mod gen;
mod grid;
mod report;

pub use gen::{
    gen_scenario, Template, DECISION_INTERVAL, LANE_LENGTH, LINK_LENGTH, SPEED_LIMIT,
    YELLOW_SECONDS,
};
pub use grid::{grid_search, ComboResult, GridOutcome, GridSpec};
pub use report::{report, ReportSummary};

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dqn::{
    agents_for_scenario, run_episode, AgentConfig, DqnAgent, DqnError, RunMode, EPISODE_SECONDS,
};
use crate::metrics::{finalize_metrics, reward, EpisodeLogBuilder, MetricsError, MetricsReport};
use crate::nn::{load_checkpoint, save_checkpoint, NetError};
use crate::obs::{ObservationConfig, ReprKind};
use crate::prune::{
    mean_report, prune_global_magnitude, measured_sparsity, PruneError, SparsityEntry,
    SparsityReport,
};
use crate::sim::{load_scenario, IntersectionId, Scenario, SimError, Simulation};
use crate::util::derive_seed;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Scenario(#[from] crate::sim::ScenarioError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Dqn(#[from] DqnError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Prune(#[from] PruneError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid experiment config: {0}")]
    Invalid(String),
    #[error("missing artifacts: {0}")]
    MissingArtifacts(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Train,
    Eval,
    Sweep,
    PruneSweep,
}

/// Optional overrides for the observation defaults derived from the
/// network (150 m radius, 7.5 m cells, network max speed, 300 s wait cap).
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ObservationOverrides {
    pub detection_radius: Option<f64>,
    pub cell_length: Option<f64>,
    pub speed_norm: Option<f64>,
    pub wait_cap: Option<f64>,
}

impl ObservationOverrides {
    pub fn resolve(&self, kind: ReprKind, scenario: &Scenario) -> Result<ObservationConfig, HarnessError> {
        let mut cfg = ObservationConfig::for_network(kind, &scenario.network);
        if let Some(v) = self.detection_radius {
            cfg.detection_radius = v;
        }
        if let Some(v) = self.cell_length {
            cfg.cell_length = v;
        }
        if let Some(v) = self.speed_norm {
            cfg.speed_norm = v;
        }
        if let Some(v) = self.wait_cap {
            cfg.wait_cap = v;
        }
        cfg.validate().map_err(HarnessError::Invalid)?;
        Ok(cfg)
    }
}

/// One experiment, serializable as the JSON config file.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub scenario: PathBuf,
    pub mode: Mode,
    pub repr: ReprKind,
    #[serde(default)]
    pub observation: ObservationOverrides,
    #[serde(default)]
    pub agent: AgentConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default = "default_episodes")]
    pub episodes: usize,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
}

fn default_schema_version() -> u32 {
    CONFIG_SCHEMA_VERSION
}

fn default_episodes() -> usize {
    200
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path)?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(HarnessError::Invalid(format!(
                "unsupported config schema_version {}",
                self.schema_version
            )));
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::Invalid("seed list must not be empty".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(HarnessError::Invalid("seeds must be distinct".into()));
        }
        if self.episodes == 0 {
            return Err(HarnessError::Invalid("episodes must be at least 1".into()));
        }
        self.agent.validate().map_err(HarnessError::Invalid)?;
        if let Some(grid) = &self.grid {
            grid.validate().map_err(HarnessError::Invalid)?;
        }
        Ok(())
    }

    /// Agent config with the epsilon decay horizon resolved: a zero value
    /// means "80% of the training episodes".
    pub fn resolved_agent(&self) -> AgentConfig {
        resolve_agent(&self.agent, self.episodes)
    }
}

/// Fill the auto epsilon horizon for a given episode budget.
pub fn resolve_agent(agent: &AgentConfig, episodes: usize) -> AgentConfig {
    let mut cfg = *agent;
    if cfg.epsilon_decay_episodes == 0 {
        cfg.epsilon_decay_episodes = ((episodes as f64) * 0.8).round().max(1.0) as usize;
    }
    cfg
}

/// Provenance sidecar written next to every command's outputs.
#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    schema_version: u32,
    tool: &'static str,
    tool_version: &'static str,
    command: &'a str,
    seeds: &'a [u64],
    config: C,
}

pub fn write_manifest<C: Serialize>(
    out_dir: &Path,
    command: &str,
    seeds: &[u64],
    config: C,
) -> Result<(), HarnessError> {
    fs::create_dir_all(out_dir)?;
    let manifest = Manifest {
        schema_version: CONFIG_SCHEMA_VERSION,
        tool: env!("CARGO_PKG_NAME"),
        tool_version: env!("CARGO_PKG_VERSION"),
        command,
        seeds,
        config,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(out_dir.join("manifest.json"), text)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// Everything a finished training run leaves behind for one seed.
#[derive(Clone, Debug)]
pub struct SeedOutcome {
    pub seed: u64,
    pub eval: MetricsReport,
    pub eval_reward: f64,
    /// Directory holding `agent_<intersection>.ckpt` files.
    pub checkpoint_dir: PathBuf,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub per_seed: Vec<SeedOutcome>,
    pub best_seed: u64,
    pub best: MetricsReport,
}

fn run_id_of(out: &Path) -> String {
    out.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into())
}

/// Save one checkpoint file per agent into `dir`.
fn save_agent_set(agents: &[DqnAgent], network: &crate::sim::LaneNetwork, dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir)?;
    for agent in agents {
        let name = &network.intersection(agent.intersection()).name;
        save_checkpoint(agent.online_net(), &dir.join(format!("agent_{name}.ckpt")))?;
    }
    Ok(())
}

/// Load a checkpoint set saved by `save_agent_set`. A single `.ckpt` file
/// is accepted for single-intersection scenarios.
pub fn load_agent_nets(path: &Path, scenario: &Scenario) -> Result<Vec<crate::nn::DenseNet>, HarnessError> {
    let n = scenario.network.intersection_count();
    if path.is_file() {
        if n != 1 {
            return Err(HarnessError::Invalid(format!(
                "checkpoint file given but the scenario has {n} intersections; pass a checkpoint directory"
            )));
        }
        return Ok(vec![load_checkpoint(path)?]);
    }
    let mut nets = Vec::with_capacity(n);
    for i in 0..n {
        let name = &scenario.network.intersection(IntersectionId(i)).name;
        let file = path.join(format!("agent_{name}.ckpt"));
        if !file.exists() {
            return Err(HarnessError::MissingArtifacts(format!(
                "checkpoint {} not found",
                file.display()
            )));
        }
        nets.push(load_checkpoint(&file)?);
    }
    Ok(nets)
}

/// Build eval-ready agents around checkpointed nets, verifying that each
/// net's input width matches the scenario/observation combination.
pub fn agents_from_nets(
    nets: Vec<crate::nn::DenseNet>,
    scenario: &Scenario,
    obs_cfg: &ObservationConfig,
) -> Result<Vec<DqnAgent>, HarnessError> {
    let mut agents = Vec::with_capacity(nets.len());
    for (i, net) in nets.into_iter().enumerate() {
        let iid = IntersectionId(i);
        let inter = scenario.network.intersection(iid);
        let want_in = obs_cfg.dim(inter.incoming.len());
        if net.input_dim() != want_in {
            return Err(HarnessError::Invalid(format!(
                "checkpoint for '{}' expects {} inputs but this scenario/representation produces {}",
                inter.name,
                net.input_dim(),
                want_in
            )));
        }
        if net.output_dim() != inter.program.phase_count() {
            return Err(HarnessError::Invalid(format!(
                "checkpoint for '{}' has {} actions but the intersection has {} phases",
                inter.name,
                net.output_dim(),
                inter.program.phase_count()
            )));
        }
        let actions = net.output_dim();
        agents.push(DqnAgent::with_net(iid, *obs_cfg, AgentConfig::default(), net, actions));
    }
    Ok(agents)
}

fn train_one_seed(
    scenario: &Scenario,
    obs_cfg: &ObservationConfig,
    agent_cfg: &AgentConfig,
    episodes: usize,
    seed: u64,
    seed_dir: &Path,
) -> Result<SeedOutcome, HarnessError> {
    let proto = Simulation::with_seed(scenario, seed);
    let mut agents = agents_for_scenario(&proto, obs_cfg, agent_cfg, seed)?;
    let names: Vec<String> = scenario
        .network
        .intersections()
        .map(|(_, x)| x.name.clone())
        .collect();

    let mut csv = String::from("episode");
    for n in &names {
        csv.push_str(&format!(",reward_{n}"));
    }
    csv.push_str(",epsilon,mean_loss\n");

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0xA11CE]));
    fs::create_dir_all(seed_dir)?;
    for episode in 0..episodes {
        let mut sim = Simulation::with_seed(scenario, seed);
        run_episode(&mut agents, &mut sim, RunMode::Train, EPISODE_SECONDS, &mut rng)?;
        let eps = agents[0].last_stats().epsilon;
        let mean_loss = agents.iter().map(|a| a.last_stats().mean_loss).sum::<f64>()
            / agents.len() as f64;
        csv.push_str(&format!("{episode}"));
        for a in agents.iter() {
            csv.push_str(&format!(",{:.6}", a.last_stats().cumulative_reward));
        }
        csv.push_str(&format!(",{:.6},{:.6}\n", eps, mean_loss));

        if (episode + 1) % 25 == 0 && episode + 1 < episodes {
            let dir = seed_dir.join("checkpoints").join(format!("ep{:03}", episode + 1));
            save_agent_set(&agents, &scenario.network, &dir)?;
        }
    }
    let final_dir = seed_dir.join("final");
    save_agent_set(&agents, &scenario.network, &final_dir)?;
    fs::write(seed_dir.join("episodes.csv"), &csv)?;

    // Greedy evaluation pass.
    let mut sim = Simulation::with_seed(scenario, seed);
    let mut eval_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0xE7A1]));
    let log = run_episode(&mut agents, &mut sim, RunMode::Eval, EPISODE_SECONDS, &mut eval_rng)?;
    let eval = finalize_metrics(&log)?;
    let eval_reward: f64 = agents.iter().map(|a| a.last_stats().cumulative_reward).sum();

    Ok(SeedOutcome {
        seed,
        eval,
        eval_reward,
        checkpoint_dir: final_dir,
    })
}

/// Full multi-seed training protocol: train every seed, evaluate each one
/// greedily, and single out the seed with the lowest average waiting time.
pub fn train_experiment(cfg: &ExperimentConfig) -> Result<TrainOutcome, HarnessError> {
    cfg.validate()?;
    let scenario = load_scenario(&cfg.scenario)?;
    let obs_cfg = cfg.observation.resolve(cfg.repr, &scenario)?;
    let agent_cfg = cfg.resolved_agent();
    let run_id = run_id_of(&cfg.out);

    fs::create_dir_all(&cfg.out)?;
    write_manifest(&cfg.out, "train", &cfg.seeds, cfg)?;

    let runs: Vec<SeedOutcome> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            train_one_seed(
                &scenario,
                &obs_cfg,
                &agent_cfg,
                cfg.episodes,
                seed,
                &cfg.out.join(format!("seed{seed}")),
            )
        })
        .collect::<Result<_, _>>()?;

    let mut eval_csv = String::from(MetricsReport::CSV_HEADER);
    eval_csv.push('\n');
    for run in &runs {
        eval_csv.push_str(&run.eval.csv_row(&run_id, run.seed, cfg.repr.name(), cfg.episodes));
        eval_csv.push('\n');
    }
    fs::write(cfg.out.join("eval.csv"), &eval_csv)?;

    // Best agent = the seed with the lowest selection score (average
    // waiting time); report that seed's complete metric row.
    let best = runs
        .iter()
        .min_by(|a, b| {
            a.eval
                .avg_waiting_time
                .partial_cmp(&b.eval.avg_waiting_time)
                .expect("finite AWT")
                .then(a.seed.cmp(&b.seed))
        })
        .expect("at least one seed");
    let mut best_csv = String::from(MetricsReport::CSV_HEADER);
    best_csv.push('\n');
    best_csv.push_str(&best.eval.csv_row(&run_id, best.seed, cfg.repr.name(), cfg.episodes));
    best_csv.push('\n');
    fs::write(cfg.out.join("best.csv"), &best_csv)?;

    Ok(TrainOutcome {
        best_seed: best.seed,
        best: best.eval,
        per_seed: runs,
    })
}

// ---------------------------------------------------------------------------
// Evaluation and baseline controllers
// ---------------------------------------------------------------------------

/// What drives the signals during an evaluation run.
#[derive(Clone, Debug)]
pub enum ControllerSpec {
    /// Round-robin phases with a fixed green split.
    FixedTime { green_seconds: f64 },
    /// Uniformly random phase every decision.
    Random,
    /// Greedy DQN policy from a checkpoint file or directory.
    Checkpoint(PathBuf),
}

impl ControllerSpec {
    /// Parse a CLI controller argument: `fixed-time`, `random`, or a path.
    pub fn parse(s: &str) -> ControllerSpec {
        match s {
            "fixed-time" => ControllerSpec::FixedTime {
                green_seconds: DEFAULT_GREEN_SECONDS,
            },
            "random" => ControllerSpec::Random,
            path => ControllerSpec::Checkpoint(PathBuf::from(path)),
        }
    }

    pub fn label(&self) -> String {
        match self {
            ControllerSpec::FixedTime { .. } => "fixed-time".into(),
            ControllerSpec::Random => "random".into(),
            ControllerSpec::Checkpoint(p) => p.display().to_string(),
        }
    }
}

pub const DEFAULT_GREEN_SECONDS: f64 = 30.0;

/// Drive one episode with a non-learning controller and log it.
fn baseline_episode(
    scenario: &Scenario,
    controller: &ControllerSpec,
    seed: u64,
) -> Result<(crate::metrics::EpisodeLog, f64), HarnessError> {
    let mut sim = Simulation::with_seed(scenario, seed);
    let network = scenario.network.clone();
    let interval = network.intersection(IntersectionId(0)).program.decision_interval;
    for (_, inter) in network.intersections() {
        if (inter.program.decision_interval - interval).abs() > 1e-9 {
            return Err(HarnessError::Invalid(
                "intersections disagree on decision_interval".into(),
            ));
        }
    }
    let steps_per_decision = (interval / scenario.constants.dt).round() as usize;
    let decisions = (EPISODE_SECONDS / interval).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0xBA5E]));
    let mut builder = EpisodeLogBuilder::new(&sim);
    let mut cumulative = 0.0;

    for _ in 0..decisions {
        for (iid, inter) in network.intersections() {
            let phases = inter.program.phase_count();
            let action = match controller {
                ControllerSpec::FixedTime { green_seconds } => {
                    let cycle = green_seconds + inter.program.yellow_duration;
                    ((sim.clock() / cycle).floor() as usize) % phases
                }
                ControllerSpec::Random => rng.gen_range(0..phases),
                ControllerSpec::Checkpoint(_) => {
                    unreachable!("checkpoint evaluation goes through run_episode")
                }
            };
            sim.apply_action(iid, action)?;
        }
        for _ in 0..steps_per_decision {
            sim.step();
            builder.record_step(&sim);
        }
        for (iid, _) in network.intersections() {
            cumulative += reward(&sim, iid)?;
        }
    }
    Ok((builder.finish(&sim), cumulative))
}

/// Evaluate a controller over a set of seeds; one greedy episode per seed.
pub fn evaluate(
    controller: &ControllerSpec,
    scenario: &Scenario,
    obs_cfg: &ObservationConfig,
    seeds: &[u64],
) -> Result<Vec<(u64, MetricsReport, f64)>, HarnessError> {
    if seeds.is_empty() {
        return Err(HarnessError::Invalid("seed list must not be empty".into()));
    }
    let mut out = Vec::with_capacity(seeds.len());
    match controller {
        ControllerSpec::Checkpoint(path) => {
            let nets = load_agent_nets(path, scenario)?;
            for &seed in seeds {
                let mut agents = agents_from_nets(nets.clone(), scenario, obs_cfg)?;
                let mut sim = Simulation::with_seed(scenario, seed);
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0xE7A1]));
                let log = run_episode(&mut agents, &mut sim, RunMode::Eval, EPISODE_SECONDS, &mut rng)?;
                let reward_sum: f64 = agents.iter().map(|a| a.last_stats().cumulative_reward).sum();
                out.push((seed, finalize_metrics(&log)?, reward_sum));
            }
        }
        _ => {
            for &seed in seeds {
                let (log, reward_sum) = baseline_episode(scenario, controller, seed)?;
                out.push((seed, finalize_metrics(&log)?, reward_sum));
            }
        }
    }
    Ok(out)
}

/// Mean AWT of the fixed-time and random baselines, with a sanity warning
/// when random beats fixed-time (a sign the demand level is too low to
/// tell controllers apart).
pub fn compare_baselines(
    scenario: &Scenario,
    seeds: &[u64],
) -> Result<(f64, f64, bool), HarnessError> {
    let obs = ObservationConfig::for_network(ReprKind::VehicleCount, &scenario.network);
    let fixed = evaluate(
        &ControllerSpec::FixedTime {
            green_seconds: DEFAULT_GREEN_SECONDS,
        },
        scenario,
        &obs,
        seeds,
    )?;
    let random = evaluate(&ControllerSpec::Random, scenario, &obs, seeds)?;
    let mean = |rows: &[(u64, MetricsReport, f64)]| {
        rows.iter().map(|(_, m, _)| m.avg_waiting_time).sum::<f64>() / rows.len() as f64
    };
    let (f, r) = (mean(&fixed), mean(&random));
    let warned = r <= f;
    if warned {
        eprintln!(
            "warning: random baseline AWT ({r:.2} s) does not exceed fixed-time AWT ({f:.2} s); \
             demand may be too low to discriminate controllers"
        );
    }
    Ok((f, r, warned))
}

// ---------------------------------------------------------------------------
// Sparsity sweep
// ---------------------------------------------------------------------------

/// Prune a trained checkpoint to each sparsity level and evaluate every
/// level greedily over all seeds. No fine-tuning happens after pruning.
pub fn sparsity_sweep(
    checkpoint: &Path,
    scenario: &Scenario,
    obs_cfg: &ObservationConfig,
    levels: &[f64],
    seeds: &[u64],
) -> Result<SparsityReport, HarnessError> {
    if levels.is_empty() || seeds.is_empty() {
        return Err(HarnessError::Invalid("levels and seeds must not be empty".into()));
    }
    let nets = load_agent_nets(checkpoint, scenario)?;
    let mut sorted_levels = levels.to_vec();
    sorted_levels.sort_by(|a, b| a.partial_cmp(b).expect("finite levels"));

    let eval_level = |level: f64| -> Result<SparsityEntry, HarnessError> {
        let pruned: Vec<_> = nets
            .iter()
            .map(|n| prune_global_magnitude(n, level))
            .collect::<Result<_, _>>()?;
        let measured = pruned.iter().map(measured_sparsity).sum::<f64>() / pruned.len() as f64;
        let mut per_seed = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let mut agents = agents_from_nets(pruned.clone(), scenario, obs_cfg)?;
            let mut sim = Simulation::with_seed(scenario, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0xE7A1]));
            let log = run_episode(&mut agents, &mut sim, RunMode::Eval, EPISODE_SECONDS, &mut rng)?;
            let reward_sum: f64 = agents.iter().map(|a| a.last_stats().cumulative_reward).sum();
            per_seed.push((seed, finalize_metrics(&log)?, reward_sum));
        }
        let reports: Vec<MetricsReport> = per_seed.iter().map(|(_, m, _)| *m).collect();
        let mean_reward = per_seed.iter().map(|(_, _, r)| r).sum::<f64>() / per_seed.len() as f64;
        Ok(SparsityEntry {
            level,
            measured_sparsity: measured,
            metrics: mean_report(&reports),
            mean_reward,
            per_seed,
        })
    };

    let entries: Vec<SparsityEntry> = sorted_levels
        .par_iter()
        .map(|&level| eval_level(level))
        .collect::<Result<_, _>>()?;
    let dense = eval_level(0.0)?;
    Ok(SparsityReport { entries, dense })
}
