//! Hyperparameter grid search over discount factor, learning rate, and
//! target update cadence.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dqn::{agents_for_scenario, run_episode, AgentConfig, RunMode, EPISODE_SECONDS};
use crate::metrics::finalize_metrics;
use crate::obs::ObservationConfig;
use crate::sim::{Scenario, Simulation};
use crate::util::derive_seed;

use super::{resolve_agent, HarnessError};

/// Candidate lists and training budget for one grid search.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridSpec {
    pub gammas: Vec<f64>,
    pub learning_rates: Vec<f64>,
    pub target_updates: Vec<usize>,
    pub runs_per_combo: usize,
    pub episodes_per_run: usize,
}

impl Default for GridSpec {
    /// The standard search: three candidates per hyperparameter (27
    /// combinations), three runs of 70 episodes each.
    fn default() -> Self {
        GridSpec {
            gammas: vec![0.9, 0.95, 0.99],
            learning_rates: vec![0.1, 0.01, 0.001],
            target_updates: vec![5, 10, 15],
            runs_per_combo: 3,
            episodes_per_run: 70,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.gammas.is_empty() || self.learning_rates.is_empty() || self.target_updates.is_empty()
        {
            return Err("every candidate list needs at least one entry".into());
        }
        if self.runs_per_combo == 0 || self.episodes_per_run == 0 {
            return Err("runs_per_combo and episodes_per_run must be at least 1".into());
        }
        Ok(())
    }

    /// Cartesian product in (gamma, learning rate, target update) order.
    pub fn combos(&self) -> Vec<(f64, f64, usize)> {
        let mut out = Vec::with_capacity(self.len());
        for &g in &self.gammas {
            for &lr in &self.learning_rates {
                for &tu in &self.target_updates {
                    out.push((g, lr, tu));
                }
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.gammas.len() * self.learning_rates.len() * self.target_updates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Scores of one hyperparameter combination.
#[derive(Clone, Debug)]
pub struct ComboResult {
    pub index: usize,
    pub gamma: f64,
    pub learning_rate: f64,
    pub target_update: usize,
    /// Mean of the per-run scores.
    pub score: f64,
    pub run_scores: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct GridOutcome {
    /// Winning combination merged into the base agent config.
    pub best: AgentConfig,
    pub best_index: usize,
    /// All combinations, ranked best (lowest score) first.
    pub table: Vec<ComboResult>,
}

impl GridOutcome {
    /// Deterministic CSV: one row per combination, ranked by score.
    pub fn ranking_csv(&self) -> String {
        let runs = self.table.first().map(|c| c.run_scores.len()).unwrap_or(0);
        let mut out = String::from("rank,combo,gamma,lr,target_update,score");
        for r in 0..runs {
            out.push_str(&format!(",score_run{r}"));
        }
        out.push('\n');
        for (rank, c) in self.table.iter().enumerate() {
            out.push_str(&format!(
                "{rank},{},{},{},{},{}",
                c.index,
                fmt(c.gamma),
                fmt(c.learning_rate),
                c.target_update,
                fmt(c.score)
            ));
            for s in &c.run_scores {
                out.push_str(&format!(",{}", fmt(*s)));
            }
            out.push('\n');
        }
        out
    }
}

fn fmt(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.6}")
    }
}

/// Average waiting time over the final stretch of training episodes; the
/// selection score a combination is judged by (lower is better). Episodes
/// with zero arrivals score infinity.
const SCORE_WINDOW: usize = 10;

fn run_score(awts: &[f64]) -> f64 {
    let window = awts.len().min(SCORE_WINDOW);
    let tail = &awts[awts.len() - window..];
    tail.iter().sum::<f64>() / window as f64
}

/// Train every combination `runs_per_combo` times and rank them by the
/// mean selection score. Child seeds derive from (master seed, combo
/// index, run index), so results never depend on scheduling order.
pub fn grid_search(
    spec: &GridSpec,
    scenario: &Scenario,
    obs_cfg: &ObservationConfig,
    base: &AgentConfig,
    master_seed: u64,
) -> Result<GridOutcome, HarnessError> {
    spec.validate().map_err(HarnessError::Invalid)?;
    let combos = spec.combos();

    let jobs: Vec<(usize, usize)> = (0..combos.len())
        .flat_map(|c| (0..spec.runs_per_combo).map(move |r| (c, r)))
        .collect();

    let scores: Vec<f64> = jobs
        .par_iter()
        .map(|&(combo_idx, run_idx)| -> Result<f64, HarnessError> {
            let (gamma, lr, tu) = combos[combo_idx];
            let mut agent_cfg = resolve_agent(base, spec.episodes_per_run);
            agent_cfg.gamma = gamma;
            agent_cfg.learning_rate = lr;
            agent_cfg.target_update_episodes = tu;
            if base.epsilon_decay_episodes == 0 {
                agent_cfg.epsilon_decay_episodes =
                    ((spec.episodes_per_run as f64) * 0.8).round().max(1.0) as usize;
            }
            let seed = derive_seed(master_seed, &[combo_idx as u64, run_idx as u64]);
            let proto = Simulation::with_seed(scenario, seed);
            let mut agents = agents_for_scenario(&proto, obs_cfg, &agent_cfg, seed)?;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0xA11CE]));
            let mut awts = Vec::with_capacity(spec.episodes_per_run);
            for _ in 0..spec.episodes_per_run {
                let mut sim = Simulation::with_seed(scenario, seed);
                let log = run_episode(&mut agents, &mut sim, RunMode::Train, EPISODE_SECONDS, &mut rng)?;
                let awt = match finalize_metrics(&log) {
                    Ok(m) => m.avg_waiting_time,
                    Err(_) => f64::INFINITY,
                };
                awts.push(awt);
            }
            Ok(run_score(&awts))
        })
        .collect::<Result<_, _>>()?;

    let mut table: Vec<ComboResult> = combos
        .iter()
        .enumerate()
        .map(|(ci, &(gamma, lr, tu))| {
            let run_scores: Vec<f64> = jobs
                .iter()
                .zip(&scores)
                .filter(|((c, _), _)| *c == ci)
                .map(|(_, &s)| s)
                .collect();
            let score = run_scores.iter().sum::<f64>() / run_scores.len() as f64;
            ComboResult {
                index: ci,
                gamma,
                learning_rate: lr,
                target_update: tu,
                score,
                run_scores,
            }
        })
        .collect();

    table.sort_by(|a, b| {
        a.score
            .partial_cmp(&b.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.index.cmp(&b.index))
    });

    let winner = &table[0];
    let mut best = *base;
    best.gamma = winner.gamma;
    best.learning_rate = winner.learning_rate;
    best.target_update_episodes = winner.target_update;
    Ok(GridOutcome {
        best,
        best_index: winner.index,
        table,
    })
}
