//! DQN traffic signal agents: epsilon-greedy control over Q-values, a
//! replay buffer, TD targets from a periodically synced target network, and
//! the decision-interval episode loop. Each intersection gets its own
//! independent agent; nothing is shared between them.

mod replay;

pub use replay::{ReplayBuffer, Transition};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{reward, EpisodeLog, EpisodeLogBuilder};
use crate::nn::{AdamState, DenseNet, Matrix, NetError};
use crate::obs::{build_flat, ObservationConfig};
use crate::sim::{IntersectionId, SimError, Simulation};
use crate::util::derive_seed;

/// Hidden layer widths shared by every representation's Q-network.
pub const HIDDEN_DIMS: [usize; 2] = [128, 64];

/// Seconds of simulated time per training or evaluation episode.
pub const EPISODE_SECONDS: f64 = 3600.0;

#[derive(Debug, Error)]
pub enum DqnError {
    #[error("agent/scenario mismatch: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Net(#[from] NetError),
}

/// Agent hyperparameters. The defaults mirror the experiment protocol;
/// grid search varies gamma, the learning rate, and the target update
/// cadence.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub gamma: f64,
    pub learning_rate: f64,
    /// Target network sync cadence, measured in completed episodes.
    pub target_update_episodes: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Episodes over which epsilon decays linearly before going flat.
    pub epsilon_decay_episodes: usize,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    /// Minimum buffered transitions before any update happens.
    pub learn_start: usize,
    /// Train every this many decision steps.
    pub train_every: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            gamma: 0.95,
            learning_rate: 1e-3,
            target_update_episodes: 5,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_episodes: 160,
            buffer_capacity: 50_000,
            batch_size: 64,
            learn_start: 1_000,
            train_every: 1,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(format!("gamma must be in [0, 1], got {}", self.gamma));
        }
        if self.learning_rate <= 0.0 {
            return Err("learning_rate must be positive".into());
        }
        if self.target_update_episodes == 0 || self.train_every == 0 {
            return Err("target_update_episodes and train_every must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.epsilon_start) || !(0.0..=1.0).contains(&self.epsilon_end) {
            return Err("epsilon bounds must be in [0, 1]".into());
        }
        if self.buffer_capacity == 0 || self.batch_size == 0 {
            return Err("buffer_capacity and batch_size must be positive".into());
        }
        Ok(())
    }

    /// Linear schedule from `epsilon_start` to `epsilon_end` over the first
    /// `epsilon_decay_episodes` episodes, flat afterwards.
    pub fn epsilon_at(&self, episode: usize) -> f64 {
        if self.epsilon_decay_episodes == 0 || episode >= self.epsilon_decay_episodes {
            return self.epsilon_end;
        }
        let frac = episode as f64 / self.epsilon_decay_episodes as f64;
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

/// Per-episode training statistics, refreshed by `run_episode`.
#[derive(Clone, Copy, Debug, Default)]
pub struct EpisodeStats {
    pub cumulative_reward: f64,
    pub mean_loss: f64,
    pub train_steps: usize,
    pub decisions: usize,
    pub epsilon: f64,
}

/// One intersection's DQN controller.
#[derive(Clone, Debug)]
pub struct DqnAgent {
    intersection: IntersectionId,
    obs_cfg: ObservationConfig,
    cfg: AgentConfig,
    online: DenseNet,
    target: DenseNet,
    opt: AdamState,
    buffer: ReplayBuffer,
    action_count: usize,
    episodes_done: usize,
    last_stats: EpisodeStats,
}

impl DqnAgent {
    /// Fresh agent with a seeded Q-network sized for `state_dim` inputs and
    /// `action_count` outputs.
    pub fn new(
        intersection: IntersectionId,
        obs_cfg: ObservationConfig,
        cfg: AgentConfig,
        state_dim: usize,
        action_count: usize,
        seed: u64,
    ) -> Result<Self, DqnError> {
        let mut dims = vec![state_dim];
        dims.extend_from_slice(&HIDDEN_DIMS);
        dims.push(action_count);
        let online = DenseNet::new(&dims, seed)?;
        Ok(Self::with_net(intersection, obs_cfg, cfg, online, action_count))
    }

    /// Wrap an existing Q-network, e.g. one loaded from a checkpoint.
    pub fn with_net(
        intersection: IntersectionId,
        obs_cfg: ObservationConfig,
        cfg: AgentConfig,
        online: DenseNet,
        action_count: usize,
    ) -> Self {
        let target = online.clone();
        let opt = AdamState::new(&online, cfg.learning_rate);
        DqnAgent {
            intersection,
            obs_cfg,
            cfg,
            online,
            target,
            opt,
            buffer: ReplayBuffer::new(cfg.buffer_capacity),
            action_count,
            episodes_done: 0,
            last_stats: EpisodeStats::default(),
        }
    }

    pub fn intersection(&self) -> IntersectionId {
        self.intersection
    }

    pub fn obs_config(&self) -> &ObservationConfig {
        &self.obs_cfg
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    pub fn online_net(&self) -> &DenseNet {
        &self.online
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer.len()
    }

    pub fn episodes_done(&self) -> usize {
        self.episodes_done
    }

    pub fn last_stats(&self) -> EpisodeStats {
        self.last_stats
    }

    /// Epsilon the next training episode will use.
    pub fn current_epsilon(&self) -> f64 {
        self.cfg.epsilon_at(self.episodes_done)
    }

    /// Epsilon-greedy action selection; greedy ties break toward the lowest
    /// action index.
    pub fn act(&self, state: &[f64], epsilon: f64, rng: &mut ChaCha8Rng) -> Result<usize, DqnError> {
        if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
            return Ok(rng.gen_range(0..self.action_count));
        }
        let q = self.online.forward(state)?;
        Ok(greedy_action(&q))
    }

    pub fn push_transition(&mut self, t: Transition) {
        self.buffer.push(t);
    }

    /// One minibatch update. Returns the batch loss, or `None` when the
    /// buffer has not reached the learn-start threshold yet.
    pub fn train_step(&mut self, rng: &mut ChaCha8Rng) -> Option<f64> {
        if self.buffer.len() < self.cfg.learn_start.max(1) {
            return None;
        }
        let batch = self.cfg.batch_size;
        let idx = self.buffer.sample_indices(rng, batch);
        let in_dim = self.online.input_dim();

        let mut states = Matrix::zeros(batch, in_dim);
        let mut next_states = Matrix::zeros(batch, in_dim);
        for (b, &i) in idx.iter().enumerate() {
            let t = self.buffer.get(i);
            states.row_mut(b).copy_from_slice(&t.state);
            next_states.row_mut(b).copy_from_slice(&t.next_state);
        }

        let next_q = self.target.forward_batch(&next_states);
        let trace = self.online.trace_batch(&states);
        let q = trace.output();

        let mut grad_out = Matrix::zeros(batch, self.action_count);
        let mut loss = 0.0;
        for (b, &i) in idx.iter().enumerate() {
            let t = self.buffer.get(i);
            let max_next = next_q.row(b).iter().copied().fold(f64::NEG_INFINITY, f64::max);
            // Time-limit truncation still bootstraps; traffic does not end
            // when the episode does.
            let y = t.reward + self.cfg.gamma * max_next;
            let err = q.get(b, t.action) - y;
            loss += err * err;
            grad_out.set(b, t.action, 2.0 * err / batch as f64);
        }
        loss /= batch as f64;

        let grads = self.online.backward_trace(&states, &trace, grad_out);
        self.opt.step(&mut self.online, &grads);
        Some(loss)
    }

    /// Copy the online network into the target network.
    pub fn sync_target(&mut self) {
        self.target = self.online.clone();
    }

    /// Adjust the optimizer's step size; moments are kept.
    pub fn set_learning_rate(&mut self, learning_rate: f64) {
        self.opt.learning_rate = learning_rate;
    }

    /// Episode bookkeeping: advances the episode counter and syncs the
    /// target network on its cadence.
    fn note_episode_end(&mut self) {
        self.episodes_done += 1;
        if self.episodes_done % self.cfg.target_update_episodes == 0 {
            self.sync_target();
        }
    }

    /// Digest of the frozen target network; handy for asserting sync
    /// behavior.
    pub fn target_digest(&self) -> u64 {
        self.target.digest()
    }
}

/// Index of the largest Q-value; ties go to the lowest index.
pub fn greedy_action(q: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate().skip(1) {
        if v > q[best] {
            best = i;
        }
    }
    best
}

/// TD targets `r + gamma * max_a Q_target(s', a)` for a batch of
/// transitions. Truncated transitions bootstrap like any other.
pub fn td_targets(
    transitions: &[&Transition],
    target: &DenseNet,
    gamma: f64,
) -> Result<Vec<f64>, DqnError> {
    if transitions.is_empty() {
        return Ok(Vec::new());
    }
    let in_dim = target.input_dim();
    let mut next_states = Matrix::zeros(transitions.len(), in_dim);
    for (b, t) in transitions.iter().enumerate() {
        if t.next_state.len() != in_dim {
            return Err(NetError::DimMismatch {
                expected: in_dim,
                got: t.next_state.len(),
            }
            .into());
        }
        next_states.row_mut(b).copy_from_slice(&t.next_state);
    }
    let next_q = target.forward_batch(&next_states);
    Ok(transitions
        .iter()
        .enumerate()
        .map(|(b, t)| {
            let max_next = next_q.row(b).iter().copied().fold(f64::NEG_INFINITY, f64::max);
            t.reward + gamma * max_next
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunMode {
    /// Epsilon-greedy actions, transitions stored, networks updated.
    Train,
    /// Greedy actions only; agents are left untouched.
    Eval,
}

/// Build one agent per intersection of a scenario, with seeds derived per
/// intersection so multi-agent setups stay reproducible.
pub fn agents_for_scenario(
    sim: &Simulation,
    obs_cfg: &ObservationConfig,
    agent_cfg: &AgentConfig,
    master_seed: u64,
) -> Result<Vec<DqnAgent>, DqnError> {
    let network = sim.network();
    let mut agents = Vec::with_capacity(network.intersection_count());
    for (iid, inter) in network.intersections() {
        let state_dim = obs_cfg.dim(inter.incoming.len());
        let actions = inter.program.phase_count();
        let seed = derive_seed(master_seed, &[iid.0 as u64]);
        agents.push(DqnAgent::new(iid, *obs_cfg, *agent_cfg, state_dim, actions, seed)?);
    }
    Ok(agents)
}

/// Drive one full episode: every `decision_interval` seconds each agent
/// observes its intersection, picks a phase, and the simulation advances;
/// the reward for the chosen action is read after the interval elapses.
///
/// In `Train` mode transitions are stored and minibatch updates run on
/// their cadence; the final transition of the episode is flagged truncated.
/// In `Eval` mode agents act greedily and are not modified in any way.
pub fn run_episode(
    agents: &mut [DqnAgent],
    sim: &mut Simulation,
    mode: RunMode,
    episode_seconds: f64,
    rng: &mut ChaCha8Rng,
) -> Result<EpisodeLog, DqnError> {
    let network = sim.network().clone();
    if agents.is_empty() {
        return Err(DqnError::Mismatch("no agents supplied".into()));
    }
    if agents.len() != network.intersection_count() {
        return Err(DqnError::Mismatch(format!(
            "{} agents for {} intersections",
            agents.len(),
            network.intersection_count()
        )));
    }
    let interval = network.intersection(agents[0].intersection).program.decision_interval;
    for agent in agents.iter() {
        let inter = network.intersection(agent.intersection);
        if (inter.program.decision_interval - interval).abs() > 1e-9 {
            return Err(DqnError::Mismatch(
                "intersections disagree on decision_interval".into(),
            ));
        }
        let want = agent.obs_cfg.dim(inter.incoming.len());
        if want != agent.online.input_dim() {
            return Err(DqnError::Mismatch(format!(
                "agent at '{}' expects {} inputs but the observation has {}",
                inter.name,
                agent.online.input_dim(),
                want
            )));
        }
        if inter.program.phase_count() != agent.action_count {
            return Err(DqnError::Mismatch(format!(
                "agent at '{}' has {} actions for {} phases",
                inter.name,
                agent.action_count,
                inter.program.phase_count()
            )));
        }
    }
    let steps_per_decision = (interval / sim.constants().dt).round() as usize;
    let decisions = (episode_seconds / interval).floor() as usize;
    if decisions == 0 {
        return Err(DqnError::Mismatch("episode shorter than one decision interval".into()));
    }

    let mut builder = EpisodeLogBuilder::new(sim);
    let mut stats = vec![EpisodeStats::default(); agents.len()];
    let mut loss_sums = vec![0.0f64; agents.len()];

    let mut observations: Vec<Vec<f64>> = agents
        .iter()
        .map(|a| build_flat(sim, a.intersection, &a.obs_cfg))
        .collect::<Result<_, _>>()?;

    let mut actions = vec![0usize; agents.len()];
    for decision in 0..decisions {
        for (ai, agent) in agents.iter().enumerate() {
            let epsilon = match mode {
                RunMode::Train => agent.current_epsilon(),
                RunMode::Eval => 0.0,
            };
            stats[ai].epsilon = epsilon;
            let action = agent.act(&observations[ai], epsilon, rng)?;
            sim.apply_action(agent.intersection, action)?;
            stats[ai].decisions += 1;
            actions[ai] = action;
        }

        for _ in 0..steps_per_decision {
            sim.step();
            builder.record_step(sim);
        }

        for (ai, agent) in agents.iter_mut().enumerate() {
            let r = reward(sim, agent.intersection)?;
            stats[ai].cumulative_reward += r;
            let next_obs = build_flat(sim, agent.intersection, &agent.obs_cfg)?;
            if mode == RunMode::Train {
                agent.push_transition(Transition {
                    state: std::mem::take(&mut observations[ai]).into_boxed_slice(),
                    action: actions[ai],
                    reward: r,
                    next_state: next_obs.clone().into_boxed_slice(),
                    truncated: decision + 1 == decisions,
                });
                if decision % agent.cfg.train_every == 0 {
                    if let Some(loss) = agent.train_step(rng) {
                        loss_sums[ai] += loss;
                        stats[ai].train_steps += 1;
                    }
                }
            }
            observations[ai] = next_obs;
        }
    }

    for (ai, agent) in agents.iter_mut().enumerate() {
        let mut s = stats[ai];
        s.mean_loss = if s.train_steps > 0 {
            loss_sums[ai] / s.train_steps as f64
        } else {
            0.0
        };
        agent.last_stats = s;
        if mode == RunMode::Train {
            agent.note_episode_end();
        }
    }

    Ok(builder.finish(sim))
}

#[cfg(test)]
mod tests;
