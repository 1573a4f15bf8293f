use super::*;
use crate::nn::{Activation, Matrix};
use crate::obs::ReprKind;
use crate::sim::{random_scenario, Scenario};
use rand::SeedableRng;

fn obs_cfg() -> ObservationConfig {
    ObservationConfig {
        kind: ReprKind::VehicleCount,
        detection_radius: 150.0,
        cell_length: 7.5,
        speed_norm: 13.89,
        wait_cap: 300.0,
    }
}

/// Agent whose Q-network ignores the input and always outputs `bias`.
fn constant_q_agent(bias: Vec<f64>, state_dim: usize) -> DqnAgent {
    let actions = bias.len();
    let mut net = DenseNet::new(&[state_dim, actions], 0).unwrap();
    *net.weights_mut(0) = Matrix::zeros(actions, state_dim);
    *net.bias_mut(0) = bias;
    net.reapply_masks();
    assert_eq!(net.activation(0), Activation::Linear);
    DqnAgent::with_net(
        IntersectionId(0),
        obs_cfg(),
        AgentConfig::default(),
        net,
        actions,
    )
}

#[test]
fn greedy_action_breaks_ties_low() {
    assert_eq!(greedy_action(&[0.1, 0.9, 0.3, 0.3]), 1);
    assert_eq!(greedy_action(&[0.5, 0.5, 0.5]), 0);
    assert_eq!(greedy_action(&[-1.0]), 0);
}

#[test]
fn act_greedy_uses_argmax() {
    let agent = constant_q_agent(vec![0.1, 0.9, 0.3, 0.3], 3);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..10 {
        assert_eq!(agent.act(&[1.0, -1.0, 0.5], 0.0, &mut rng).unwrap(), 1);
    }
    let tied = constant_q_agent(vec![2.0, 2.0, 2.0, 2.0], 3);
    assert_eq!(tied.act(&[0.0, 0.0, 0.0], 0.0, &mut rng).unwrap(), 0);
}

#[test]
fn act_full_exploration_is_uniform() {
    let agent = constant_q_agent(vec![0.0, 0.0, 0.0, 0.0], 2);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let draws = 10_000;
    let mut counts = [0u32; 4];
    for _ in 0..draws {
        counts[agent.act(&[0.0, 0.0], 1.0, &mut rng).unwrap()] += 1;
    }
    // Chi-square against uniform over 4 actions, 3 degrees of freedom.
    let expected = draws as f64 / 4.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    assert!(chi2 < 16.27, "chi2 {chi2} exceeds the 0.1% critical value; counts {counts:?}");
}

#[test]
fn act_rejects_wrong_state_width() {
    let agent = constant_q_agent(vec![0.0, 1.0], 3);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(agent.act(&[0.0; 5], 0.0, &mut rng).is_err());
}

fn boxed(v: &[f64]) -> Box<[f64]> {
    v.to_vec().into_boxed_slice()
}

#[test]
fn td_targets_match_hand_arithmetic() {
    // Target net outputs a constant (0.5, 2.0) for every state.
    let net = {
        let mut n = DenseNet::new(&[2, 2], 0).unwrap();
        *n.weights_mut(0) = Matrix::zeros(2, 2);
        *n.bias_mut(0) = vec![0.5, 2.0];
        n.reapply_masks();
        n
    };
    let t1 = Transition {
        state: boxed(&[0.0, 0.0]),
        action: 0,
        reward: 1.0,
        next_state: boxed(&[1.0, 0.0]),
        truncated: false,
    };
    let t2 = Transition {
        state: boxed(&[0.0, 0.0]),
        action: 1,
        reward: -3.0,
        next_state: boxed(&[0.0, 1.0]),
        truncated: true,
    };
    // gamma 0: targets equal the rewards.
    let y0 = td_targets(&[&t1, &t2], &net, 0.0).unwrap();
    assert_eq!(y0, vec![1.0, -3.0]);
    // gamma 0.9 with max Q_target = 2: r + 1.8, truncated or not.
    let y9 = td_targets(&[&t1, &t2], &net, 0.9).unwrap();
    assert!((y9[0] - 2.8).abs() < 1e-12);
    assert!((y9[1] - (-1.2)).abs() < 1e-12);
    // All-zero target net: targets collapse to rewards.
    let zero = {
        let mut n = DenseNet::new(&[2, 2], 0).unwrap();
        *n.weights_mut(0) = Matrix::zeros(2, 2);
        *n.bias_mut(0) = vec![0.0, 0.0];
        n.reapply_masks();
        n
    };
    assert_eq!(td_targets(&[&t1], &zero, 0.9).unwrap(), vec![1.0]);
}

#[test]
fn train_step_is_noop_below_learn_start() {
    let mut agent = DqnAgent::new(
        IntersectionId(0),
        obs_cfg(),
        AgentConfig {
            learn_start: 10,
            ..AgentConfig::default()
        },
        4,
        2,
        7,
    )
    .unwrap();
    let before = agent.online_net().digest();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..5 {
        agent.push_transition(Transition {
            state: boxed(&[0.0; 4]),
            action: 0,
            reward: 1.0,
            next_state: boxed(&[0.0; 4]),
            truncated: false,
        });
    }
    assert!(agent.train_step(&mut rng).is_none());
    assert_eq!(agent.online_net().digest(), before);
}

#[test]
fn single_transition_q_converges_to_reward() {
    let cfg = AgentConfig {
        gamma: 0.0,
        learning_rate: 5e-3,
        learn_start: 1,
        batch_size: 8,
        ..AgentConfig::default()
    };
    let mut agent = DqnAgent::new(IntersectionId(0), obs_cfg(), cfg, 3, 2, 3).unwrap();
    let state = [1.0, 0.5, -0.5];
    agent.push_transition(Transition {
        state: boxed(&state),
        action: 1,
        reward: 0.7,
        next_state: boxed(&[0.0, 0.0, 0.0]),
        truncated: false,
    });
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..600 {
        agent.train_step(&mut rng).unwrap();
    }
    let q = agent.online_net().forward(&state).unwrap();
    assert!((q[1] - 0.7).abs() < 1e-2, "Q[1] = {}", q[1]);
}

#[test]
fn sync_target_copies_and_then_diverges() {
    let mut agent = DqnAgent::new(
        IntersectionId(0),
        obs_cfg(),
        AgentConfig {
            learn_start: 1,
            ..AgentConfig::default()
        },
        4,
        3,
        11,
    )
    .unwrap();
    agent.sync_target();
    assert_eq!(agent.target_digest(), agent.online_net().digest());
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    agent.push_transition(Transition {
        state: boxed(&[1.0, 0.0, 0.0, 0.0]),
        action: 0,
        reward: 5.0,
        next_state: boxed(&[0.0, 1.0, 0.0, 0.0]),
        truncated: false,
    });
    agent.train_step(&mut rng).unwrap();
    assert_ne!(
        agent.target_digest(),
        agent.online_net().digest(),
        "training must leave the target frozen"
    );
}

#[test]
fn target_sync_cadence_follows_episode_counter() {
    let mut agent = DqnAgent::new(
        IntersectionId(0),
        obs_cfg(),
        AgentConfig {
            target_update_episodes: 3,
            learn_start: 1,
            ..AgentConfig::default()
        },
        2,
        2,
        1,
    )
    .unwrap();
    // Drift the online net, then count episodes: the copy happens on the
    // third end-of-episode exactly.
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    agent.push_transition(Transition {
        state: boxed(&[1.0, 2.0]),
        action: 1,
        reward: -4.0,
        next_state: boxed(&[0.0, 0.0]),
        truncated: false,
    });
    agent.train_step(&mut rng).unwrap();
    assert_ne!(agent.target_digest(), agent.online_net().digest());
    agent.note_episode_end();
    assert_ne!(agent.target_digest(), agent.online_net().digest());
    agent.note_episode_end();
    assert_ne!(agent.target_digest(), agent.online_net().digest());
    agent.note_episode_end();
    assert_eq!(agent.target_digest(), agent.online_net().digest());
    assert_eq!(agent.episodes_done(), 3);
}

#[test]
fn epsilon_schedule_is_linear_then_flat() {
    let cfg = AgentConfig {
        epsilon_start: 1.0,
        epsilon_end: 0.05,
        epsilon_decay_episodes: 160,
        ..AgentConfig::default()
    };
    assert_eq!(cfg.epsilon_at(0), 1.0);
    assert!((cfg.epsilon_at(80) - 0.525).abs() < 1e-12);
    assert_eq!(cfg.epsilon_at(160), 0.05);
    assert_eq!(cfg.epsilon_at(500), 0.05);
}

// ---------------------------------------------------------------------------
// Small MDP oracles
// ---------------------------------------------------------------------------

/// Deterministic tabular MDP for oracle tests.
struct TabularMdp {
    /// next[state][action]
    next: Vec<Vec<usize>>,
    /// reward[state][action]
    reward: Vec<Vec<f64>>,
}

impl TabularMdp {
    fn states(&self) -> usize {
        self.next.len()
    }

    fn actions(&self) -> usize {
        self.next[0].len()
    }

    /// Q* by value iteration, run to a fixed point far below test tolerance.
    fn value_iteration(&self, gamma: f64) -> Vec<Vec<f64>> {
        let (ns, na) = (self.states(), self.actions());
        let mut q = vec![vec![0.0; na]; ns];
        for _ in 0..10_000 {
            let mut next_q = vec![vec![0.0; na]; ns];
            let mut delta: f64 = 0.0;
            for s in 0..ns {
                for a in 0..na {
                    let sp = self.next[s][a];
                    let best: f64 = q[sp].iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    next_q[s][a] = self.reward[s][a] + gamma * best;
                    delta = delta.max((next_q[s][a] - q[s][a]).abs());
                }
            }
            q = next_q;
            if delta < 1e-12 {
                break;
            }
        }
        q
    }

    fn one_hot(&self, s: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.states()];
        v[s] = 1.0;
        v
    }

    /// Fill a buffer with every (state, action) transition once.
    fn all_transitions(&self) -> Vec<Transition> {
        let mut out = Vec::new();
        for s in 0..self.states() {
            for a in 0..self.actions() {
                out.push(Transition {
                    state: self.one_hot(s).into_boxed_slice(),
                    action: a,
                    reward: self.reward[s][a],
                    next_state: self.one_hot(self.next[s][a]).into_boxed_slice(),
                    truncated: false,
                });
            }
        }
        out
    }
}

/// Train an agent on a tabular MDP until its Q matches value iteration.
fn train_to_fixed_point(mdp: &TabularMdp, gamma: f64, rounds: usize, steps_per_round: usize, seed: u64) -> (DqnAgent, Vec<Vec<f64>>) {
    let q_star = mdp.value_iteration(gamma);
    let cfg = AgentConfig {
        gamma,
        learning_rate: 3e-3,
        learn_start: 1,
        batch_size: 32,
        target_update_episodes: 1,
        ..AgentConfig::default()
    };
    let mut agent = DqnAgent::new(
        IntersectionId(0),
        obs_cfg(),
        cfg,
        mdp.states(),
        mdp.actions(),
        seed,
    )
    .unwrap();
    for t in mdp.all_transitions() {
        agent.push_transition(t);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xf00d);
    for _ in 0..rounds {
        for _ in 0..steps_per_round {
            agent.train_step(&mut rng).unwrap();
        }
        agent.sync_target();
    }
    // Polish phase: a smaller step size tightens the residual oscillation
    // around the fixed point.
    agent.set_learning_rate(3e-4);
    for _ in 0..rounds / 2 {
        for _ in 0..steps_per_round {
            agent.train_step(&mut rng).unwrap();
        }
        agent.sync_target();
    }
    (agent, q_star)
}

#[test]
fn two_state_chain_matches_value_iteration() {
    let mdp = TabularMdp {
        next: vec![vec![1, 0], vec![0, 1]],
        reward: vec![vec![1.0, 0.0], vec![2.0, 1.0]],
    };
    let gamma = 0.8;
    let (agent, q_star) = train_to_fixed_point(&mdp, gamma, 60, 150, 21);
    for s in 0..2 {
        let q = agent.online_net().forward(&mdp.one_hot(s)).unwrap();
        for a in 0..2 {
            assert!(
                (q[a] - q_star[s][a]).abs() < 1e-2,
                "Q({s},{a}) = {} vs Q* = {}",
                q[a],
                q_star[s][a]
            );
        }
    }
}

#[test]
fn reward_shift_raises_q_uniformly_and_keeps_greedy_actions() {
    // One-step problem (gamma = 0): Q converges to the reward table, so a
    // constant added to all rewards shifts Q by that constant.
    let base = TabularMdp {
        next: vec![vec![1, 0], vec![0, 1]],
        reward: vec![vec![1.0, 0.4], vec![0.2, 0.9]],
    };
    let shifted = TabularMdp {
        next: base.next.clone(),
        reward: base
            .reward
            .iter()
            .map(|row| row.iter().map(|r| r + 10.0).collect())
            .collect(),
    };
    let (a1, _) = train_to_fixed_point(&base, 0.0, 40, 120, 77);
    let (a2, _) = train_to_fixed_point(&shifted, 0.0, 40, 120, 77);
    for s in 0..2 {
        let q1 = a1.online_net().forward(&base.one_hot(s)).unwrap();
        let q2 = a2.online_net().forward(&base.one_hot(s)).unwrap();
        for a in 0..2 {
            assert!(
                ((q2[a] - q1[a]) - 10.0).abs() < 3e-2,
                "shift at ({s},{a}): {} vs {}",
                q1[a],
                q2[a]
            );
        }
        assert_eq!(greedy_action(&q1), greedy_action(&q2));
    }
}

// ---------------------------------------------------------------------------
// Episode loop
// ---------------------------------------------------------------------------

fn tiny_scenario() -> Scenario {
    // Deterministic small network with at least one intersection.
    for seed in 0.. {
        let sc = Scenario::from_doc(&random_scenario(seed)).unwrap();
        if sc.network.intersection_count() == 1 {
            return sc;
        }
    }
    unreachable!()
}

fn three_intersection_scenario() -> Scenario {
    for seed in 0.. {
        let sc = Scenario::from_doc(&random_scenario(seed)).unwrap();
        if sc.network.intersection_count() == 3 {
            return sc;
        }
    }
    unreachable!()
}

#[test]
fn episode_has_expected_decision_count() {
    let sc = tiny_scenario();
    let mut sim = Simulation::new(&sc);
    let obs = ObservationConfig::for_network(ReprKind::VehicleCount, &sc.network);
    let cfg = AgentConfig {
        learn_start: 50,
        ..AgentConfig::default()
    };
    let mut agents = agents_for_scenario(&sim, &obs, &cfg, 42).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let interval = sc.network.intersection(IntersectionId(0)).program.decision_interval;
    let log = run_episode(&mut agents, &mut sim, RunMode::Train, EPISODE_SECONDS, &mut rng).unwrap();
    let expected = (EPISODE_SECONDS / interval) as usize;
    assert_eq!(agents[0].last_stats().decisions, expected);
    assert_eq!(log.queue_sums[0].len(), expected * (interval as usize));
    assert_eq!(agents[0].episodes_done(), 1);
}

#[test]
fn eval_mode_leaves_agent_untouched() {
    let sc = tiny_scenario();
    let obs = ObservationConfig::for_network(ReprKind::ImageLike, &sc.network);
    let cfg = AgentConfig::default();
    let mut sim = Simulation::new(&sc);
    let mut agents = agents_for_scenario(&sim, &obs, &cfg, 1).unwrap();
    let weight_digest = agents[0].online_net().digest();
    let buffer_before = agents[0].buffer_len();
    let episodes_before = agents[0].episodes_done();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    run_episode(&mut agents, &mut sim, RunMode::Eval, 600.0, &mut rng).unwrap();
    assert_eq!(agents[0].online_net().digest(), weight_digest);
    assert_eq!(agents[0].buffer_len(), buffer_before);
    assert_eq!(agents[0].episodes_done(), episodes_before);
}

#[test]
fn three_intersections_mean_three_independent_agents() {
    let sc = three_intersection_scenario();
    let obs = ObservationConfig::for_network(ReprKind::VehicleCount, &sc.network);
    let cfg = AgentConfig {
        learn_start: 20,
        ..AgentConfig::default()
    };
    let mut sim = Simulation::new(&sc);
    let mut agents = agents_for_scenario(&sim, &obs, &cfg, 5).unwrap();
    assert_eq!(agents.len(), 3);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    run_episode(&mut agents, &mut sim, RunMode::Train, 900.0, &mut rng).unwrap();
    for agent in &agents {
        assert_eq!(agent.last_stats().decisions, agents[0].last_stats().decisions);
        assert!(agent.buffer_len() > 0, "every agent stores its own stream");
    }
    // Nets were seeded independently.
    assert_ne!(agents[0].online_net().digest(), agents[1].online_net().digest());
}

#[test]
fn mismatched_agent_count_is_rejected() {
    let sc = three_intersection_scenario();
    let obs = ObservationConfig::for_network(ReprKind::VehicleCount, &sc.network);
    let mut sim = Simulation::new(&sc);
    let mut agents = agents_for_scenario(&sim, &obs, &AgentConfig::default(), 5).unwrap();
    agents.pop();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let err = run_episode(&mut agents, &mut sim, RunMode::Eval, 600.0, &mut rng).unwrap_err();
    assert!(matches!(err, DqnError::Mismatch(_)));
}
