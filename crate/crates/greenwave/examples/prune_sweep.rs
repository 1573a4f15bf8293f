//! Magnitude-prune a trained Q-network at increasing sparsity levels and
//! watch the control quality respond.
//!
//! Run with: cargo run --release --example prune_sweep

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use greenwave::dqn::{agents_for_scenario, run_episode, AgentConfig, RunMode, EPISODE_SECONDS};
use greenwave::harness::{gen_scenario, resolve_agent, Template};
use greenwave::metrics::{finalize_metrics, reward};
use greenwave::obs::{build_flat, ObservationConfig, ReprKind};
use greenwave::prune::{measured_sparsity, prune_global_magnitude};
use greenwave::sim::{Scenario, Simulation};

fn main() {
    let episodes = 40;
    let seed = 1u64;
    let doc = gen_scenario(Template::Single4Way, 360.0, 42).expect("template expands");
    let scenario = Scenario::from_doc(&doc).expect("template validates");
    let obs = ObservationConfig::for_network(ReprKind::VehicleCount, &scenario.network);
    let cfg = resolve_agent(&AgentConfig::default(), episodes);

    println!("training a dense agent for {episodes} episodes...");
    let proto = Simulation::with_seed(&scenario, seed);
    let mut agents = agents_for_scenario(&proto, &obs, &cfg, seed).expect("agents build");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..episodes {
        let mut sim = Simulation::with_seed(&scenario, seed);
        run_episode(&mut agents, &mut sim, RunMode::Train, EPISODE_SECONDS, &mut rng)
            .expect("episode runs");
    }
    let trained = agents[0].online_net().clone();
    let intersection = agents[0].intersection();
    println!(
        "trained net: {:?} dims, {} weights\n",
        trained.dims(),
        trained.weight_count()
    );

    // Evaluate the pruned net greedily at each sparsity level. No
    // fine-tuning happens after pruning.
    println!("level  measured  eval reward  awt (s)");
    for level in (0..=10).map(|i| i as f64 * 0.05) {
        let pruned = prune_global_magnitude(&trained, level).expect("level in range");
        let mut sim = Simulation::with_seed(&scenario, seed);
        let program = &scenario.network.intersection(intersection).program;
        let steps = program.decision_interval as usize;
        let decisions = (EPISODE_SECONDS / program.decision_interval) as usize;
        let mut builder = greenwave::metrics::EpisodeLogBuilder::new(&sim);
        let mut total_reward = 0.0;
        for _ in 0..decisions {
            let state = build_flat(&sim, intersection, &obs).expect("observation builds");
            let q = pruned.forward(&state).expect("dims match");
            let action = greenwave::dqn::greedy_action(&q);
            sim.apply_action(intersection, action).expect("valid action");
            for _ in 0..steps {
                sim.step();
                builder.record_step(&sim);
            }
            total_reward += reward(&sim, intersection).expect("valid intersection");
        }
        let metrics = finalize_metrics(&builder.finish(&sim)).expect("vehicles arrived");
        println!(
            "{level:<6.2} {:<9.3} {:<12.0} {:.2}",
            measured_sparsity(&pruned),
            total_reward,
            metrics.avg_waiting_time
        );
    }
}
