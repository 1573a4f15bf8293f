//! Train a DQN agent on the four-approach intersection and compare it
//! against the fixed-time and random baselines.
//!
//! This demo runs 40 episodes of one seed to stay quick (about a minute);
//! the full protocol (200 episodes, 5 seeds) is one CLI call:
//!
//!   greenwave train --scenario s.json --repr count --episodes 200 \
//!       --seeds 1,2,3,4,5 --out runs/count
//!
//! Run with: cargo run --release --example train_agent

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use greenwave::dqn::{agents_for_scenario, run_episode, AgentConfig, RunMode, EPISODE_SECONDS};
use greenwave::harness::{
    evaluate, gen_scenario, resolve_agent, ControllerSpec, Template, DEFAULT_GREEN_SECONDS,
};
use greenwave::metrics::finalize_metrics;
use greenwave::obs::{ObservationConfig, ReprKind};
use greenwave::sim::{Scenario, Simulation};

fn main() {
    let episodes = 40;
    let seed = 1u64;
    let doc = gen_scenario(Template::Single4Way, 360.0, 42).expect("template expands");
    let scenario = Scenario::from_doc(&doc).expect("template validates");
    let obs = ObservationConfig::for_network(ReprKind::VehicleCount, &scenario.network);
    let cfg = resolve_agent(&AgentConfig::default(), episodes);

    let proto = Simulation::with_seed(&scenario, seed);
    let mut agents = agents_for_scenario(&proto, &obs, &cfg, seed).expect("agents build");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    println!("training {episodes} episodes (count representation, seed {seed})...");
    for episode in 0..episodes {
        let mut sim = Simulation::with_seed(&scenario, seed);
        run_episode(&mut agents, &mut sim, RunMode::Train, EPISODE_SECONDS, &mut rng)
            .expect("episode runs");
        if (episode + 1) % 10 == 0 {
            let s = agents[0].last_stats();
            println!(
                "  episode {:<3} cumulative reward {:>9.0}  epsilon {:.2}  mean loss {:.2}",
                episode + 1,
                s.cumulative_reward,
                s.epsilon,
                s.mean_loss
            );
        }
    }

    // Greedy evaluation of the trained agent.
    let mut sim = Simulation::with_seed(&scenario, seed);
    let log = run_episode(&mut agents, &mut sim, RunMode::Eval, EPISODE_SECONDS, &mut rng)
        .expect("eval runs");
    let agent_metrics = finalize_metrics(&log).expect("vehicles arrived");

    let fixed = evaluate(
        &ControllerSpec::FixedTime {
            green_seconds: DEFAULT_GREEN_SECONDS,
        },
        &scenario,
        &obs,
        &[seed],
    )
    .expect("baseline runs");
    let random = evaluate(&ControllerSpec::Random, &scenario, &obs, &[seed]).expect("baseline runs");

    println!("\ncontroller    att (s)   awt (s)   ad (s)    aql");
    for (name, m) in [
        ("dqn", &agent_metrics),
        ("fixed-time", &fixed[0].1),
        ("random", &random[0].1),
    ] {
        println!(
            "{name:<13} {:<9.2} {:<9.2} {:<9.2} {:.3}",
            m.avg_travel_time, m.avg_waiting_time, m.avg_delay, m.avg_queue_length
        );
    }
    let ratio = agent_metrics.avg_waiting_time / fixed[0].1.avg_waiting_time;
    println!("\ndqn waiting time is {:.0}% of the fixed-time baseline", ratio * 100.0);
}
