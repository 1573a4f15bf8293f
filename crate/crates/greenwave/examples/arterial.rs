//! Three signalized intersections on one arterial, each controlled by its
//! own independent DQN agent.
//!
//! Run with: cargo run --release --example arterial

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use greenwave::dqn::{agents_for_scenario, run_episode, AgentConfig, RunMode, EPISODE_SECONDS};
use greenwave::harness::{gen_scenario, resolve_agent, Template};
use greenwave::metrics::finalize_metrics;
use greenwave::obs::{ObservationConfig, ReprKind};
use greenwave::sim::{Scenario, Simulation};

fn main() {
    let episodes = 25;
    let seed = 3u64;
    let doc = gen_scenario(Template::Arterial3, 240.0, 5).expect("template expands");
    let scenario = Scenario::from_doc(&doc).expect("template validates");
    println!(
        "arterial3: {} intersections, {} lanes, {} routes, {} vehicles/h per approach",
        scenario.network.intersection_count(),
        scenario.network.lane_count(),
        scenario.network.route_count(),
        240
    );

    let obs = ObservationConfig::for_network(ReprKind::VehicleCount, &scenario.network);
    let cfg = resolve_agent(&AgentConfig::default(), episodes);
    let proto = Simulation::with_seed(&scenario, seed);
    let mut agents = agents_for_scenario(&proto, &obs, &cfg, seed).expect("agents build");
    println!("agents: {} (one per intersection, no parameter sharing)\n", agents.len());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for episode in 0..episodes {
        let mut sim = Simulation::with_seed(&scenario, seed);
        run_episode(&mut agents, &mut sim, RunMode::Train, EPISODE_SECONDS, &mut rng)
            .expect("episode runs");
        if (episode + 1) % 5 == 0 {
            let rewards: Vec<String> = agents
                .iter()
                .map(|a| format!("{:>8.0}", a.last_stats().cumulative_reward))
                .collect();
            println!(
                "episode {:<3} rewards per intersection [{}]  epsilon {:.2}",
                episode + 1,
                rewards.join(", "),
                agents[0].last_stats().epsilon
            );
        }
    }

    let mut sim = Simulation::with_seed(&scenario, seed);
    let log = run_episode(&mut agents, &mut sim, RunMode::Eval, EPISODE_SECONDS, &mut rng)
        .expect("eval runs");
    let m = finalize_metrics(&log).expect("vehicles arrived");
    println!("\ngreedy evaluation after training:");
    println!("  att {:.2} s, awt {:.2} s, ad {:.2} s, aql {:.3}", m.avg_travel_time, m.avg_waiting_time, m.avg_delay, m.avg_queue_length);
    println!("  arrived {} vehicles, {} still en route", m.arrived, m.unfinished);
}
