//! Hyperparameter grid search, demo-sized.
//!
//! The full protocol searches 3 discount factors x 3 learning rates x 3
//! target update cadences = 27 combinations, 3 runs of 70 episodes each:
//!
//!   greenwave sweep --scenario s.json --repr count --seeds 42 --out runs/sweep
//!
//! This example shrinks that to a 2 x 2 x 1 grid with single short runs so
//! it finishes in about a minute.
//!
//! Run with: cargo run --release --example grid_search

use greenwave::dqn::AgentConfig;
use greenwave::harness::{gen_scenario, grid_search, GridSpec, Template};
use greenwave::obs::{ObservationConfig, ReprKind};
use greenwave::sim::Scenario;

fn main() {
    let doc = gen_scenario(Template::Single4Way, 360.0, 42).expect("template expands");
    let scenario = Scenario::from_doc(&doc).expect("template validates");
    let obs = ObservationConfig::for_network(ReprKind::VehicleCount, &scenario.network);

    let spec = GridSpec {
        gammas: vec![0.9, 0.99],
        learning_rates: vec![0.01, 0.001],
        target_updates: vec![5],
        runs_per_combo: 1,
        episodes_per_run: 25,
    };
    println!(
        "searching {} combinations x {} runs x {} episodes...",
        spec.len(),
        spec.runs_per_combo,
        spec.episodes_per_run
    );

    let outcome = grid_search(&spec, &scenario, &obs, &AgentConfig::default(), 42)
        .expect("grid search runs");

    println!("\nrank  combo  gamma  lr      target  score (awt over final episodes)");
    for (rank, c) in outcome.table.iter().enumerate() {
        println!(
            "{rank:<5} {:<6} {:<6} {:<7} {:<7} {:.3}",
            c.index, c.gamma, c.learning_rate, c.target_update, c.score
        );
    }
    println!(
        "\nselected: gamma {}, lr {}, target update every {} episodes",
        outcome.best.gamma, outcome.best.learning_rate, outcome.best.target_update_episodes
    );
}
