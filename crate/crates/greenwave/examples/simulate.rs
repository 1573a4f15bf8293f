//! Drive the built-in four-approach intersection with a fixed-time
//! controller and print the episode metrics.
//!
//! Run with: cargo run --release --example simulate

use greenwave::harness::{gen_scenario, Template};
use greenwave::metrics::{finalize_metrics, EpisodeLogBuilder};
use greenwave::sim::{Scenario, Simulation};

fn main() {
    // 360 vehicles/hour on each approach, one hour of simulated traffic.
    let doc = gen_scenario(Template::Single4Way, 360.0, 42).expect("template expands");
    let scenario = Scenario::from_doc(&doc).expect("template validates");
    println!(
        "single4way: {} lanes, {} routes, {} scheduled vehicles",
        scenario.network.lane_count(),
        scenario.network.route_count(),
        scenario.demand.len()
    );

    let mut sim = Simulation::new(&scenario);
    let mut log = EpisodeLogBuilder::new(&sim);
    let (intersection, program) = {
        let (iid, inter) = scenario.network.intersections().next().expect("one intersection");
        (iid, inter.program.clone())
    };

    // Fixed-time control: hold each phase for 30 s of green plus the 3 s
    // yellow the simulator inserts on every change.
    let cycle = 30.0 + program.yellow_duration;
    let steps_per_decision = program.decision_interval as usize;
    for _ in 0..(3600.0 / program.decision_interval) as usize {
        let phase = ((sim.clock() / cycle).floor() as usize) % program.phase_count();
        sim.apply_action(intersection, phase).expect("valid phase");
        for _ in 0..steps_per_decision {
            sim.step();
            log.record_step(&sim);
        }
    }

    let metrics = finalize_metrics(&log.finish(&sim)).expect("vehicles arrived");
    println!("\nfixed-time control over one hour:");
    println!("  average travel time   {:7.2} s", metrics.avg_travel_time);
    println!("  average waiting time  {:7.2} s", metrics.avg_waiting_time);
    println!("  average delay         {:7.2} s", metrics.avg_delay);
    println!("  average queue length  {:7.3} veh/lane", metrics.avg_queue_length);
    println!("  arrived / unfinished  {} / {}", metrics.arrived, metrics.unfinished);
}
