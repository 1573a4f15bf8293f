//! Build the three state representations from one simulation snapshot and
//! print them side by side.
//!
//! Run with: cargo run --release --example observations

use greenwave::harness::{gen_scenario, Template};
use greenwave::obs::{build_image, build_vector_count, build_vector_wait, ObservationConfig, ReprKind};
use greenwave::sim::{Scenario, Simulation};

fn main() {
    let doc = gen_scenario(Template::Single4Way, 480.0, 11).expect("template expands");
    let scenario = Scenario::from_doc(&doc).expect("template validates");
    let mut sim = Simulation::new(&scenario);
    let (intersection, lane_names): (_, Vec<String>) = {
        let (iid, inter) = scenario.network.intersections().next().expect("one intersection");
        let names = inter
            .incoming
            .iter()
            .map(|&l| scenario.network.lane(l).name.clone())
            .collect();
        (iid, names)
    };

    // Let traffic accumulate at the all-red-ish default phase for a while.
    for _ in 0..120 {
        sim.step();
    }

    let count_cfg = ObservationConfig::for_network(ReprKind::VehicleCount, &scenario.network);
    let wait_cfg = ObservationConfig::for_network(ReprKind::AvgWait, &scenario.network);
    let image_cfg = ObservationConfig::for_network(ReprKind::ImageLike, &scenario.network);

    let counts = build_vector_count(&sim, intersection, &count_cfg).expect("valid intersection");
    let waits = build_vector_wait(&sim, intersection, &wait_cfg).expect("valid intersection");
    let image = build_image(&sim, intersection, &image_cfg).expect("valid intersection");

    println!("t = {:.0} s, detection radius {} m\n", sim.clock(), count_cfg.detection_radius);
    println!("lane     vehicles  mean wait (s)");
    for (i, name) in lane_names.iter().enumerate() {
        println!("{name:<8} {:<9} {:.1}", counts.values[i], waits.values[i]);
    }

    let (cells, lanes, channels) = image.shape();
    println!("\nimage-like state: shape ({cells} cells x {lanes} lanes x {channels} channels)");
    println!("occupancy map (rows = cells, nearest the stop line first; columns = lanes):");
    for cell in 0..cells {
        let row: String = (0..lanes)
            .map(|lane| if image.get(cell, lane, 0) > 0.0 { '#' } else { '.' })
            .collect();
        println!("  {row}");
    }
    println!("\nchannel values for occupied cells of lane 0:");
    for cell in 0..cells {
        if image.get(cell, 0, 0) > 0.0 {
            println!(
                "  cell {cell:<2} presence 1.0, speed {:.3}, wait {:.3}",
                image.get(cell, 0, 1),
                image.get(cell, 0, 2)
            );
        }
    }
}
