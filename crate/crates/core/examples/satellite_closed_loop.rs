//! Station keeping around a no-go zone: runs the receding-horizon loop from
//! a drifting orbit and reports how close the satellite ends up.
//!
//! ```text
//! cargo run --release --example satellite_closed_loop -- [steps] [trace.csv]
//! ```

use mimpc::bench::satellite::{initial_state, make_satellite, SatelliteConfig};
use mimpc::mpc::{run_closed_loop, ClosedLoopConfig};

/// Distance to the origin at the end and number of samples inside the zone.
pub fn run(steps: usize, csv: Option<&str>) -> mimpc::Result<(f64, usize)> {
    let sat = SatelliteConfig::default();
    let (prob, plant) = make_satellite(&sat)?;
    let cfg = ClosedLoopConfig {
        steps,
        ..Default::default()
    };
    let trace = run_closed_loop(&prob, &plant, &initial_state(&sat), &cfg)?;

    let states = trace.states();
    let in_zone = states
        .iter()
        .filter(|x| sat.zone.contains_strictly(x[0], x[1], 1e-6))
        .count();
    let reached = states.iter().position(|x| x[0].hypot(x[1]) <= 10.0);
    let worst_ms = trace.records.iter().map(|r| r.time_ms).fold(0.0, f64::max);
    println!(
        "steps {}  nodes {}  qp solves {}  worst step {worst_ms:.1} ms  samples in zone {in_zone}",
        trace.len(),
        trace.total_nodes(),
        trace.total_qp_solves(),
    );
    match reached {
        Some(k) => println!("entered the 10 m ball at sample {k}"),
        None => println!("did not reach the 10 m ball"),
    }
    let end = &trace.final_state;
    println!(
        "final state X {:.2} Y {:.2} Vx {:.4} Vy {:.4}",
        end[0], end[1], end[2], end[3]
    );
    if let Some(path) = csv {
        trace.save_csv(path.as_ref())?;
    }
    Ok((end[0].hypot(end[1]), in_zone))
}

fn main() -> mimpc::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps = args.next().and_then(|s| s.parse().ok()).unwrap_or(200);
    let csv = args.next();
    run(steps, csv.as_deref()).map(|_| ())
}
