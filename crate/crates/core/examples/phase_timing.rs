//! Wall time per phase on a 128 x 128 lattice.
//!
//! `cargo run --release -p simm-core --example phase_timing [steps]`

use std::collections::HashMap;
use std::time::Instant;

use simm_core::{grid_step, Stage, World64, WorldConfig};

fn main() {
    let steps: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(50);
    let cfg = WorldConfig {
        m: 128,
        n_h: 16,
        n_c: 4,
        ..Default::default()
    };
    let mut world = World64::new(cfg).unwrap();
    let mut spent: HashMap<Stage, f64> = HashMap::new();
    let mut order = Vec::new();
    let start = Instant::now();
    for _ in 0..steps {
        let mut last = Instant::now();
        grid_step(&mut world, &mut |stage, _| {
            let now = Instant::now();
            if !spent.contains_key(&stage) {
                order.push(stage);
            }
            *spent.entry(stage).or_default() += (now - last).as_secs_f64() * 1e3;
            last = now;
        })
        .unwrap();
    }
    let total = start.elapsed().as_secs_f64() * 1e3;
    for stage in order {
        println!("{:<18} {:>8.2} ms/step", format!("{stage:?}"), spent[&stage] / steps as f64);
    }
    println!("{:<18} {:>8.2} ms/step", "total", total / steps as f64);
    println!("alive fraction {:.3}", world.alive_fraction());
}
