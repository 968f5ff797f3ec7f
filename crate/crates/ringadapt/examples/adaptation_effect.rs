//! Measures the benefit of adversarial adaptation: trains a clean-only
//! baseline and an adapted model (unlabeled ring-artifact target) on a
//! fresh synthetic corpus per seed, then compares ring-test accuracy.
//!
//! Usage: cargo run --release --example adaptation_effect [seed ...]

use std::time::Instant;

use ringadapt::experiments::{adaptation_effect_suite, DeskScale};

fn main() -> ringadapt::Result<()> {
    let seeds: Vec<u64> = std::env::args()
        .skip(1)
        .map(|a| a.parse().expect("seeds are unsigned integers"))
        .collect();
    let seeds = if seeds.is_empty() { vec![0] } else { seeds };
    let scale = DeskScale::default();
    println!(
        "scale: train={} val={} test={} folds={} epochs={}",
        scale.train, scale.val, scale.test, scale.folds, scale.epochs
    );

    let start = Instant::now();
    let outcomes = adaptation_effect_suite(&seeds, scale)?;
    for o in &outcomes {
        println!(
            "seed {:>3}: baseline ring acc {:.4}  adapted ring acc {:.4}  margin {:+.1} points",
            o.seed,
            o.baseline_ring_accuracy,
            o.dann_ring_accuracy,
            o.margin_points()
        );
    }
    println!("elapsed: {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
