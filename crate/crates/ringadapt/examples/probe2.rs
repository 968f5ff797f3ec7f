//! Temporary diagnostic: magnitude of the ring difference on the dark
//! background versus on the figure.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ringadapt::distortion::{apply_distortion, DistortionSpec};
use ringadapt::synth::synthetic_splits;

fn main() -> ringadapt::Result<()> {
    let spec = DistortionSpec::ring_artifact();
    let n = 24;
    let splits = synthetic_splits(n, 1, 1, 0);
    let (mut bg_mean, mut bg_max, mut all_mean, mut all_max) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for i in 0..n {
        let img = splits.train.image(i);
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + i as u64);
        let out = apply_distortion(&img, &spec, &mut rng)?;
        let (mut bsum, mut bn) = (0.0, 0);
        for (a, b) in out.pixels().iter().zip(img.pixels()) {
            let d = (a - b).abs();
            all_mean += d / (784.0 * n as f64);
            all_max = all_max.max(d);
            if *b < 0.05 {
                bsum += d;
                bn += 1;
                bg_max = bg_max.max(d);
            }
        }
        bg_mean += bsum / bn.max(1) as f64 / n as f64;
    }
    println!("ring diff: all mean {all_mean:.4} max {all_max:.4}");
    println!("ring diff on background: mean {bg_mean:.4} max {bg_max:.4}");
    Ok(())
}
