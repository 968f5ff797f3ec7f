//! Fast runtime verification of the load-bearing invariants: sinogram
//! round-trip cancellation, reversal-layer semantics, full-model gradient
//! correctness, and label masking. The `check` command runs all of them;
//! each returns a one-line summary on success.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tape;
use crate::dann::{dann_loss, forward, DannModel, Reduction, PARAM_ARRAYS};
use crate::distortion::{ring_artifact, ring_difference, RingParams};
use crate::error::{Error, Result};
use crate::imaging::diagonal_side;
use crate::projection::{iradon, radon};

fn fail(msg: String) -> Error {
    Error::CheckFailed(msg)
}

fn sample_image() -> crate::imaging::Image {
    crate::synth::synthetic_splits(1, 1, 1, 17).train.image(0)
}

fn identity_params(img: &crate::imaging::Image) -> RingParams {
    let bins = diagonal_side(img.height());
    RingParams {
        gains: vec![1.0; bins],
        dx: 0,
        dy: 0,
    }
}

/// With unit gains and zero shift the reconstruction difference is exactly
/// zero and the distorted image is bit-identical to the input.
pub fn identity_distortion_is_exact() -> Result<String> {
    let img = sample_image();
    let params = identity_params(&img);
    let diff = ring_difference(&img, &params, img.width())?;
    if diff.pixels().iter().any(|&d| d.to_bits() != 0.0f64.to_bits()) {
        return Err(fail("identity distortion left a nonzero difference".into()));
    }
    let out = ring_artifact(&img, &params, img.width())?;
    let same_bits = out
        .pixels()
        .iter()
        .zip(img.pixels())
        .all(|(a, b)| a.to_bits() == b.to_bits());
    if !same_bits {
        return Err(fail("identity distortion changed image bits".into()));
    }
    Ok("identity distortion is exactly zero".into())
}

/// The naive projection round trip has visible error at 28x28; the
/// difference-based pipeline removes it entirely (previous check).
pub fn naive_round_trip_error() -> Result<String> {
    let img = sample_image();
    let sino = radon(&img, img.width())?;
    let rec = iradon(&sino, img.height())?;
    let max_err = rec
        .pixels()
        .iter()
        .zip(img.pixels())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    if max_err <= 0.01 {
        return Err(fail(format!(
            "naive round-trip error {max_err:.4} unexpectedly small"
        )));
    }
    Ok(format!("naive round-trip error {max_err:.3} > 0.01"))
}

/// The reversal layer is the identity forward and scales gradients by
/// exactly -lambda backward.
pub fn grl_contract() -> Result<String> {
    for &lambda in &[0.0, 0.37, 1.0] {
        let mut tape = Tape::new();
        let x = tape.leaf(4, 1, vec![0.3, -1.25, 0.0, 2.5])?;
        let y = tape.gradient_reversal(x, lambda);
        let forward_identical = tape
            .values(y)
            .iter()
            .zip(tape.values(x))
            .all(|(a, b)| a.to_bits() == b.to_bits());
        if !forward_identical {
            return Err(fail(format!("reversal changed forward values at lambda {lambda}")));
        }
        let s = tape.sum(y)?;
        tape.backward(s)?;
        if tape.grad(x).iter().any(|&g| g != -lambda) {
            return Err(fail(format!(
                "reversal gradient is not -lambda at lambda {lambda}"
            )));
        }
    }
    Ok("reversal layer: identity forward, -lambda backward".into())
}

fn toy_setup() -> (DannModel, Vec<f64>, Vec<usize>, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let model = DannModel::new(8, 5, 4, 3, 0.5, &mut rng).expect("valid dims");
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let inputs: Vec<f64> = (0..6 * 8).map(|_| rng.gen_range(0.0..1.0)).collect();
    let labels: Vec<usize> = (0..6).map(|i| i % 3).collect();
    let domain: Vec<u8> = (0..6).map(|i| u8::from(i % 2 == 1)).collect();
    (model, inputs, labels, domain)
}

fn perturb(model: &DannModel, array_idx: usize, i: usize, h: f64) -> DannModel {
    let mut out = model.clone();
    let layers = out.layers_mut();
    let arr = if array_idx % 2 == 0 {
        &mut layers[array_idx / 2].weights
    } else {
        &mut layers[array_idx / 2].bias
    };
    arr[i] += h;
    out
}

/// Full-objective gradients versus central finite differences on a small
/// model. The reversal layer makes the used gradient the gradient of a
/// per-group objective: layers above it descend CE - lambda*BCE, the heads
/// descend CE + BCE; the numeric oracle differentiates the matching
/// objective for each group. Dropout masks are pinned by reseeding.
pub fn gradient_check() -> Result<f64> {
    let (base, inputs, labels, domain) = toy_setup();
    let lambda = 0.6;

    let eval = |model: &DannModel| -> Result<(f64, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut tape = Tape::new();
        let pass = forward(&mut tape, model, &inputs, lambda, true, true, &mut rng)?;
        let weights: Vec<f64> = domain.iter().map(|&d| 1.0 - f64::from(d)).collect();
        let ce = tape.softmax_cross_entropy(pass.class_logits, &labels)?;
        let class_term = tape.weighted_sum(ce, &weights)?;
        let bce = tape.sigmoid_bce(pass.domain_logits.expect("domain head on"), &domain)?;
        let domain_term = tape.sum(bce)?;
        Ok((tape.scalar(class_term), tape.scalar(domain_term)))
    };

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut tape = Tape::new();
    let pass = forward(&mut tape, &base, &inputs, lambda, true, true, &mut rng)?;
    let loss = dann_loss(
        &mut tape,
        pass.class_logits,
        &labels,
        &domain,
        pass.domain_logits,
        Reduction::Sum,
    )?;
    tape.backward(loss)?;
    let grads = pass.grads(&tape);

    let h = 1e-5;
    let mut max_rel = 0.0f64;
    for array_idx in 0..PARAM_ARRAYS {
        for i in 0..grads.arrays[array_idx].len() {
            let (ce_p, bce_p) = eval(&perturb(&base, array_idx, i, h))?;
            let (ce_m, bce_m) = eval(&perturb(&base, array_idx, i, -h))?;
            let d_ce = (ce_p - ce_m) / (2.0 * h);
            let d_bce = (bce_p - bce_m) / (2.0 * h);
            let numeric = if array_idx < 4 {
                d_ce - lambda * d_bce
            } else {
                d_ce + d_bce
            };
            let analytic = grads.arrays[array_idx][i];
            let scale = analytic.abs().max(numeric.abs()).max(1e-6);
            max_rel = max_rel.max((numeric - analytic).abs() / scale);
        }
    }
    if max_rel >= 1e-4 {
        return Err(fail(format!("max relative gradient error {max_rel:.2e}")));
    }
    Ok(max_rel)
}

/// Zeroing an instance's loss weight yields the same parameter gradients as
/// deleting its label-loss term outright, to 1e-12.
pub fn masking_equivalence() -> Result<f64> {
    let (model, inputs, labels, _) = toy_setup();
    let batch = 6;
    let masked_out = 2usize;

    let grads_for = |rows: &[usize], weights: &[f64]| -> Result<Vec<Vec<f64>>> {
        let sel_inputs: Vec<f64> = rows
            .iter()
            .flat_map(|&r| inputs[r * 8..(r + 1) * 8].to_vec())
            .collect();
        let sel_labels: Vec<usize> = rows.iter().map(|&r| labels[r]).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut tape = Tape::new();
        // Dropout off so differently sized batches share the forward map.
        let pass = forward(&mut tape, &model, &sel_inputs, 0.0, false, false, &mut rng)?;
        let ce = tape.softmax_cross_entropy(pass.class_logits, &sel_labels)?;
        let loss = tape.weighted_sum(ce, weights)?;
        tape.backward(loss)?;
        Ok(pass.grads(&tape).arrays.to_vec())
    };

    let all_rows: Vec<usize> = (0..batch).collect();
    let mut weights = vec![1.0; batch];
    weights[masked_out] = 0.0;
    let masked = grads_for(&all_rows, &weights)?;

    let kept_rows: Vec<usize> = (0..batch).filter(|&r| r != masked_out).collect();
    let deleted = grads_for(&kept_rows, &vec![1.0; batch - 1])?;

    let mut max_diff = 0.0f64;
    for (a, b) in masked.iter().zip(&deleted) {
        for (x, y) in a.iter().zip(b) {
            max_diff = max_diff.max((x - y).abs());
        }
    }
    if max_diff > 1e-12 {
        return Err(fail(format!("masking differs from deletion by {max_diff:.2e}")));
    }
    Ok(max_diff)
}

/// Runs every check, returning one summary line per check.
pub fn run_all() -> Result<Vec<String>> {
    let mut lines = Vec::new();
    lines.push(identity_distortion_is_exact()?);
    lines.push(naive_round_trip_error()?);
    lines.push(grl_contract()?);
    let rel = gradient_check()?;
    lines.push(format!("gradient check: max relative error {rel:.2e} < 1e-4"));
    let diff = masking_equivalence()?;
    lines.push(format!("masking equivalence: max gradient gap {diff:.2e} <= 1e-12"));
    Ok(lines)
}
