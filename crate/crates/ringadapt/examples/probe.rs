//! Temporary diagnostic: one clean-regime run at desk scale with epoch logs.

use ringadapt::dann::{evaluate, Reduction, TrainConfig};
use ringadapt::experiments::{
    evaluate_on_variants, generate_variants, train_regime_fold, variant_specs, ExperimentPlan,
    Regime,
};
use ringadapt::metrics::confusion;
use ringadapt::synth::synthetic_splits;

fn main() -> ringadapt::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let lr0: f64 = args.first().map_or(0.1, |a| a.parse().unwrap());
    let mean: bool = args.get(1).map_or(false, |a| a == "mean");
    let batch_size: usize = args.get(2).map_or(64, |a| a.parse().unwrap());
    let splits = synthetic_splits(2000, 500, 1000, 0);
    let variants = generate_variants(&splits, &variant_specs(), 0)?;
    let cfg = TrainConfig {
        epochs: 15,
        seed: 0,
        lr0,
        batch_size,
        reduction: if mean { Reduction::Mean } else { Reduction::Sum },
        ..Default::default()
    };
    let plan = ExperimentPlan {
        id: 3,
        regimes: vec![
            Regime { name: "none".into(), train_variants: vec![0], dann_target: None },
            Regime {
                name: "dann".into(),
                train_variants: vec![0],
                dann_target: Some(3),
            },
        ],
        folds: 2,
        cfg,
    };
    for regime_idx in 0..2 {
        let (model, log) = train_regime_fold(&plan, &variants, regime_idx, 0)?;
        for r in &log.records {
            println!(
                "{} epoch {:>2} lambda {:.3} lr {:.4} loss {:>12.3} val {:?}",
                log.regime, r.epoch, r.lambda, r.lr, r.train_loss, r.val_accuracy
            );
        }
        let scores = evaluate_on_variants(&model, &variants)?;
        println!(
            "{} test acc: none {:.3} noise {:.3} rot90 {:.3} ring {:.3}",
            log.regime,
            scores[0].accuracy,
            scores[1].accuracy,
            scores[2].accuracy,
            scores[3].accuracy
        );
        let ring_test = &variants[3].1.test;
        let predictions = evaluate(&model, ring_test);
        let truth: Vec<usize> = (0..ring_test.len()).map(|i| ring_test.label(i)).collect();
        let cm = confusion(&truth, &predictions, ring_test.num_classes)?;
        println!("{} ring confusion (rows = truth):", log.regime);
        for t in 0..ring_test.num_classes {
            let row: Vec<u64> = (0..ring_test.num_classes).map(|p| cm.count(t, p)).collect();
            println!("  {row:>4?}");
        }
    }
    Ok(())
}
