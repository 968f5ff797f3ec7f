//! The three experimental designs, run over the four dataset variants at
//! a configurable scale: single-variant training, union training, and
//! adversarial adaptation with an unlabeled target.
//!
//! Folds are cut once over the pooled train+val indices and applied to
//! every index-aligned variant, so a fold always holds the same underlying
//! images in every distortion.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dann::{
    evaluate, train, DannModel, EpochRecord, TrainConfig, DEFAULT_DROPOUT, DEFAULT_FEATURE_DIM,
    DEFAULT_HIDDEN_DIM,
};
use crate::dataset::{read_npz, split_folds, LabeledDataset, SplitSet};
use crate::distortion::DistortionSpec;
use crate::error::{Error, Result};
use crate::metrics::{confusion, macro_scores, CellScores, MacroScores, ResultMatrix, METRIC_NAMES};
use crate::rng::{derive_seed, stream_rng};

/// Canonical variant order used for matrix columns and file names.
pub const VARIANT_SLUGS: [&str; 4] = ["none", "noise", "rot90", "ring"];

/// The distortion spec behind each canonical variant.
pub fn variant_specs() -> [DistortionSpec; 4] {
    [
        DistortionSpec::Identity,
        DistortionSpec::uniform_noise(),
        DistortionSpec::Rotate90,
        DistortionSpec::ring_artifact(),
    ]
}

/// One training regime: which variants supply labeled training data, and
/// optionally which supplies unlabeled target data for adaptation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Regime {
    pub name: String,
    /// Indices into [`VARIANT_SLUGS`].
    pub train_variants: Vec<usize>,
    /// Unlabeled target variant for adversarial adaptation.
    pub dann_target: Option<usize>,
}

/// A full experimental design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub id: u8,
    pub regimes: Vec<Regime>,
    pub folds: usize,
    pub cfg: TrainConfig,
}

/// The published designs: 1 trains one model per variant; 2 trains on two
/// three-variant unions; 3 adapts from clean source data to an unlabeled
/// ring or rotation target.
pub fn experiment_plan(id: u8, folds: usize, cfg: TrainConfig) -> Result<ExperimentPlan> {
    let regimes = match id {
        1 => (0..4)
            .map(|v| Regime {
                name: VARIANT_SLUGS[v].to_string(),
                train_variants: vec![v],
                dann_target: None,
            })
            .collect(),
        2 => vec![
            Regime {
                name: "none+noise+rot90".into(),
                train_variants: vec![0, 1, 2],
                dann_target: None,
            },
            Regime {
                name: "none+noise+ring".into(),
                train_variants: vec![0, 1, 3],
                dann_target: None,
            },
        ],
        3 => vec![
            Regime {
                name: "dann_none_to_ring".into(),
                train_variants: vec![0],
                dann_target: Some(3),
            },
            Regime {
                name: "dann_none_to_rot90".into(),
                train_variants: vec![0],
                dann_target: Some(2),
            },
        ],
        other => {
            return Err(Error::Config(format!(
                "experiment id must be 1, 2, or 3, got {other}"
            )))
        }
    };
    let plan = ExperimentPlan {
        id,
        regimes,
        folds,
        cfg,
    };
    plan.validate()?;
    Ok(plan)
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.id) {
            return Err(Error::Config(format!("experiment id {}", self.id)));
        }
        if self.folds < 2 {
            return Err(Error::Config("need at least 2 folds".into()));
        }
        if self.regimes.is_empty() {
            return Err(Error::Config("plan has no regimes".into()));
        }
        for regime in &self.regimes {
            if regime.train_variants.is_empty()
                || regime.train_variants.iter().any(|&v| v >= 4)
                || regime.dann_target.is_some_and(|v| v >= 4)
            {
                return Err(Error::Config(format!("regime {} is malformed", regime.name)));
            }
        }
        self.cfg.validate()
    }
}

/// Per-epoch logs of one (regime, fold) run.
#[derive(Debug, Clone)]
pub struct RunLog {
    pub regime: String,
    pub fold: usize,
    pub records: Vec<EpochRecord>,
}

/// Everything a finished experiment produces before serialization.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub matrix: ResultMatrix,
    pub logs: Vec<RunLog>,
}

fn concat_datasets(parts: &[LabeledDataset], name: &str) -> Result<LabeledDataset> {
    let first = parts.first().ok_or(Error::EmptyDataset)?;
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for ds in parts {
        if (ds.height, ds.width, ds.num_classes) != (first.height, first.width, first.num_classes)
        {
            return Err(Error::Incompatible(
                "variant datasets disagree on shape or classes".into(),
            ));
        }
        images.extend_from_slice(ds.raw_images());
        labels.extend_from_slice(ds.labels());
    }
    LabeledDataset::new(name, first.height, first.width, first.num_classes, images, labels)
}

/// Train+val of one variant pooled into a single index space.
fn pool_variant(splits: &SplitSet) -> Result<LabeledDataset> {
    concat_datasets(
        &[splits.train.clone(), splits.val.clone()],
        format!("{}_pool", splits.train.name).as_str(),
    )
}

// Stream tags for the independent random decisions of a plan.
const FOLD_STREAM: u64 = 0xF0_1D_5;
const MODEL_STREAM: u64 = 0x30_DE_1;
const RUN_STREAM: u64 = 0x5EED_5;

/// Checks the canonical variant layout and pools each variant's train+val.
fn pooled_variants(variants: &[(String, SplitSet)]) -> Result<Vec<LabeledDataset>> {
    if variants.len() != 4 || variants.iter().map(|(s, _)| s.as_str()).ne(VARIANT_SLUGS) {
        return Err(Error::Incompatible(
            "expected the four canonical variants in order".into(),
        ));
    }
    let pools: Vec<LabeledDataset> = variants
        .iter()
        .map(|(_, s)| pool_variant(s))
        .collect::<Result<_>>()?;
    let n = pools[0].len();
    if pools.iter().any(|p| p.len() != n) {
        return Err(Error::Incompatible(
            "variant pools are not index-aligned".into(),
        ));
    }
    Ok(pools)
}

/// Trains one (regime, fold) run of a plan and returns the model with its
/// per-epoch log. Deterministic in (plan, variants).
pub fn train_regime_fold(
    plan: &ExperimentPlan,
    variants: &[(String, SplitSet)],
    regime_idx: usize,
    fold: usize,
) -> Result<(DannModel, RunLog)> {
    plan.validate()?;
    let regime = plan
        .regimes
        .get(regime_idx)
        .ok_or_else(|| Error::Config(format!("regime index {regime_idx} out of range")))?;
    if fold >= plan.folds {
        return Err(Error::Config(format!(
            "fold {fold} out of range for {} folds",
            plan.folds
        )));
    }
    let pools = pooled_variants(variants)?;
    let fold_split = split_folds(
        pools[0].len(),
        plan.folds,
        derive_seed(plan.cfg.seed, FOLD_STREAM, plan.id as u64),
    )?;
    let (val_idx, train_idx) = fold_split.held_out(fold);

    let source_parts: Vec<LabeledDataset> = regime
        .train_variants
        .iter()
        .map(|&v| pools[v].subset(&train_idx, format!("{}_train", VARIANT_SLUGS[v])))
        .collect();
    let source = concat_datasets(&source_parts, &format!("{}_source", regime.name))?;
    let target = regime
        .dann_target
        .map(|v| pools[v].subset(&train_idx, format!("{}_target", VARIANT_SLUGS[v])));
    let val_parts: Vec<LabeledDataset> = regime
        .train_variants
        .iter()
        .map(|&v| pools[v].subset(&val_idx, format!("{}_val", VARIANT_SLUGS[v])))
        .collect();
    let val = concat_datasets(&val_parts, &format!("{}_val", regime.name))?;

    let run_index = (regime_idx * plan.folds + fold) as u64;
    let mut model_rng = stream_rng(plan.cfg.seed, MODEL_STREAM, run_index);
    let mut model = DannModel::new(
        source.height * source.width,
        DEFAULT_HIDDEN_DIM,
        DEFAULT_FEATURE_DIM,
        source.num_classes,
        DEFAULT_DROPOUT,
        &mut model_rng,
    )?;
    let run_cfg = TrainConfig {
        seed: derive_seed(plan.cfg.seed, RUN_STREAM, run_index),
        dann_enabled: target.is_some(),
        ..plan.cfg
    };
    let records = train(&mut model, &source, target.as_ref(), Some(&val), &run_cfg)?;
    Ok((
        model,
        RunLog {
            regime: regime.name.clone(),
            fold,
            records,
        },
    ))
}

/// Scores a model on each canonical variant's test split, in order.
pub fn evaluate_on_variants(
    model: &DannModel,
    variants: &[(String, SplitSet)],
) -> Result<Vec<MacroScores>> {
    variants
        .iter()
        .map(|(_, splits)| {
            let predictions = evaluate(model, &splits.test);
            let truth: Vec<usize> = (0..splits.test.len()).map(|i| splits.test.label(i)).collect();
            let cm = confusion(&truth, &predictions, splits.test.num_classes)?;
            macro_scores(&cm)
        })
        .collect()
}

/// Runs a plan on in-memory variants (canonical order). Returns the
/// aggregated matrix (rows = regimes, cols = variant test sets) and one
/// log per (regime, fold).
pub fn run_plan_on_variants(
    plan: &ExperimentPlan,
    variants: &[(String, SplitSet)],
) -> Result<ExperimentOutcome> {
    plan.validate()?;
    pooled_variants(variants)?;

    let runs: Vec<(usize, usize)> = (0..plan.regimes.len())
        .flat_map(|r| (0..plan.folds).map(move |f| (r, f)))
        .collect();

    let results: Vec<(Vec<MacroScores>, RunLog)> = runs
        .par_iter()
        .map(|&(regime_idx, fold)| -> Result<(Vec<MacroScores>, RunLog)> {
            let (model, log) = train_regime_fold(plan, variants, regime_idx, fold)?;
            let scores = evaluate_on_variants(&model, variants)?;
            Ok((scores, log))
        })
        .collect::<Result<_>>()?;

    let mut cells = Vec::with_capacity(plan.regimes.len() * 4);
    for regime_idx in 0..plan.regimes.len() {
        for col in 0..4 {
            let fold_scores: Vec<MacroScores> = (0..plan.folds)
                .map(|fold| results[regime_idx * plan.folds + fold].0[col])
                .collect();
            cells.push(CellScores::from_folds(&fold_scores, false)?);
        }
    }
    let matrix = ResultMatrix::new(
        plan.regimes.iter().map(|r| r.name.clone()).collect(),
        VARIANT_SLUGS.iter().map(|s| s.to_string()).collect(),
        cells,
    )?;
    let logs = results.into_iter().map(|(_, log)| log).collect();
    Ok(ExperimentOutcome { matrix, logs })
}

/// Writes `bytes` to `path` atomically (temp file + rename).
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().ok_or_else(|| {
        Error::Config(format!("path {} has no parent directory", path.display()))
    })?;
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Loads the four canonical variant archives (`<slug>.npz`) from a
/// directory written by the generation step.
pub fn load_variants(data_dir: &Path) -> Result<Vec<(String, SplitSet)>> {
    VARIANT_SLUGS
        .iter()
        .map(|slug| {
            let path = data_dir.join(format!("{slug}.npz"));
            if !path.exists() {
                return Err(Error::MissingDataset {
                    name: slug.to_string(),
                    path: path.display().to_string(),
                });
            }
            Ok((slug.to_string(), read_npz(&path)?))
        })
        .collect()
}

/// Runs a plan against a generated data directory and writes the result
/// files: `exp{N}/{metric}.csv`, `exp{N}/{metric}.json`, per-run logs
/// under `exp{N}/logs/`, and the full matrix as `exp{N}/matrix.json`.
pub fn run_experiment(
    plan: &ExperimentPlan,
    data_dir: &Path,
    out_dir: &Path,
) -> Result<ResultMatrix> {
    let variants = load_variants(data_dir)?;
    let outcome = run_plan_on_variants(plan, &variants)?;
    let exp_dir = out_dir.join(format!("exp{}", plan.id));

    for metric in METRIC_NAMES {
        let csv = outcome.matrix.to_csv(metric)?;
        write_atomic(&exp_dir.join(format!("{metric}.csv")), csv.as_bytes())?;
        let column: BTreeMap<String, BTreeMap<String, crate::metrics::Aggregate>> = outcome
            .matrix
            .row_names
            .iter()
            .enumerate()
            .map(|(r, row)| {
                let cols = outcome
                    .matrix
                    .col_names
                    .iter()
                    .enumerate()
                    .map(|(c, col)| {
                        (col.clone(), outcome.matrix.cell(r, c).metric(metric).expect("known metric"))
                    })
                    .collect();
                (row.clone(), cols)
            })
            .collect();
        let json = serde_json::to_string_pretty(&column)?;
        write_atomic(&exp_dir.join(format!("{metric}.json")), json.as_bytes())?;
    }
    write_atomic(
        &exp_dir.join("matrix.json"),
        outcome.matrix.to_json()?.as_bytes(),
    )?;
    for log in &outcome.logs {
        let path = exp_dir
            .join("logs")
            .join(format!("{}_{}.jsonl", log.regime, log.fold));
        write_atomic(&path, crate::dann::render_log(&log.records).as_bytes())?;
    }
    Ok(outcome.matrix)
}

/// Desk-scale defaults: small enough that the whole suite runs in minutes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeskScale {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub folds: usize,
    pub epochs: usize,
}

impl Default for DeskScale {
    fn default() -> Self {
        Self {
            train: 2000,
            val: 500,
            test: 1000,
            folds: 2,
            epochs: 15,
        }
    }
}

// Per-split derivation tags so train/val/test never share image streams
// during distortion generation.
const GEN_SPLIT_TAGS: [u64; 3] = [0x6E_0, 0x6E_1, 0x6E_2];

/// Applies the four variant distortions (canonical kinds, possibly custom
/// parameters) to each split, returning the variants in canonical order.
/// Copies are index-aligned with the input.
pub fn generate_variants(
    splits: &SplitSet,
    specs: &[DistortionSpec; 4],
    master_seed: u64,
) -> Result<Vec<(String, SplitSet)>> {
    if specs.iter().map(|s| s.slug()).ne(VARIANT_SLUGS) {
        return Err(Error::Config(
            "distortion list must hold the four canonical kinds in order".into(),
        ));
    }
    let mut per_split: Vec<Vec<LabeledDataset>> = Vec::with_capacity(3);
    for (tag_idx, (_, ds)) in splits.iter().into_iter().enumerate() {
        let split_seed = derive_seed(master_seed, GEN_SPLIT_TAGS[tag_idx], 0);
        per_split.push(crate::dataset::generate_distorted_copies(
            ds, specs, split_seed, None,
        )?);
    }
    Ok((0..4)
        .map(|v| {
            (
                VARIANT_SLUGS[v].to_string(),
                SplitSet {
                    train: rename(per_split[0][v].clone(), "train"),
                    val: rename(per_split[1][v].clone(), "val"),
                    test: rename(per_split[2][v].clone(), "test"),
                },
            )
        })
        .collect())
}

fn rename(mut ds: LabeledDataset, name: &str) -> LabeledDataset {
    ds.name = name.to_string();
    ds
}

/// Outcome of one adaptation comparison at a given master seed.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdaptationOutcome {
    pub seed: u64,
    /// Ring-test accuracy of the clean-only baseline (mean over folds).
    pub baseline_ring_accuracy: f64,
    /// Ring-test accuracy with adversarial adaptation to unlabeled ring
    /// data (mean over folds).
    pub dann_ring_accuracy: f64,
}

impl AdaptationOutcome {
    /// Accuracy-point gain of adaptation over the baseline.
    pub fn margin_points(&self) -> f64 {
        (self.dann_ring_accuracy - self.baseline_ring_accuracy) * 100.0
    }
}

/// The adaptation-effect comparison: a clean-only baseline versus
/// adaptation to unlabeled ring data, trained per master seed on a fresh
/// synthetic corpus at the given scale.
pub fn adaptation_effect_suite(
    seeds: &[u64],
    scale: DeskScale,
) -> Result<Vec<AdaptationOutcome>> {
    seeds
        .iter()
        .map(|&seed| {
            let splits = crate::synth::synthetic_splits(scale.train, scale.val, scale.test, seed);
            let variants = generate_variants(&splits, &variant_specs(), seed)?;
            let cfg = TrainConfig {
                epochs: scale.epochs,
                seed,
                ..Default::default()
            };
            let plan = ExperimentPlan {
                id: 3,
                regimes: vec![
                    Regime {
                        name: "none".into(),
                        train_variants: vec![0],
                        dann_target: None,
                    },
                    Regime {
                        name: "dann_none_to_ring".into(),
                        train_variants: vec![0],
                        dann_target: Some(3),
                    },
                ],
                folds: scale.folds,
                cfg,
            };
            let outcome = run_plan_on_variants(&plan, &variants)?;
            let ring_col = 3;
            Ok(AdaptationOutcome {
                seed,
                baseline_ring_accuracy: outcome.matrix.cell(0, ring_col).accuracy.mean,
                dann_ring_accuracy: outcome.matrix.cell(1, ring_col).accuracy.mean,
            })
        })
        .collect()
}

/// Writes the four canonical variant archives plus manifests into
/// `out_dir` (`<slug>.npz`, `<slug>.manifest.json`).
pub fn write_variants(
    variants: &[(String, SplitSet)],
    specs: &[DistortionSpec; 4],
    master_seed: u64,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for ((slug, splits), spec) in variants.iter().zip(specs) {
        let npz_path = out_dir.join(format!("{slug}.npz"));
        crate::dataset::write_npz(splits, &npz_path)?;
        let bytes = std::fs::read(&npz_path)?;
        let manifest =
            crate::dataset::Manifest::for_archive(slug, spec, master_seed, splits, &bytes);
        let manifest_json = serde_json::to_string_pretty(&manifest)?;
        write_atomic(
            &out_dir.join(format!("{slug}.manifest.json")),
            manifest_json.as_bytes(),
        )?;
        written.push(npz_path);
    }
    Ok(written)
}
