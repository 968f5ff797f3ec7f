//! Classification metrics: confusion matrices, accuracy, macro-averaged
//! precision/recall/F1, and mean ± std aggregation across folds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Counts indexed `[true_class][predicted_class]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn count(&self, true_class: usize, predicted: usize) -> u64 {
        self.counts[true_class * self.classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn from_counts(classes: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != classes * classes {
            return Err(Error::TensorShape(format!(
                "{} counts for a {classes}x{classes} confusion matrix",
                counts.len()
            )));
        }
        Ok(Self { classes, counts })
    }
}

/// Tallies predictions against truth. Every entry must be below `classes`.
pub fn confusion(y_true: &[usize], y_pred: &[usize], classes: usize) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Incompatible(format!(
            "{} truths vs {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    let mut cm = ConfusionMatrix::new(classes);
    for (i, (&t, &p)) in y_true.iter().zip(y_pred).enumerate() {
        if t >= classes || p >= classes {
            return Err(Error::InvalidLabel {
                index: i,
                label: t.max(p),
                classes,
            });
        }
        cm.counts[t * classes + p] += 1;
    }
    Ok(cm)
}

/// Accuracy plus macro-averaged precision, recall, and F1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroScores {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl MacroScores {
    pub fn values(&self) -> [(&'static str, f64); 4] {
        [
            ("accuracy", self.accuracy),
            ("macro_precision", self.precision),
            ("macro_recall", self.recall),
            ("macro_f1", self.f1),
        ]
    }
}

/// Per-class precision/recall/F1 averaged unweighted over all classes,
/// with every 0/0 defined as 0 (so classes absent from both truth and
/// prediction still pull the macro mean down).
pub fn macro_scores(cm: &ConfusionMatrix) -> Result<MacroScores> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyDataset);
    }
    let c = cm.classes;
    let zero_over_zero = |num: f64, den: f64| if den == 0.0 { 0.0 } else { num / den };
    let mut precision_sum = 0.0;
    let mut recall_sum = 0.0;
    let mut f1_sum = 0.0;
    let mut trace = 0u64;
    for k in 0..c {
        let tp = cm.count(k, k) as f64;
        let predicted: f64 = (0..c).map(|t| cm.count(t, k) as f64).sum();
        let actual: f64 = (0..c).map(|p| cm.count(k, p) as f64).sum();
        let precision = zero_over_zero(tp, predicted);
        let recall = zero_over_zero(tp, actual);
        let f1 = zero_over_zero(2.0 * precision * recall, precision + recall);
        precision_sum += precision;
        recall_sum += recall;
        f1_sum += f1;
        trace += cm.count(k, k);
    }
    Ok(MacroScores {
        accuracy: trace as f64 / total as f64,
        precision: precision_sum / c as f64,
        recall: recall_sum / c as f64,
        f1: f1_sum / c as f64,
    })
}

/// Mean ± std of one metric over folds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
}

impl Aggregate {
    /// mean±std with 3 decimals, the cell format of the CSV matrices.
    pub fn display(&self) -> String {
        format!("{:.3}±{:.3}", self.mean, self.std)
    }
}

/// Mean and, by default, population standard deviation (divide by k).
/// `sample_std` switches to the k-1 denominator.
pub fn aggregate_folds(values: &[f64], sample_std: bool) -> Result<Aggregate> {
    if values.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let denom = if sample_std { k - 1.0 } else { k };
    let std = if values.len() == 1 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / denom).sqrt()
    };
    Ok(Aggregate { mean, std })
}

/// One aggregated cell: all four scores with fold spread.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellScores {
    pub accuracy: Aggregate,
    pub macro_precision: Aggregate,
    pub macro_recall: Aggregate,
    pub macro_f1: Aggregate,
}

impl CellScores {
    pub fn from_folds(folds: &[MacroScores], sample_std: bool) -> Result<Self> {
        let collect = |f: fn(&MacroScores) -> f64| -> Vec<f64> { folds.iter().map(f).collect() };
        Ok(Self {
            accuracy: aggregate_folds(&collect(|s| s.accuracy), sample_std)?,
            macro_precision: aggregate_folds(&collect(|s| s.precision), sample_std)?,
            macro_recall: aggregate_folds(&collect(|s| s.recall), sample_std)?,
            macro_f1: aggregate_folds(&collect(|s| s.f1), sample_std)?,
        })
    }

    pub fn metric(&self, name: &str) -> Option<Aggregate> {
        match name {
            "accuracy" => Some(self.accuracy),
            "macro_precision" => Some(self.macro_precision),
            "macro_recall" => Some(self.macro_recall),
            "macro_f1" => Some(self.macro_f1),
            _ => None,
        }
    }
}

pub const METRIC_NAMES: [&str; 4] = ["accuracy", "macro_precision", "macro_recall", "macro_f1"];

/// Grid of aggregated scores: one row per training regime, one column per
/// test distortion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultMatrix {
    pub row_names: Vec<String>,
    pub col_names: Vec<String>,
    /// Row-major, `row_names.len() x col_names.len()`.
    pub cells: Vec<CellScores>,
}

impl ResultMatrix {
    pub fn new(row_names: Vec<String>, col_names: Vec<String>, cells: Vec<CellScores>) -> Result<Self> {
        if cells.len() != row_names.len() * col_names.len() {
            return Err(Error::TensorShape(format!(
                "{} cells for a {}x{} result matrix",
                cells.len(),
                row_names.len(),
                col_names.len()
            )));
        }
        Ok(Self {
            row_names,
            col_names,
            cells,
        })
    }

    pub fn cell(&self, row: usize, col: usize) -> &CellScores {
        &self.cells[row * self.col_names.len() + col]
    }

    /// CSV for one metric: header of test columns, one row per regime,
    /// cells as mean±std with 3 decimals.
    pub fn to_csv(&self, metric: &str) -> Result<String> {
        let mut out = String::from("train_regime");
        for col in &self.col_names {
            out.push(',');
            out.push_str(col);
        }
        out.push('\n');
        for (r, row_name) in self.row_names.iter().enumerate() {
            out.push_str(row_name);
            for c in 0..self.col_names.len() {
                let agg = self
                    .cell(r, c)
                    .metric(metric)
                    .ok_or_else(|| Error::Config(format!("unknown metric {metric}")))?;
                out.push(',');
                out.push_str(&agg.display());
            }
            out.push('\n');
        }
        Ok(out)
    }

    /// Full-precision JSON document of the whole matrix.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
