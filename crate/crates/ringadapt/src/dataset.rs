//! Labeled image datasets: NPZ ingestion, deterministic distorted-copy
//! generation, k-fold splitting, and domain-labeled minibatch assembly.
//!
//! Target-domain class labels are deliberately hard to reach: batches store
//! them privately and the only accessor counts every read of a
//! target-domain label in a process-wide counter, so training paths can
//! prove they never looked.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::distortion::{apply_distortion_with_angles, DistortionSpec};
use crate::error::{Error, Result};
use crate::imaging::Image;
use crate::npy::{format_npy, parse_npy, read_zip, write_zip_stored, NpyArray};
use crate::rng::{derive_seed, stream_rng, ChaCha8Rng};
use rand::SeedableRng;

/// Stack of 8-bit images with class labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledDataset {
    pub name: String,
    pub height: usize,
    pub width: usize,
    pub num_classes: usize,
    images: Vec<u8>,
    labels: Vec<u8>,
}

impl LabeledDataset {
    pub fn new(
        name: impl Into<String>,
        height: usize,
        width: usize,
        num_classes: usize,
        images: Vec<u8>,
        labels: Vec<u8>,
    ) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::EmptyImage);
        }
        let stride = height * width;
        if images.len() % stride != 0 || images.len() / stride != labels.len() {
            return Err(Error::Incompatible(format!(
                "{} image bytes is not {} labels x {}x{}",
                images.len(),
                labels.len(),
                height,
                width
            )));
        }
        for (i, &label) in labels.iter().enumerate() {
            if usize::from(label) >= num_classes {
                return Err(Error::InvalidLabel {
                    index: i,
                    label: usize::from(label),
                    classes: num_classes,
                });
            }
        }
        Ok(Self {
            name: name.into(),
            height,
            width,
            num_classes,
            images,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, index: usize) -> usize {
        usize::from(self.labels[index])
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn image_bytes(&self, index: usize) -> &[u8] {
        let stride = self.height * self.width;
        &self.images[index * stride..(index + 1) * stride]
    }

    pub fn raw_images(&self) -> &[u8] {
        &self.images
    }

    /// Image `index` as unit-range floats.
    pub fn image(&self, index: usize) -> Image {
        Image::from_u8(self.height, self.width, self.image_bytes(index))
            .expect("stored dimensions are valid")
    }

    /// New dataset containing `indices` in order, same metadata.
    pub fn subset(&self, indices: &[usize], name: impl Into<String>) -> Self {
        let stride = self.height * self.width;
        let mut images = Vec::with_capacity(indices.len() * stride);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            images.extend_from_slice(self.image_bytes(i));
            labels.push(self.labels[i]);
        }
        Self {
            name: name.into(),
            height: self.height,
            width: self.width,
            num_classes: self.num_classes,
            images,
            labels,
        }
    }

    /// Per-class sample counts, length `num_classes`.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_classes];
        for &l in &self.labels {
            counts[usize::from(l)] += 1;
        }
        counts
    }
}

/// The three conventional splits of one dataset variant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSet {
    pub train: LabeledDataset,
    pub val: LabeledDataset,
    pub test: LabeledDataset,
}

impl SplitSet {
    pub fn iter(&self) -> [(&'static str, &LabeledDataset); 3] {
        [
            ("train", &self.train),
            ("val", &self.val),
            ("test", &self.test),
        ]
    }
}

fn dataset_to_entries(split: &str, ds: &LabeledDataset) -> [(String, Vec<u8>); 2] {
    let images = NpyArray::new(
        vec![ds.len(), ds.height, ds.width],
        ds.images.clone(),
    )
    .expect("dataset invariants guarantee the shape");
    let labels = NpyArray::new(vec![ds.len()], ds.labels.clone()).expect("1-d labels");
    [
        (format!("{split}_images.npy"), format_npy(&images)),
        (format!("{split}_labels.npy"), format_npy(&labels)),
    ]
}

/// Writes the six conventional arrays as a stored, byte-deterministic NPZ.
pub fn write_npz(splits: &SplitSet, path: &Path) -> Result<()> {
    let mut entries = Vec::with_capacity(6);
    for (name, ds) in splits.iter() {
        entries.extend(dataset_to_entries(name, ds));
    }
    write_zip_stored(path, &entries)
}

/// Reads a ZIP-of-NPY archive holding train/val/test images and labels.
/// Labels of shape (N, 1) are squeezed to 1-D. The class count is inferred
/// as one past the largest label across all three splits.
pub fn read_npz(path: &Path) -> Result<SplitSet> {
    let entries = read_zip(path)?;
    let fetch = |key: &str| -> Result<NpyArray> {
        let name = format!("{key}.npy");
        let bytes = entries
            .get(&name)
            .or_else(|| entries.get(key))
            .ok_or_else(|| Error::MissingKey(key.to_string()))?;
        parse_npy(bytes)
    };

    let mut raw = Vec::new();
    for split in ["train", "val", "test"] {
        let images = fetch(&format!("{split}_images"))?;
        let labels = fetch(&format!("{split}_labels"))?;
        let (n, h, w) = match images.shape.as_slice() {
            [n, h, w] => (*n, *h, *w),
            other => {
                return Err(Error::Incompatible(format!(
                    "{split}_images must be 3-d, got shape {other:?}"
                )))
            }
        };
        let squeezed: Vec<usize> = labels.shape.iter().copied().filter(|&d| d != 1).collect();
        let label_count = match squeezed.as_slice() {
            [] => 1, // shape like (1,) or (1,1) squeezes away entirely
            [n] => *n,
            other => {
                return Err(Error::Incompatible(format!(
                    "{split}_labels must squeeze to 1-d, got shape {other:?}"
                )))
            }
        };
        if label_count != n {
            return Err(Error::Incompatible(format!(
                "{split}: {n} images but {label_count} labels"
            )));
        }
        raw.push((split, n, h, w, images.data, labels.data));
    }

    let num_classes = raw
        .iter()
        .flat_map(|(_, _, _, _, _, labels)| labels.iter().copied())
        .max()
        .map_or(1, |m| usize::from(m) + 1);

    let mut out = Vec::new();
    for (split, _, h, w, images, labels) in raw {
        out.push(LabeledDataset::new(split, h, w, num_classes, images, labels)?);
    }
    let [train, val, test] = <[LabeledDataset; 3]>::try_from(out).expect("three splits");
    Ok(SplitSet { train, val, test })
}

/// Clamp to [0,1], scale to 255, round half up.
pub fn quantize_unit(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

/// One distorted copy of `ds` per spec. Image `i` of copy `j` is distorted
/// under the stream derived from `(master_seed, j, i)`, so any image of any
/// copy can be regenerated in isolation.
pub fn generate_distorted_copies(
    ds: &LabeledDataset,
    specs: &[DistortionSpec],
    master_seed: u64,
    num_angles: Option<usize>,
) -> Result<Vec<LabeledDataset>> {
    use rayon::prelude::*;
    let stride = ds.height * ds.width;
    specs
        .iter()
        .enumerate()
        .map(|(j, spec)| {
            spec.validate()?;
            let chunks: Vec<Vec<u8>> = (0..ds.len())
                .into_par_iter()
                .map(|i| -> Result<Vec<u8>> {
                    let mut rng =
                        ChaCha8Rng::seed_from_u64(derive_seed(master_seed, j as u64, i as u64));
                    let img = ds.image(i);
                    let distorted = apply_distortion_with_angles(&img, spec, &mut rng, num_angles)?;
                    Ok(distorted.pixels().iter().map(|&v| quantize_unit(v)).collect())
                })
                .collect::<Result<_>>()?;
            let mut images = Vec::with_capacity(ds.len() * stride);
            for c in chunks {
                images.extend_from_slice(&c);
            }
            // Quarter turns swap the axes; all our rasters are square so the
            // byte layout is unchanged in size.
            let (h, w) = match spec {
                DistortionSpec::Rotate90 => (ds.width, ds.height),
                _ => (ds.height, ds.width),
            };
            LabeledDataset::new(
                format!("{}_{}", ds.name, spec.slug()),
                h,
                w,
                ds.num_classes,
                images,
                ds.labels.clone(),
            )
        })
        .collect()
}

/// Sidecar provenance record written next to each generated copy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub spec: DistortionSpec,
    pub master_seed: u64,
    pub counts: BTreeMap<String, usize>,
    pub num_classes: usize,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

impl Manifest {
    pub fn for_archive(
        name: &str,
        spec: &DistortionSpec,
        master_seed: u64,
        splits: &SplitSet,
        archive_bytes: &[u8],
    ) -> Self {
        let counts = splits
            .iter()
            .into_iter()
            .map(|(k, ds)| (k.to_string(), ds.len()))
            .collect();
        Self {
            name: name.to_string(),
            spec: *spec,
            master_seed,
            counts,
            num_classes: splits.train.num_classes,
            sha256: sha256_hex(archive_bytes),
        }
    }
}

/// Assignment of `n` items to `k` folds of near-equal size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSplit {
    pub k: usize,
    pub fold_assignments: Vec<usize>,
}

impl FoldSplit {
    /// Indices held out by `fold` and the remaining training indices, both
    /// in ascending order.
    pub fn held_out(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        let mut inside = Vec::new();
        let mut outside = Vec::new();
        for (i, &f) in self.fold_assignments.iter().enumerate() {
            if f == fold {
                inside.push(i);
            } else {
                outside.push(i);
            }
        }
        (inside, outside)
    }
}

/// Randomly partitions `0..n` into `k` folds whose sizes differ by at most
/// one, deterministically in the seed.
pub fn split_folds(n: usize, k: usize, seed: u64) -> Result<FoldSplit> {
    if k < 2 || n < k {
        return Err(Error::BadFoldCount { n, k });
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = stream_rng(seed, 0xF0_1D, 0);
    order.shuffle(&mut rng);
    let mut fold_assignments = vec![0usize; n];
    for (rank, &item) in order.iter().enumerate() {
        fold_assignments[item] = rank % k;
    }
    Ok(FoldSplit {
        k,
        fold_assignments,
    })
}

/// Sentinel stored in place of target-domain labels; reading it as a class
/// index is always out of range.
pub const TARGET_LABEL_SENTINEL: usize = usize::MAX;

static TARGET_LABEL_READS: AtomicU64 = AtomicU64::new(0);

/// Process-wide count of target-domain label reads since the last reset.
pub fn target_label_reads() -> u64 {
    TARGET_LABEL_READS.load(Ordering::Relaxed)
}

pub fn reset_target_label_reads() {
    TARGET_LABEL_READS.store(0, Ordering::Relaxed);
}

/// Minibatch mixing source (d=0) and target (d=1) instances.
#[derive(Debug, Clone)]
pub struct DomainBatch {
    pub inputs: Vec<f64>,
    pub height: usize,
    pub width: usize,
    labels: Vec<usize>,
    pub domain: Vec<u8>,
    pub weights: Vec<f64>,
}

impl DomainBatch {
    pub fn len(&self) -> usize {
        self.domain.len()
    }

    pub fn is_empty(&self) -> bool {
        self.domain.is_empty()
    }

    /// Class label of instance `i`. Reads of target-domain labels are
    /// counted in a process-wide counter; correct training code keeps that
    /// counter at zero by consulting `weights`/`domain` first.
    pub fn label(&self, i: usize) -> usize {
        if self.domain[i] == 1 {
            TARGET_LABEL_READS.fetch_add(1, Ordering::Relaxed);
        }
        self.labels[i]
    }

    /// Labels with target entries replaced by zero, safe for a weighted loss
    /// whose target weights are zero. Does not touch the read counter.
    pub fn masked_labels(&self) -> Vec<usize> {
        self.labels
            .iter()
            .zip(&self.domain)
            .map(|(&l, &d)| if d == 1 { 0 } else { l })
            .collect()
    }
}

/// Batches one epoch. With a target dataset, every batch carries exactly
/// `batch_size/2` target instances (cycling if the target is smaller than
/// the source) appended after the source half; the final batch keeps
/// whatever source remainder exists. Shuffles are independent per stream
/// and per epoch.
pub fn make_batches(
    source: &LabeledDataset,
    target: Option<&LabeledDataset>,
    batch_size: usize,
    seed: u64,
    epoch: u64,
) -> Result<Vec<DomainBatch>> {
    if source.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if batch_size == 0 {
        return Err(Error::Incompatible("batch size must be positive".into()));
    }
    if let Some(t) = target {
        if batch_size % 2 != 0 {
            return Err(Error::OddBatchSize(batch_size));
        }
        if t.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if (t.height, t.width) != (source.height, source.width) {
            return Err(Error::Incompatible(format!(
                "target images are {}x{}, source {}x{}",
                t.height, t.width, source.height, source.width
            )));
        }
    }

    let mut source_order: Vec<usize> = (0..source.len()).collect();
    source_order.shuffle(&mut stream_rng(seed, 0x50_0C, epoch));

    let per_batch_source = if target.is_some() {
        batch_size / 2
    } else {
        batch_size
    };
    let stride = source.height * source.width;

    let mut target_order: Vec<usize> = Vec::new();
    if let Some(t) = target {
        target_order = (0..t.len()).collect();
        target_order.shuffle(&mut stream_rng(seed, 0x7A_26, epoch));
    }
    let mut target_cursor = 0usize;

    let mut batches = Vec::new();
    for chunk in source_order.chunks(per_batch_source) {
        let total = chunk.len() + target.map_or(0, |_| batch_size / 2);
        let mut inputs = Vec::with_capacity(total * stride);
        let mut labels = Vec::with_capacity(total);
        let mut domain = Vec::with_capacity(total);
        let mut weights = Vec::with_capacity(total);

        for &i in chunk {
            inputs.extend(source.image_bytes(i).iter().map(|&b| f64::from(b) / 255.0));
            labels.push(source.label(i));
            domain.push(0);
            weights.push(1.0);
        }
        if let Some(t) = target {
            for _ in 0..batch_size / 2 {
                let i = target_order[target_cursor % target_order.len()];
                target_cursor += 1;
                inputs.extend(t.image_bytes(i).iter().map(|&b| f64::from(b) / 255.0));
                labels.push(TARGET_LABEL_SENTINEL);
                domain.push(1);
                weights.push(0.0);
            }
        }
        batches.push(DomainBatch {
            inputs,
            height: source.height,
            width: source.width,
            labels,
            domain,
            weights,
        });
    }
    Ok(batches)
}
