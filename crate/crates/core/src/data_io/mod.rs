//! Datasets, generators, and on-disk formats.

mod checkpoint;
mod csv_source;
mod idx;
mod report;
mod synthetic;

pub use checkpoint::{
    load_checkpoint, load_curve, save_checkpoint, save_curve, Architecture, CheckpointFile,
    CurveFile, CHECKPOINT_VERSION, PAYLOAD_ENCODING,
};
pub use csv_source::load_csv;
pub use idx::{load_idx_pair, read_idx_images, read_idx_labels};
pub use report::{format_float, write_report, ReportFormat, TabularReport};
pub use synthetic::{gen_synthetic, SyntheticKind};

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Batch, OwnedBatch};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    Heldout,
}

/// Per-feature affine normalization `(x − mean) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Normalization {
    /// Mean and standard deviation of every column; constant columns get scale 1.
    pub fn fit(features: &Array2<f64>) -> Self {
        let n = features.nrows().max(1) as f64;
        let mean = features.sum_axis(Axis(0)) / n;
        let var = (features - &mean).mapv(|x| x * x).sum_axis(Axis(0)) / n;
        Normalization {
            mean: mean.to_vec(),
            scale: var
                .iter()
                .map(|&v| if v > 0.0 { v.sqrt() } else { 1.0 })
                .collect(),
        }
    }

    pub fn apply(&self, features: &mut Array2<f64>) {
        for mut row in features.rows_mut() {
            for ((x, m), s) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
                *x = (*x - m) / s;
            }
        }
    }
}

/// Labeled feature matrix for one split.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<usize>,
    class_count: usize,
    split: Split,
    normalization: Option<Normalization>,
}

impl Dataset {
    pub fn new(
        features: Array2<f64>,
        labels: Vec<usize>,
        class_count: usize,
        split: Split,
    ) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::DimensionMismatch {
                what: "dataset labels",
                expected: features.nrows(),
                found: labels.len(),
            });
        }
        if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= class_count) {
            return Err(Error::LabelOutOfRange {
                row,
                label,
                classes: class_count,
            });
        }
        Ok(Dataset {
            features,
            labels,
            class_count,
            split,
            normalization: None,
        })
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    pub fn normalization(&self) -> Option<&Normalization> {
        self.normalization.as_ref()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn batch(&self) -> Batch<'_> {
        Batch::new(self.features.view(), &self.labels).expect("rows match labels")
    }

    pub fn gather(&self, rows: &[usize]) -> OwnedBatch {
        OwnedBatch::gather(self.batch(), rows)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Applies `norm` and records it. Fit the normalization on the training
    /// split and pass the same record to every split.
    pub fn normalize_with(mut self, norm: &Normalization) -> Result<Self> {
        if norm.mean.len() != self.feature_dim() {
            return Err(Error::DimensionMismatch {
                what: "normalization",
                expected: self.feature_dim(),
                found: norm.mean.len(),
            });
        }
        norm.apply(&mut self.features);
        self.normalization = Some(norm.clone());
        Ok(self)
    }

    /// Rows `range` as a new dataset tagged `split`.
    pub fn slice(&self, range: std::ops::Range<usize>, split: Split) -> Result<Dataset> {
        if range.end > self.len() || range.start > range.end {
            return Err(Error::InvalidArgument(format!(
                "row range {range:?} outside dataset of {} rows",
                self.len()
            )));
        }
        let rows: Vec<usize> = range.collect();
        let batch = self.gather(&rows);
        Ok(Dataset {
            features: batch.inputs,
            labels: batch.labels,
            class_count: self.class_count,
            split,
            normalization: self.normalization.clone(),
        })
    }
}

/// Normalizes every split with statistics fitted on `train` only.
pub fn normalize_splits(train: Dataset, others: Vec<Dataset>) -> Result<(Dataset, Vec<Dataset>)> {
    let norm = Normalization::fit(train.features());
    let train = train.normalize_with(&norm)?;
    let others = others
        .into_iter()
        .map(|d| d.normalize_with(&norm))
        .collect::<Result<Vec<_>>>()?;
    Ok((train, others))
}
