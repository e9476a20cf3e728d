use std::f64::consts::PI;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Dataset, Split};
use crate::error::{Error, Result};

/// Turns made by each arm of the two-spirals set.
const SPIRAL_TURNS: f64 = 1.25;
/// Number of blobs, placed evenly on a circle of radius [`BLOB_RADIUS`].
const BLOB_CLASSES: usize = 3;
const BLOB_RADIUS: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    TwoSpirals,
    GaussianBlobs,
}

impl std::str::FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two_spirals" | "two-spirals" => Ok(SyntheticKind::TwoSpirals),
            "gaussian_blobs" | "gaussian-blobs" => Ok(SyntheticKind::GaussianBlobs),
            other => Err(Error::InvalidArgument(format!(
                "unknown synthetic dataset '{other}'"
            ))),
        }
    }
}

/// Two-dimensional synthetic classification data.
///
/// Row `i` belongs to class `i mod classes`, so class counts differ by at
/// most one. `noise` is the standard deviation of isotropic Gaussian noise
/// added to every point.
pub fn gen_synthetic(kind: SyntheticKind, n: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if n < 4 {
        return Err(Error::InvalidArgument(format!(
            "synthetic datasets need at least 4 rows, got {n}"
        )));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "noise must be finite and non-negative, got {noise}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let classes = match kind {
        SyntheticKind::TwoSpirals => 2,
        SyntheticKind::GaussianBlobs => BLOB_CLASSES,
    };
    let mut features = Array2::zeros((n, 2));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % classes;
        let (x, y) = match kind {
            SyntheticKind::TwoSpirals => {
                let u: f64 = rng.random();
                let radius = 0.15 + 0.85 * u;
                let angle = u * SPIRAL_TURNS * 2.0 * PI + class as f64 * PI;
                (radius * angle.cos(), radius * angle.sin())
            }
            SyntheticKind::GaussianBlobs => {
                let angle = 2.0 * PI * class as f64 / classes as f64;
                (BLOB_RADIUS * angle.cos(), BLOB_RADIUS * angle.sin())
            }
        };
        features[[i, 0]] = x + noise * normal.sample(&mut rng);
        features[[i, 1]] = y + noise * normal.sample(&mut rng);
        labels.push(class);
    }
    Dataset::new(features, labels, classes, Split::Train)
}
