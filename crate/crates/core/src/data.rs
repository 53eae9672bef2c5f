//! Dataset generation, CSV ingestion, normalization, splitting, and
//! fake-label construction for hyperparameter tuning.

use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernel::euclidean;
use crate::scalar::Scalar;

/// Sine-band defaults: amplitude of the band center curve.
pub const SINE_AMPLITUDE: f64 = 0.25;
/// Sine-band defaults: frequency (full periods across the unit interval).
pub const SINE_FREQUENCY: f64 = 1.5;
/// Sine-band defaults: half-width of the band.
pub const SINE_HALFWIDTH: f64 = 0.15;
/// Sine-band defaults: vertical center of the band.
pub const SINE_CENTER: f64 = 0.5;

/// Perturbed sine-band parameters for tuning labels, deliberately different
/// from the generation defaults so tuning never sees the true boundary.
pub const FAKE_SINE_AMPLITUDE: f64 = 0.18;
pub const FAKE_SINE_FREQUENCY: f64 = 2.5;
pub const FAKE_SINE_PHASE: f64 = 0.9;
pub const FAKE_SINE_HALFWIDTH: f64 = 0.2;

/// A featurized dataset, optionally labeled.
#[derive(Debug, Clone)]
pub struct Dataset<S: Scalar> {
    pub name: String,
    pub features: Array2<S>,
    pub labels: Option<Vec<usize>>,
    pub n_classes: usize,
}

impl<S: Scalar> Dataset<S> {
    pub fn new(
        name: impl Into<String>,
        features: Array2<S>,
        labels: Option<Vec<usize>>,
        n_classes: usize,
    ) -> Result<Self> {
        if features.nrows() == 0 {
            return Err(Error::InvalidInput("dataset must be non-empty".into()));
        }
        if features.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("non-finite feature value".into()));
        }
        if let Some(y) = &labels {
            if y.len() != features.nrows() {
                return Err(Error::InvalidInput(
                    "label count does not match rows".into(),
                ));
            }
            if y.iter().any(|&l| l >= n_classes) {
                return Err(Error::InvalidInput("label out of class range".into()));
            }
        }
        Ok(Self {
            name: name.into(),
            features,
            labels,
            n_classes,
        })
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn d(&self) -> usize {
        self.features.ncols()
    }

    /// Row subset of the dataset, preserving labels.
    pub fn take(&self, indices: &[usize]) -> Result<Self> {
        if indices.iter().any(|&i| i >= self.n()) {
            return Err(Error::InvalidInput("row index out of range".into()));
        }
        let features = Array2::from_shape_fn((indices.len(), self.d()), |(r, c)| {
            self.features[[indices[r], c]]
        });
        let labels = self
            .labels
            .as_ref()
            .map(|y| indices.iter().map(|&i| y[i]).collect());
        Dataset::new(self.name.clone(), features, labels, self.n_classes)
    }
}

/// Parameters of the two-sine-curve band of Fig.-2(a) style synthetic data.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct SyntheticSineSpec {
    pub n: usize,
    pub amplitude: f64,
    pub frequency: f64,
    pub halfwidth: f64,
    pub center: f64,
    pub seed: u64,
}

impl Default for SyntheticSineSpec {
    fn default() -> Self {
        Self {
            n: 1000,
            amplitude: SINE_AMPLITUDE,
            frequency: SINE_FREQUENCY,
            halfwidth: SINE_HALFWIDTH,
            center: SINE_CENTER,
            seed: 0,
        }
    }
}

fn sine_band_label(x: f64, y: f64, a: f64, f: f64, phase: f64, center: f64, w: f64) -> usize {
    let boundary = center + a * (2.0 * std::f64::consts::PI * f * x + phase).sin();
    usize::from((y - boundary).abs() <= w)
}

/// `n` points uniform on the unit square, labeled 1 inside the band
/// `|y - center - a sin(2 pi f x)| <= w`.
pub fn generate_sine_dataset<S: Scalar>(spec: &SyntheticSineSpec) -> Result<Dataset<S>> {
    if spec.n == 0 {
        return Err(Error::InvalidParameter("n must be >= 1".into()));
    }
    if !(spec.halfwidth > 0.0) {
        return Err(Error::InvalidParameter("halfwidth must be > 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut features = Array2::<S>::zeros((spec.n, 2));
    let mut labels = Vec::with_capacity(spec.n);
    for r in 0..spec.n {
        let x = rng.random::<f64>();
        let y = rng.random::<f64>();
        features[[r, 0]] = S::of(x);
        features[[r, 1]] = S::of(y);
        labels.push(sine_band_label(
            x,
            y,
            spec.amplitude,
            spec.frequency,
            0.0,
            spec.center,
            spec.halfwidth,
        ));
    }
    Dataset::new("synthetic-sine", features, Some(labels), 2)
}

/// Load a comma-separated file: first row is the header, `label_column` names
/// the label, all other columns are real-valued features. Labels are
/// re-indexed densely in order of first appearance. With `normalize`, each
/// feature column is min-max scaled to `[0, 1]` (constant columns map to 0).
pub fn load_csv<S: Scalar>(
    path: impl AsRef<Path>,
    label_column: &str,
    normalize: bool,
) -> Result<Dataset<S>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Parse {
            row: 0,
            msg: e.to_string(),
        })?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse {
            row: 0,
            msg: e.to_string(),
        })?
        .clone();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::Parse {
            row: 0,
            msg: format!("label column '{label_column}' not found in header"),
        })?;
    let d = headers.len().saturating_sub(1);
    if d == 0 {
        return Err(Error::Parse {
            row: 0,
            msg: "no feature columns".into(),
        });
    }

    let mut rows: Vec<Vec<S>> = Vec::new();
    let mut raw_labels: Vec<String> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row_no = i + 2; // 1-based, after the header row
        let record = record.map_err(|e| Error::Parse {
            row: row_no,
            msg: e.to_string(),
        })?;
        if record.len() != headers.len() {
            return Err(Error::Parse {
                row: row_no,
                msg: format!(
                    "expected {} fields, found {}",
                    headers.len(),
                    record.len()
                ),
            });
        }
        let mut feats = Vec::with_capacity(d);
        for (c, field) in record.iter().enumerate() {
            if c == label_idx {
                raw_labels.push(field.to_string());
            } else {
                let value: f64 = field.parse().map_err(|_| Error::Parse {
                    row: row_no,
                    msg: format!("non-numeric feature '{}' in column '{}'", field, &headers[c]),
                })?;
                if !value.is_finite() {
                    return Err(Error::Parse {
                        row: row_no,
                        msg: format!("non-finite feature in column '{}'", &headers[c]),
                    });
                }
                feats.push(S::of(value));
            }
        }
        rows.push(feats);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            row: 1,
            msg: "file contains no data rows".into(),
        });
    }

    let mut features = Array2::<S>::zeros((rows.len(), d));
    for (r, row) in rows.iter().enumerate() {
        for (c, &x) in row.iter().enumerate() {
            features[[r, c]] = x;
        }
    }
    if normalize {
        min_max_normalize(&mut features);
    }

    // dense re-indexing by order of first appearance
    let mut classes: Vec<String> = Vec::new();
    let mut labels = Vec::with_capacity(raw_labels.len());
    for raw in &raw_labels {
        let idx = match classes.iter().position(|c| c == raw) {
            Some(i) => i,
            None => {
                classes.push(raw.clone());
                classes.len() - 1
            }
        };
        labels.push(idx);
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "csv".into());
    Dataset::new(name, features, Some(labels), classes.len())
}

/// Load a headerized CSV where every column is a numeric feature (no label
/// column), with optional min-max normalization.
pub fn load_csv_features<S: Scalar>(
    path: impl AsRef<Path>,
    normalize: bool,
) -> Result<Array2<S>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Parse {
            row: 0,
            msg: e.to_string(),
        })?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse {
            row: 0,
            msg: e.to_string(),
        })?
        .clone();
    let d = headers.len();
    if d == 0 {
        return Err(Error::Parse {
            row: 0,
            msg: "no feature columns".into(),
        });
    }
    let mut rows: Vec<Vec<S>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row_no = i + 2;
        let record = record.map_err(|e| Error::Parse {
            row: row_no,
            msg: e.to_string(),
        })?;
        if record.len() != d {
            return Err(Error::Parse {
                row: row_no,
                msg: format!("expected {d} fields, found {}", record.len()),
            });
        }
        let mut feats = Vec::with_capacity(d);
        for (c, field) in record.iter().enumerate() {
            let value: f64 = field.parse().map_err(|_| Error::Parse {
                row: row_no,
                msg: format!("non-numeric feature '{}' in column '{}'", field, &headers[c]),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    row: row_no,
                    msg: format!("non-finite feature in column '{}'", &headers[c]),
                });
            }
            feats.push(S::of(value));
        }
        rows.push(feats);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            row: 1,
            msg: "file contains no data rows".into(),
        });
    }
    let mut features = Array2::<S>::zeros((rows.len(), d));
    for (r, row) in rows.iter().enumerate() {
        for (c, &x) in row.iter().enumerate() {
            features[[r, c]] = x;
        }
    }
    if normalize {
        min_max_normalize(&mut features);
    }
    Ok(features)
}

/// Min-max scale each column to `[0, 1]`; constant columns map to 0.
pub fn min_max_normalize<S: Scalar>(features: &mut Array2<S>) {
    for mut col in features.columns_mut() {
        let mut lo = S::infinity();
        let mut hi = S::neg_infinity();
        for &x in col.iter() {
            lo = lo.min(x);
            hi = hi.max(x);
        }
        let range = hi - lo;
        if range > S::zero() {
            for x in col.iter_mut() {
                *x = (*x - lo) / range;
            }
        } else {
            for x in col.iter_mut() {
                *x = S::zero();
            }
        }
    }
}

/// Random disjoint halves of sizes `ceil(N/2)` and `floor(N/2)`,
/// deterministic under `seed`.
pub fn split_halves<S: Scalar>(ds: &Dataset<S>, seed: u64) -> Result<(Dataset<S>, Dataset<S>)> {
    let n = ds.n();
    if n < 2 {
        return Err(Error::InvalidInput("need at least two rows to split".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let cut = n.div_ceil(2);
    let train = ds.take(&order[..cut])?;
    let test = ds.take(&order[cut..])?;
    Ok((train, test))
}

/// Fake labels by nearest random centroid: draw `c` uniform-random samples as
/// centroids and label every sample by its nearest centroid (ties to the
/// lowest centroid index), retrying until every class has at least
/// `ceil(min_fraction * N)` members. Bounded at 1,000 attempts.
pub fn fake_labels_centroid<S: Scalar>(
    features: &ArrayView2<S>,
    c: usize,
    min_fraction: Option<f64>,
    seed: u64,
) -> Result<Vec<usize>> {
    let n = features.nrows();
    if c == 0 || n < c {
        return Err(Error::InvalidParameter(
            "need 1 <= C <= sample count".into(),
        ));
    }
    let min_fraction = min_fraction.unwrap_or(2.0 / (3.0 * c as f64));
    let required = (min_fraction * n as f64).ceil() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..1000 {
        let mut centroids = Vec::with_capacity(c);
        while centroids.len() < c {
            let cand = rng.random_range(0..n);
            if !centroids.contains(&cand) {
                centroids.push(cand);
            }
        }
        let mut labels = Vec::with_capacity(n);
        let mut counts = vec![0usize; c];
        for r in 0..n {
            let row = features.row(r);
            let mut best = 0;
            let mut best_d = S::infinity();
            for (ci, &cr) in centroids.iter().enumerate() {
                let d = euclidean(&row, &features.row(cr));
                if d < best_d {
                    best_d = d;
                    best = ci;
                }
            }
            counts[best] += 1;
            labels.push(best);
        }
        if counts.iter().all(|&cnt| cnt >= required) {
            return Ok(labels);
        }
    }
    Err(Error::Degenerate(format!(
        "no centroid assignment reached {required} samples per class in 1,000 \
         attempts; lower min_fraction"
    )))
}

/// Fake labels from a perturbed sine band (different amplitude, frequency,
/// and phase than the generation defaults). Deterministic in the features.
pub fn fake_labels_sine<S: Scalar>(features: &ArrayView2<S>) -> Result<Vec<usize>> {
    if features.ncols() != 2 {
        return Err(Error::InvalidInput(
            "sine fake labels require 2-D features".into(),
        ));
    }
    Ok((0..features.nrows())
        .map(|r| {
            sine_band_label(
                features[[r, 0]].to_f64_lossy(),
                features[[r, 1]].to_f64_lossy(),
                FAKE_SINE_AMPLITUDE,
                FAKE_SINE_FREQUENCY,
                FAKE_SINE_PHASE,
                SINE_CENTER,
                FAKE_SINE_HALFWIDTH,
            )
        })
        .collect())
}
