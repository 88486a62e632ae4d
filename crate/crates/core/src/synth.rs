//! Synthetic separable problems and label corruption.
//!
//! The generated problem: `Q` unit-norm prototypes drawn uniformly on the
//! sphere define the concept; inputs are drawn uniformly on the sphere,
//! labelled by the concept, and rejected when their Euclidean distance to
//! the nearest decision boundary of the concept is not above the requested
//! margin. Noisy labels are then
//! drawn per example from the confusion-matrix column of its true class.

use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, DenseVector};
use crate::problem::{
    argmax, validate_confusion, ConfusionMatrix, LabeledDataset,
    LabeledExample, LinearModel,
};
use crate::rng::RngStream;

/// Draws in one stall-detection window.
pub const STALL_WINDOW: u64 = 1_000_000;
/// Minimum acceptance rate over a window before giving up.
pub const STALL_RATE: f64 = 1e-4;
/// Resampling budget for [`generate_sweep_matrices`].
pub const SWEEP_MATRIX_ATTEMPTS: usize = 1000;
/// Diagonal range of the reference stochastic matrix `M`.
pub const SWEEP_DIAGONAL: (f64, f64) = (0.55, 0.95);
/// Sweep levels run from 0 to this value.
pub const MAX_SWEEP_LEVEL: u32 = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SynthConfig {
    pub q_classes: usize,
    pub dim: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub margin_theta: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { q_classes: 10, dim: 2, n_train: 1000, n_test: 10_000, margin_theta: 0.025, seed: 0 }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.q_classes < 2 {
            return Err(Error::InvalidConfig("q_classes must be at least 2".into()));
        }
        if self.dim < 2 {
            return Err(Error::InvalidConfig("dim must be at least 2".into()));
        }
        if !(0.0..1.0).contains(&self.margin_theta) {
            return Err(Error::InvalidConfig("margin_theta must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Standard normal variate by Box-Muller.
fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>(); // (0, 1]
    let u2: f64 = rng.gen();
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(core::f64::consts::TAU * u2)
}

/// Writes a point drawn uniformly on the unit sphere of `out.len()` dimensions.
pub fn sample_unit_sphere(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    if out.len() == 2 {
        let angle = rng.gen::<f64>() * core::f64::consts::TAU;
        out[0] = libm::cos(angle);
        out[1] = libm::sin(angle);
        return;
    }
    loop {
        out.iter_mut().for_each(|v| *v = standard_normal(rng));
        let norm = libm::sqrt(out.iter().map(|v| v * v).sum());
        if norm > 1e-12 {
            out.iter_mut().for_each(|v| *v /= norm);
            return;
        }
    }
}

/// Random concept `W*` with unit-norm prototypes.
pub fn generate_concept(cfg: &SynthConfig, stream: RngStream) -> Result<LinearModel> {
    cfg.validate()?;
    let mut rng = stream.rng();
    let mut columns = Vec::with_capacity(cfg.q_classes);
    for _ in 0..cfg.q_classes {
        let mut w = alloc::vec![0.0; cfg.dim];
        sample_unit_sphere(&mut rng, &mut w);
        columns.push(w);
    }
    LinearModel::from_columns(&columns)
}

/// `n` concept-labelled points lying farther than `cfg.margin_theta` from every
/// decision boundary of the concept.
pub fn generate_dataset(
    cfg: &SynthConfig,
    concept: &LinearModel,
    n: usize,
    stream: RngStream,
) -> Result<LabeledDataset> {
    cfg.validate()?;
    if concept.dim() != cfg.dim {
        return Err(Error::DimensionMismatch { expected: cfg.dim, found: concept.dim() });
    }
    if concept.q() != cfg.q_classes {
        return Err(Error::DimensionMismatch { expected: cfg.q_classes, found: concept.q() });
    }
    let mut rng = stream.rng();
    let mut examples = Vec::with_capacity(n);
    let mut x = alloc::vec![0.0; cfg.dim];
    let mut scores = alloc::vec![0.0; cfg.q_classes];
    let (mut drawn, mut accepted) = (0u64, 0u64);
    let (mut window_drawn, mut window_accepted) = (0u64, 0u64);

    while examples.len() < n {
        sample_unit_sphere(&mut rng, &mut x);
        drawn += 1;
        window_drawn += 1;
        concept.scores_into(&x, &mut scores);
        let label = argmax(&scores);
        if concept.boundary_distance(&x, label)? > cfg.margin_theta {
            let features = DenseVector::from_vec_unchecked(x.clone());
            examples.push(LabeledExample::new(features, Some(label), None)?);
            accepted += 1;
            window_accepted += 1;
        }
        if window_drawn == STALL_WINDOW {
            if (window_accepted as f64) < STALL_RATE * STALL_WINDOW as f64 {
                return Err(Error::GenerationStalled { accepted, drawn });
            }
            window_drawn = 0;
            window_accepted = 0;
        }
    }
    LabeledDataset::new(cfg.q_classes, cfg.dim, examples)
}

/// Inverse-CDF draw from a discrete distribution given as a column of probabilities.
fn draw_from_column(c: &ConfusionMatrix, truth: usize, u: f64) -> usize {
    let q = c.q();
    let mut acc = 0.0;
    for p in 0..q {
        acc += c.get(p, truth);
        if u < acc {
            return p;
        }
    }
    // u landed in the rounding slack above the last partial sum
    (0..q).rev().find(|&p| c.get(p, truth) > 0.0).unwrap_or(truth)
}

/// Replaces every noisy label by a draw from column `t(x)` of `c`.
pub fn corrupt(ds: &LabeledDataset, c: &ConfusionMatrix, stream: RngStream) -> Result<LabeledDataset> {
    if c.q() != ds.q() {
        return Err(Error::DimensionMismatch { expected: ds.q(), found: c.q() });
    }
    let truths = ds.labels(crate::problem::LabelSource::True)?;
    let mut rng = stream.rng();
    let examples = ds
        .examples()
        .iter()
        .zip(truths)
        .map(|(ex, t)| {
            let u: f64 = rng.gen();
            ex.with_noisy_label(Some(draw_from_column(c, t, u)))
        })
        .collect::<Result<Vec<_>>>()?;
    LabeledDataset::new(ds.q(), ds.dim(), examples)
}

/// Reference stochastic matrix `M` and direction `N` with `M = I + 10·N`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepMatrices {
    pub m: ConfusionMatrix,
    pub n: DenseMatrix,
}

/// `I + level·N`, entry by entry.
fn level_matrix(n: &DenseMatrix, level: f64) -> DenseMatrix {
    let q = n.rows();
    let mut out = DenseMatrix::zeros(q, q);
    for r in 0..q {
        for c in 0..q {
            let id = if r == c { 1.0 } else { 0.0 };
            out[(r, c)] = id + level * n[(r, c)];
        }
    }
    out
}

pub fn generate_sweep_matrices(q: usize, stream: RngStream) -> Result<SweepMatrices> {
    if q < 2 {
        return Err(Error::InvalidConfig("sweep matrices need q >= 2".into()));
    }
    let mut rng = stream.rng();
    let (lo, hi) = SWEEP_DIAGONAL;
    for _ in 0..SWEEP_MATRIX_ATTEMPTS {
        let mut raw = DenseMatrix::zeros(q, q);
        for col in 0..q {
            let diag = lo + (hi - lo) * rng.gen::<f64>();
            let weights: Vec<f64> = (0..q).map(|_| rng.gen::<f64>()).collect();
            let off_total: f64 = (0..q).filter(|&r| r != col).map(|r| weights[r]).sum();
            for r in 0..q {
                raw[(r, col)] = if r == col {
                    diag
                } else if off_total > 0.0 {
                    (1.0 - diag) * weights[r] / off_total
                } else {
                    (1.0 - diag) / (q - 1) as f64
                };
            }
        }
        let mut n = raw.sub(&DenseMatrix::identity(q))?;
        let tenth = 0.1;
        n = DenseMatrix::new(q, q, n.as_slice().iter().map(|v| v * tenth).collect())?;
        // recentre each column of N on zero so the whole sweep stays stochastic
        for col in 0..q {
            let s: f64 = (0..q).map(|r| n[(r, col)]).sum();
            n[(col, col)] -= s;
        }

        let far = level_matrix(&n, MAX_SWEEP_LEVEL as f64);
        if far.as_slice().iter().any(|v| *v < 0.0) {
            continue;
        }
        if crate::linalg::condition_estimate(&far) > 1e6 {
            continue;
        }
        let m = sweep_level_matrix(&n, 10)?;
        return Ok(SweepMatrices { m, n });
    }
    Err(Error::GenerationStalled { accepted: 0, drawn: SWEEP_MATRIX_ATTEMPTS as u64 })
}

/// Sweep point `C_i = I + i·N`; `i = 0` is the identity and `i = 10` is `M`.
pub fn sweep_level_matrix(n: &DenseMatrix, level: u32) -> Result<ConfusionMatrix> {
    if level > MAX_SWEEP_LEVEL {
        return Err(Error::InvalidConfig("sweep level must lie in 0..=20".into()));
    }
    if !n.is_square() {
        return Err(Error::DimensionMismatch { expected: n.rows(), found: n.cols() });
    }
    let mat = level_matrix(n, level as f64);
    let report = validate_confusion(&mat);
    if !report.passes() {
        return Err(Error::InvalidConfusion(alloc::format!("level {level}: {report}")));
    }
    ConfusionMatrix::new(mat)
}
