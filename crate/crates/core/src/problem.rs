//! Datasets, confusion matrices and linear models.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{self, DenseMatrix, DenseVector};

/// Allowed deviation of `‖x‖₂` from 1.
pub const UNIT_NORM_TOL: f64 = 1e-9;
/// Allowed deviation of a confusion-matrix column sum from 1.
pub const COLUMN_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum LabelSource {
    True,
    Noisy,
}

impl LabelSource {
    pub fn name(self) -> &'static str {
        match self {
            LabelSource::True => "true",
            LabelSource::Noisy => "noisy",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    features: DenseVector,
    true_label: Option<usize>,
    noisy_label: Option<usize>,
}

impl LabeledExample {
    /// Requires unit-norm features and at least one label.
    pub fn new(
        features: DenseVector,
        true_label: Option<usize>,
        noisy_label: Option<usize>,
    ) -> Result<Self> {
        let norm = features.norm();
        if libm::fabs(norm - 1.0) > UNIT_NORM_TOL {
            return Err(Error::InvalidExample(format!("feature norm {norm} is not 1")));
        }
        Self::with_labels(features, true_label, noisy_label)
    }

    /// Like [`LabeledExample::new`] but rescales the features to unit norm first.
    pub fn renormalized(
        mut features: DenseVector,
        true_label: Option<usize>,
        noisy_label: Option<usize>,
    ) -> Result<Self> {
        let norm = features.norm();
        if norm == 0.0 {
            return Err(Error::InvalidExample("zero feature vector cannot be normalized".into()));
        }
        features.as_mut_slice().iter_mut().for_each(|v| *v /= norm);
        Self::with_labels(features, true_label, noisy_label)
    }

    fn with_labels(
        features: DenseVector,
        true_label: Option<usize>,
        noisy_label: Option<usize>,
    ) -> Result<Self> {
        if true_label.is_none() && noisy_label.is_none() {
            return Err(Error::InvalidExample("example carries no label".into()));
        }
        Ok(Self { features, true_label, noisy_label })
    }

    pub fn features(&self) -> &DenseVector {
        &self.features
    }

    pub fn x(&self) -> &[f64] {
        self.features.as_slice()
    }

    pub fn true_label(&self) -> Option<usize> {
        self.true_label
    }

    pub fn noisy_label(&self) -> Option<usize> {
        self.noisy_label
    }

    pub fn label(&self, source: LabelSource) -> Option<usize> {
        match source {
            LabelSource::True => self.true_label,
            LabelSource::Noisy => self.noisy_label,
        }
    }

    pub fn with_noisy_label(&self, noisy: Option<usize>) -> Result<Self> {
        Self::with_labels(self.features.clone(), self.true_label, noisy)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    q: usize,
    dim: usize,
    examples: Vec<LabeledExample>,
}

impl LabeledDataset {
    pub fn new(q: usize, dim: usize, examples: Vec<LabeledExample>) -> Result<Self> {
        if q == 0 || dim == 0 {
            return Err(Error::InvalidShape(format!("dataset with q={q}, d={dim}")));
        }
        for ex in &examples {
            if ex.features.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: ex.features.dim() });
            }
            for label in [ex.true_label, ex.noisy_label].into_iter().flatten() {
                if label >= q {
                    return Err(Error::LabelOutOfRange { label, q });
                }
            }
        }
        Ok(Self { q, dim, examples })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn examples(&self) -> &[LabeledExample] {
        &self.examples
    }

    pub fn into_examples(self) -> Vec<LabeledExample> {
        self.examples
    }

    /// All labels from `source`, failing on the first example lacking one.
    pub fn labels(&self, source: LabelSource) -> Result<Vec<usize>> {
        self.examples
            .iter()
            .enumerate()
            .map(|(index, ex)| {
                ex.label(source).ok_or(Error::MissingLabels { index, label_source: source.name() })
            })
            .collect()
    }

    /// Per-class counts of the labels from `source`.
    pub fn label_counts(&self, source: LabelSource) -> Result<Vec<usize>> {
        let mut counts = vec![0; self.q];
        for label in self.labels(source)? {
            counts[label] += 1;
        }
        Ok(counts)
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        let examples = indices.iter().map(|&i| self.examples[i].clone()).collect();
        Self { q: self.q, dim: self.dim, examples }
    }
}

/// Diagnostic produced by [`validate_confusion`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionReport {
    pub q: usize,
    /// `column_sum[q] - 1` for every column.
    pub column_sum_deviation: Vec<f64>,
    /// Columns whose sum is off by more than [`COLUMN_SUM_TOL`].
    pub bad_columns: Vec<usize>,
    /// `(row, col)` positions holding values outside `[0, 1]`.
    pub out_of_range: Vec<(usize, usize)>,
    pub condition: f64,
    pub square: bool,
}

impl ConfusionReport {
    pub fn passes(&self) -> bool {
        self.square
            && self.bad_columns.is_empty()
            && self.out_of_range.is_empty()
            && self.condition.is_finite()
    }

    pub fn is_singular(&self) -> bool {
        !self.condition.is_finite()
    }
}

impl core::fmt::Display for ConfusionReport {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        if !self.square {
            return write!(f, "matrix is not square");
        }
        if self.passes() {
            return write!(f, "ok (condition estimate {:.3e})", self.condition);
        }
        let mut sep = "";
        for &c in &self.bad_columns {
            write!(
                f,
                "{sep}column {} sums to {}",
                c + 1,
                1.0 + self.column_sum_deviation[c]
            )?;
            sep = "; ";
        }
        for &(r, c) in &self.out_of_range {
            write!(f, "{sep}entry ({}, {}) outside [0, 1]", r + 1, c + 1)?;
            sep = "; ";
        }
        if self.is_singular() {
            write!(f, "{sep}singular")?;
        }
        Ok(())
    }
}

pub fn validate_confusion(mat: &DenseMatrix) -> ConfusionReport {
    let q = mat.rows();
    if !mat.is_square() {
        return ConfusionReport {
            q,
            column_sum_deviation: Vec::new(),
            bad_columns: Vec::new(),
            out_of_range: Vec::new(),
            condition: f64::INFINITY,
            square: false,
        };
    }
    let column_sum_deviation: Vec<f64> = mat.column_sums().iter().map(|s| s - 1.0).collect();
    let bad_columns = column_sum_deviation
        .iter()
        .enumerate()
        .filter(|(_, d)| libm::fabs(**d) > COLUMN_SUM_TOL)
        .map(|(c, _)| c)
        .collect();
    let mut out_of_range = Vec::new();
    for r in 0..q {
        for c in 0..q {
            let v = mat[(r, c)];
            if !(0.0..=1.0).contains(&v) {
                out_of_range.push((r, c));
            }
        }
    }
    ConfusionReport {
        q,
        column_sum_deviation,
        bad_columns,
        out_of_range,
        condition: linalg::condition_estimate(mat),
        square: true,
    }
}

/// A validated, invertible, column-stochastic noise matrix.
///
/// Entry `[p][q]` is `P(observed = p | true = q)`: column `q` is the label
/// distribution the noise process draws from for a point of true class `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    mat: DenseMatrix,
    inverse: DenseMatrix,
}

impl ConfusionMatrix {
    /// Fails with [`Error::InvalidConfusion`] when the matrix is not
    /// column-stochastic and with [`Error::SingularMatrix`] when it is but
    /// cannot be inverted.
    pub fn new(mat: DenseMatrix) -> Result<Self> {
        let report = validate_confusion(&mat);
        if !report.square || !report.bad_columns.is_empty() || !report.out_of_range.is_empty() {
            return Err(Error::InvalidConfusion(format!("{report}")));
        }
        let inverse = linalg::invert(&mat)?;
        Ok(Self { mat, inverse })
    }

    pub fn identity(q: usize) -> Self {
        Self { mat: DenseMatrix::identity(q), inverse: DenseMatrix::identity(q) }
    }

    pub fn q(&self) -> usize {
        self.mat.rows()
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.mat
    }

    pub fn inverse(&self) -> &DenseMatrix {
        &self.inverse
    }

    pub fn get(&self, observed: usize, truth: usize) -> f64 {
        self.mat[(observed, truth)]
    }
}

/// Homogeneous linear multiclass classifier `x ↦ argmax_q ⟨w_q, x⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    /// `d × Q`, column `q` is `w_q`.
    weights: DenseMatrix,
}

impl LinearModel {
    pub fn zeros(dim: usize, q: usize) -> Self {
        Self { weights: DenseMatrix::zeros(dim, q) }
    }

    pub fn from_weights(weights: DenseMatrix) -> Self {
        Self { weights }
    }

    /// Builds a model from its prototypes `w_1 … w_Q`.
    pub fn from_columns<C: AsRef<[f64]>>(columns: &[C]) -> Result<Self> {
        let weights = DenseMatrix::from_rows(columns)?.transpose();
        Ok(Self { weights })
    }

    pub fn dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn q(&self) -> usize {
        self.weights.cols()
    }

    pub fn weights(&self) -> &DenseMatrix {
        &self.weights
    }

    pub fn column(&self, q: usize) -> Vec<f64> {
        self.weights.column(q)
    }

    pub fn columns(&self) -> Vec<Vec<f64>> {
        (0..self.q()).map(|q| self.column(q)).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.weights.as_slice().iter().all(|v| *v == 0.0)
    }

    /// Adds `coef · z` to column `q`.
    pub fn add_to_column(&mut self, q: usize, coef: f64, z: &[f64]) {
        for (j, zj) in z.iter().enumerate() {
            self.weights[(j, q)] += coef * zj;
        }
    }

    /// Writes `⟨w_q, x⟩` for every class into `out`; `x.len()` must be `dim`.
    pub fn scores_into(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|s| *s = 0.0);
        for (j, xj) in x.iter().enumerate() {
            for (s, w) in out.iter_mut().zip(self.weights.row(j)) {
                *s += w * xj;
            }
        }
    }

    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x.len())?;
        let mut out = vec![0.0; self.q()];
        self.scores_into(x, &mut out);
        Ok(out)
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.scores(x)?))
    }

    pub fn margin_of(&self, x: &[f64], label: usize) -> Result<f64> {
        if label >= self.q() {
            return Err(Error::LabelOutOfRange { label, q: self.q() });
        }
        Ok(margin_from_scores(&self.scores(x)?, label))
    }

    /// Euclidean distance from `x` to the nearest boundary `{⟨w_label − w_p, ·⟩ = 0}`,
    /// signed like the score gap. Coinciding prototypes count as distance 0.
    pub fn boundary_distance(&self, x: &[f64], label: usize) -> Result<f64> {
        if label >= self.q() {
            return Err(Error::LabelOutOfRange { label, q: self.q() });
        }
        let scores = self.scores(x)?;
        let mut best = f64::INFINITY;
        for p in (0..self.q()).filter(|&p| p != label) {
            let sep: f64 = (0..self.dim())
                .map(|j| {
                    let d = self.weights[(j, label)] - self.weights[(j, p)];
                    d * d
                })
                .sum();
            let dist = if sep > 0.0 { (scores[label] - scores[p]) / libm::sqrt(sep) } else { 0.0 };
            best = f64::min(best, dist);
        }
        Ok(best)
    }

    /// `‖Σ_q w_q‖∞`.
    pub fn column_sum_residual(&self) -> f64 {
        (0..self.dim())
            .map(|j| libm::fabs(self.weights.row(j).iter().sum::<f64>()))
            .fold(0.0, f64::max)
    }

    pub fn max_column_norm(&self) -> f64 {
        (0..self.q())
            .map(|q| {
                libm::sqrt((0..self.dim()).map(|j| self.weights[(j, q)] * self.weights[(j, q)]).sum())
            })
            .fold(0.0, f64::max)
    }

    /// Whether `‖Σ_q w_q‖∞ ≤ 1e-9 · (1 + max_q ‖w_q‖₂)`.
    pub fn is_centered(&self) -> bool {
        self.column_sum_residual() <= 1e-9 * (1.0 + self.max_column_norm())
    }

    fn check_dim(&self, found: usize) -> Result<()> {
        if found != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found });
        }
        Ok(())
    }
}

/// Index of the largest score, lowest index on ties.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        if *s > scores[best] {
            best = i;
        }
    }
    best
}

/// `min_{p ≠ label} scores[label] − scores[p]`; `+Inf` with a single class.
pub fn margin_from_scores(scores: &[f64], label: usize) -> f64 {
    scores
        .iter()
        .enumerate()
        .filter(|(p, _)| *p != label)
        .map(|(_, s)| scores[label] - s)
        .fold(f64::INFINITY, f64::min)
}

pub fn predict(model: &LinearModel, x: &DenseVector) -> Result<usize> {
    model.predict(x.as_slice())
}

pub fn margin_of(model: &LinearModel, x: &DenseVector, label: usize) -> Result<f64> {
    model.margin_of(x.as_slice(), label)
}
