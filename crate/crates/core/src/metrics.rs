//! Test-set evaluation and distances between evaluated classifiers.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{self, DenseMatrix, DenseVector};
use crate::problem::{validate_confusion, ConfusionMatrix, ConfusionReport, LabelSource, LabeledDataset, LinearModel};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalReport {
    pub q: usize,
    pub n: usize,
    /// `[p][q]`: fraction of true-`q` test points predicted `p`.
    pub confusion_hat: DenseMatrix,
    /// Number of test points per true class; zero marks an all-zero column.
    pub class_counts: Vec<usize>,
    /// Frobenius norm of `confusion_hat`, diagonal included.
    pub confusion_rate: f64,
    pub error_rate: f64,
    /// `1 − Ĉ_qq` for present classes, 0 for absent ones.
    pub per_class_error: DenseVector,
}

impl EvalReport {
    pub fn absent_classes(&self) -> Vec<usize> {
        (0..self.q).filter(|&q| self.class_counts[q] == 0).collect()
    }

    /// Frobenius norm of the off-diagonal part of `confusion_hat`; zero for a perfect classifier.
    pub fn offdiag_confusion_rate(&self) -> f64 {
        let mut acc = 0.0;
        for p in 0..self.q {
            for q in (0..self.q).filter(|&q| q != p) {
                acc += self.confusion_hat[(p, q)] * self.confusion_hat[(p, q)];
            }
        }
        libm::sqrt(acc)
    }
}

pub fn evaluate(model: &LinearModel, test: &LabeledDataset) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    if model.dim() != test.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), found: test.dim() });
    }
    if model.q() != test.q() {
        return Err(Error::DimensionMismatch { expected: model.q(), found: test.q() });
    }
    let q = test.q();
    let truths = test.labels(LabelSource::True)?;
    let mut counts = DenseMatrix::zeros(q, q);
    let mut class_counts = vec![0usize; q];
    let mut errors = 0usize;
    let mut scores = vec![0.0; q];
    for (ex, &t) in test.examples().iter().zip(&truths) {
        model.scores_into(ex.x(), &mut scores);
        let p = crate::problem::argmax(&scores);
        counts[(p, t)] += 1.0;
        class_counts[t] += 1;
        if p != t {
            errors += 1;
        }
    }
    let mut confusion_hat = DenseMatrix::zeros(q, q);
    for col in (0..q).filter(|&c| class_counts[c] > 0) {
        let total = class_counts[col] as f64;
        for row in 0..q {
            confusion_hat[(row, col)] = counts[(row, col)] / total;
        }
    }
    let per_class_error = (0..q)
        .map(|c| if class_counts[c] > 0 { 1.0 - confusion_hat[(c, c)] } else { 0.0 })
        .collect();
    Ok(EvalReport {
        q,
        n: test.len(),
        confusion_rate: linalg::frobenius_norm(&confusion_hat),
        confusion_hat,
        class_counts,
        error_rate: errors as f64 / test.len() as f64,
        per_class_error: DenseVector::from_vec_unchecked(per_class_error),
    })
}

/// Why a pair-based confusion estimate could not be used.
#[derive(Debug, Clone, PartialEq)]
pub struct DegradedConfusion {
    /// The raw estimate; absent classes have all-zero columns.
    pub estimate: DenseMatrix,
    /// Classes with no example carrying that true label.
    pub missing_classes: Vec<usize>,
    pub report: ConfusionReport,
}

impl core::fmt::Display for DegradedConfusion {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        if !self.missing_classes.is_empty() {
            write!(f, "classes without true-label support:")?;
            for c in &self.missing_classes {
                write!(f, " {}", c + 1)?;
            }
            write!(f, "; ")?;
        }
        write!(f, "{}", self.report)
    }
}

/// `[p][q] = #{true = q ∧ noisy = p} / #{true = q}` from examples carrying both labels.
pub fn estimate_confusion_from_pairs(
    ds: &LabeledDataset,
) -> Result<core::result::Result<ConfusionMatrix, DegradedConfusion>> {
    let q = ds.q();
    let truths = ds.labels(LabelSource::True)?;
    let noisy = ds.labels(LabelSource::Noisy)?;
    let mut counts = DenseMatrix::zeros(q, q);
    let mut support = vec![0usize; q];
    for (&t, &y) in truths.iter().zip(&noisy) {
        counts[(y, t)] += 1.0;
        support[t] += 1;
    }
    let mut estimate = DenseMatrix::zeros(q, q);
    for col in (0..q).filter(|&c| support[c] > 0) {
        for row in 0..q {
            estimate[(row, col)] = counts[(row, col)] / support[col] as f64;
        }
    }
    let missing_classes: Vec<usize> = (0..q).filter(|&c| support[c] == 0).collect();
    let report = validate_confusion(&estimate);
    if missing_classes.is_empty() && report.passes() {
        return Ok(Ok(ConfusionMatrix::new(estimate)?));
    }
    Ok(Err(DegradedConfusion { estimate, missing_classes, report }))
}

fn check_same_q(a: &EvalReport, b: &EvalReport) -> Result<()> {
    if a.q != b.q {
        return Err(Error::DimensionMismatch { expected: a.q, found: b.q });
    }
    Ok(())
}

pub fn dist_error(a: &EvalReport, b: &EvalReport) -> Result<f64> {
    check_same_q(a, b)?;
    Ok(libm::fabs(a.error_rate - b.error_rate))
}

pub fn dist_confusion(a: &EvalReport, b: &EvalReport) -> Result<f64> {
    check_same_q(a, b)?;
    Ok(libm::fabs(a.confusion_rate - b.confusion_rate))
}

/// Euclidean distance between the per-class error vectors.
pub fn dist_classwise(a: &EvalReport, b: &EvalReport) -> Result<f64> {
    check_same_q(a, b)?;
    let sq: f64 = a
        .per_class_error
        .as_slice()
        .iter()
        .zip(b.per_class_error.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(libm::sqrt(sq))
}

/// Frobenius distance between the two prediction confusion matrices.
pub fn dist_couplewise(a: &EvalReport, b: &EvalReport) -> Result<f64> {
    check_same_q(a, b)?;
    Ok(linalg::frobenius_norm(&a.confusion_hat.sub(&b.confusion_hat)?))
}
