//! UMA: ultraconservative multiclass additive learning from noisy labels.
//!
//! Each iteration looks at the current model `W` and, for every predicted
//! class `p`, gathers the training points it assigns to `p` with a score
//! gap above `α` (the region `A_p^α`). Summing those points per *noisy*
//! label gives the `Q × d` matrix `Γ^p`; since the labels were produced by
//! the column-stochastic confusion matrix `C`, `C⁻¹ Γ^p` unmixes them and
//! its row `q` is an estimate `z_pq` of the (scaled) mean of points of true
//! class `q` that the model currently sends to `p`. One such vector is
//! chosen, and an ultraconservative step `w_r ← w_r + τ_r z_pq` with
//! `τ_q = 1`, `Σ τ = 0` and negative steps only on the classes that beat
//! `q` on `z_pq` is applied. Learning stops when every `‖z_pq‖` is below
//! `stop_norm`.
//!
//! The zero model used as the starting point has every score gap equal to
//! zero, so no region or error set can be non-empty under the strict `α`
//! tests. While the model is exactly zero the learner therefore uses the
//! tie-break prediction (everything goes to class 0) with `α` taken as 0;
//! the first update breaks the symmetry and the strict tests apply from
//! then on.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, dot, DenseMatrix, DenseVector};
use crate::problem::{margin_from_scores, ConfusionMatrix, LabelSource, LabeledDataset, LinearModel};
use crate::rng::RngStream;

/// Lower bound applied to estimated priors by the confusion selection rule.
pub const PRIOR_FLOOR: f64 = 1e-6;
/// Tolerance on `Σ τ = 0`.
pub const TAU_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Selection {
    /// Largest `‖z_pq‖`.
    Error,
    /// Largest `‖z_pq‖ / π̂_q`.
    Confusion,
    /// Uniform among candidates above the stopping threshold.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum StepRule {
    /// `τ_q = +1`, `τ_p = −1`; falls back to `Uniform` when `p` is not in the error set.
    Perceptron,
    /// `τ_q = +1`, `τ_r = −1/|E|` on the error set.
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct UmaConfig {
    pub alpha: f64,
    pub stop_norm: f64,
    pub max_iters: usize,
    pub selection: Selection,
    pub step_rule: StepRule,
}

impl Default for UmaConfig {
    fn default() -> Self {
        Self {
            alpha: 0.0,
            stop_norm: 1e-4,
            max_iters: 100_000,
            selection: Selection::Error,
            step_rule: StepRule::Perceptron,
        }
    }
}

impl UmaConfig {
    /// Defaults with the iteration budget set to ten times `2/θ²`.
    pub fn for_margin(theta: f64) -> Self {
        let mut cfg = Self::default();
        if theta > 0.0 {
            cfg.max_iters = libm::ceil(20.0 / (theta * theta)) as usize;
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidConfig("alpha must be finite and >= 0".into()));
        }
        if !(self.stop_norm > 0.0) {
            return Err(Error::InvalidConfig("stop_norm must be > 0".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateCandidate {
    pub p: usize,
    pub q: usize,
    pub z: DenseVector,
    /// `|A_p^α|`, whatever the noisy labels.
    pub support: usize,
    pub norm_z: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IterationTrace {
    pub iter: usize,
    pub chosen_p: usize,
    pub chosen_q: usize,
    pub norm_z: f64,
    pub error_set_size: usize,
    pub train_noisy_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Termination {
    /// Every candidate norm fell to `stop_norm` or below.
    SmallUpdates,
    /// Candidates above the threshold exist but none has a non-empty error set.
    NoUpdate,
    /// The iteration budget ran out.
    MaxIters,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UmaFit {
    pub model: LinearModel,
    pub trace: Vec<IterationTrace>,
    pub termination: Termination,
}

impl UmaFit {
    pub fn updates(&self) -> usize {
        self.trace.len()
    }
}

/// Passed to the observer after every applied update.
#[derive(Debug)]
pub struct UpdateEvent<'a> {
    pub iter: usize,
    pub p: usize,
    pub q: usize,
    pub tau: &'a [f64],
    pub z: &'a [f64],
    pub model: &'a LinearModel,
}

/// Estimated class priors `π̂ = C⁻¹ (counts / n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassPriors {
    pub raw: DenseVector,
    /// `raw` with negative entries set to 0.
    pub clamped: DenseVector,
}

fn check_model(model: &LinearModel, ds: &LabeledDataset) -> Result<()> {
    if model.dim() != ds.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), found: ds.dim() });
    }
    if model.q() != ds.q() {
        return Err(Error::DimensionMismatch { expected: model.q(), found: ds.q() });
    }
    Ok(())
}

/// Indices `i` with `⟨w_p, x_i⟩ − ⟨w_k, x_i⟩ > α` for every `k ≠ p`.
pub fn region_a(model: &LinearModel, ds: &LabeledDataset, p: usize, alpha: f64) -> Result<Vec<usize>> {
    check_model(model, ds)?;
    let mut scores = vec![0.0; model.q()];
    Ok(ds
        .examples()
        .iter()
        .enumerate()
        .filter_map(|(i, ex)| {
            model.scores_into(ex.x(), &mut scores);
            (margin_from_scores(&scores, p) > alpha).then_some(i)
        })
        .collect())
}

/// `Γ^p`: row `k` is `(1/n) Σ x_i` over `A_p^α` points with noisy label `k`.
pub fn gamma_matrix(model: &LinearModel, ds: &LabeledDataset, p: usize, alpha: f64) -> Result<DenseMatrix> {
    let noisy = ds.labels(LabelSource::Noisy)?;
    if ds.is_empty() {
        return Err(Error::InvalidShape("empty training set".into()));
    }
    let mut gamma = DenseMatrix::zeros(ds.q(), ds.dim());
    for i in region_a(model, ds, p, alpha)? {
        for (g, x) in gamma.row_mut(noisy[i]).iter_mut().zip(ds.examples()[i].x()) {
            *g += x;
        }
    }
    let n = ds.len() as f64;
    Ok(DenseMatrix::new(ds.q(), ds.dim(), gamma.as_slice().iter().map(|v| v / n).collect())?)
}

/// `z_pq`: row `q` of `C⁻¹ Γ^p`.
pub fn candidate(
    model: &LinearModel,
    ds: &LabeledDataset,
    c: &ConfusionMatrix,
    p: usize,
    q: usize,
    alpha: f64,
) -> Result<UpdateCandidate> {
    if p == q {
        return Err(Error::InvalidConfig("candidate needs p != q".into()));
    }
    if c.q() != ds.q() {
        return Err(Error::DimensionMismatch { expected: ds.q(), found: c.q() });
    }
    let gamma = gamma_matrix(model, ds, p, alpha)?;
    let unmixed = linalg::matmul(c.inverse(), &gamma)?;
    let z = DenseVector::new(unmixed.row(q).to_vec())?;
    let support = region_a(model, ds, p, alpha)?.len();
    let norm_z = z.norm();
    Ok(UpdateCandidate { p, q, z, support, norm_z })
}

/// `{r ≠ q : ⟨w_r, z⟩ − ⟨w_q, z⟩ ≥ α}`.
pub fn error_set(model: &LinearModel, z: &[f64], q: usize, alpha: f64) -> Result<Vec<usize>> {
    let scores = model.scores(z)?;
    Ok((0..model.q()).filter(|&r| r != q && scores[r] - scores[q] >= alpha).collect())
}

/// Ultraconservative step sizes for the chosen pair; all zero when the error set is empty.
pub fn tau_steps(error_set: &[usize], q: usize, rule: StepRule, p: usize, q_classes: usize) -> Vec<f64> {
    let mut tau = vec![0.0; q_classes];
    if error_set.is_empty() {
        return tau;
    }
    debug_assert!(!error_set.contains(&q));
    tau[q] = 1.0;
    if rule == StepRule::Perceptron && error_set.contains(&p) {
        tau[p] = -1.0;
    } else {
        let share = 1.0 / error_set.len() as f64;
        for &r in error_set {
            tau[r] = -share;
        }
    }
    tau
}

/// `w_r ← w_r + τ_r z` for every class.
pub fn apply_update(model: &mut LinearModel, tau: &[f64], z: &[f64]) -> Result<()> {
    if tau.len() != model.q() {
        return Err(Error::DimensionMismatch { expected: model.q(), found: tau.len() });
    }
    if z.len() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), found: z.len() });
    }
    let sum: f64 = tau.iter().sum();
    if libm::fabs(sum) > TAU_SUM_TOL {
        return Err(Error::InvalidConfig(alloc::format!("step sizes sum to {sum}, not 0")));
    }
    for (r, t) in tau.iter().enumerate() {
        if *t != 0.0 {
            model.add_to_column(r, *t, z);
        }
    }
    Ok(())
}

pub fn estimate_class_priors(ds: &LabeledDataset, c: &ConfusionMatrix) -> Result<ClassPriors> {
    if c.q() != ds.q() {
        return Err(Error::DimensionMismatch { expected: ds.q(), found: c.q() });
    }
    if ds.is_empty() {
        return Err(Error::InvalidShape("empty training set".into()));
    }
    let n = ds.len() as f64;
    let freq: Vec<f64> =
        ds.label_counts(LabelSource::Noisy)?.into_iter().map(|k| k as f64 / n).collect();
    let raw = c.inverse().mul_vec(&freq)?;
    let clamped =
        DenseVector::new(raw.as_slice().iter().map(|v| f64::max(*v, 0.0)).collect())?;
    Ok(ClassPriors { raw, clamped })
}

fn selection_score(c: &UpdateCandidate, strategy: Selection, priors: Option<&[f64]>) -> f64 {
    match (strategy, priors) {
        (Selection::Confusion, Some(pi)) => c.norm_z / f64::max(pi[c.q], PRIOR_FLOOR),
        _ => c.norm_z,
    }
}

fn select_index(
    candidates: &[UpdateCandidate],
    spent: &[bool],
    priors: Option<&[f64]>,
    strategy: Selection,
    stop_norm: f64,
    rng: &mut ChaCha8Rng,
) -> Option<usize> {
    let viable: Vec<usize> = (0..candidates.len())
        .filter(|&i| !spent[i] && candidates[i].norm_z > stop_norm)
        .collect();
    if viable.is_empty() {
        return None;
    }
    if strategy == Selection::Random {
        return Some(viable[rng.gen_range(0..viable.len())]);
    }
    let mut best = viable[0];
    let mut best_score = selection_score(&candidates[best], strategy, priors);
    for &i in &viable[1..] {
        let s = selection_score(&candidates[i], strategy, priors);
        if s > best_score {
            best = i;
            best_score = s;
        }
    }
    Some(best)
}

/// Picks the pair `(p, q)` to update from. Candidates are expected in
/// lexicographic `(p, q)` order; ties go to the first. `priors` is only
/// read by [`Selection::Confusion`].
pub fn select_pair(
    candidates: &[UpdateCandidate],
    priors: Option<&[f64]>,
    strategy: Selection,
    stop_norm: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(usize, usize)> {
    if strategy == Selection::Confusion && priors.is_none() {
        return Err(Error::InvalidConfig("confusion selection needs class priors".into()));
    }
    let spent = vec![false; candidates.len()];
    select_index(candidates, &spent, priors, strategy, stop_norm, rng)
        .map(|i| (candidates[i].p, candidates[i].q))
        .ok_or(Error::NoViableCandidate)
}

/// Per-iteration sufficient statistics: one `Γ^p` per class plus monitoring counts.
struct RegionStats {
    gammas: Vec<DenseMatrix>,
    support: Vec<usize>,
    noisy_errors: usize,
}

fn region_stats(
    scores: &[f64],
    q: usize,
    xs: &[&[f64]],
    noisy: &[usize],
    alpha: f64,
    tie_break_regions: bool,
) -> RegionStats {
    let d = xs.first().map_or(0, |x| x.len());
    let mut gammas = vec![DenseMatrix::zeros(q, d); q];
    let mut support = vec![0; q];
    let mut noisy_errors = 0;
    for ((s, x), &y) in scores.chunks_exact(q).zip(xs).zip(noisy) {
        let (p, gap) = top_two(s);
        if p != y {
            noisy_errors += 1;
        }
        if tie_break_regions || gap > alpha {
            support[p] += 1;
            for (g, xj) in gammas[p].row_mut(y).iter_mut().zip(x.iter()) {
                *g += xj;
            }
        }
    }
    let inv_n = 1.0 / xs.len() as f64;
    for g in &mut gammas {
        for r in 0..q {
            g.row_mut(r).iter_mut().for_each(|v| *v *= inv_n);
        }
    }
    RegionStats { gammas, support, noisy_errors }
}

/// Argmax (lowest index on ties) and its gap to the runner-up.
fn top_two(s: &[f64]) -> (usize, f64) {
    let (mut best, mut first, mut second) = (0, s[0], f64::NEG_INFINITY);
    for (i, &v) in s.iter().enumerate().skip(1) {
        if v > first {
            second = first;
            first = v;
            best = i;
        } else if v > second {
            second = v;
        }
    }
    (best, first - second)
}

fn all_candidates(stats: &RegionStats, c_inv: &DenseMatrix) -> Result<Vec<UpdateCandidate>> {
    let q_classes = c_inv.rows();
    let mut out = Vec::with_capacity(q_classes * (q_classes - 1));
    for p in 0..q_classes {
        let unmixed = linalg::matmul(c_inv, &stats.gammas[p])?;
        for q in (0..q_classes).filter(|&q| q != p) {
            let z = unmixed.row(q).to_vec();
            let norm_z = libm::sqrt(dot(&z, &z));
            out.push(UpdateCandidate {
                p,
                q,
                z: DenseVector::from_vec_unchecked(z),
                support: stats.support[p],
                norm_z,
            });
        }
    }
    Ok(out)
}

/// Runs the learner from the zero model.
pub fn train(
    ds: &LabeledDataset,
    c: &ConfusionMatrix,
    cfg: &UmaConfig,
    stream: RngStream,
) -> Result<UmaFit> {
    train_with_observer(ds, c, cfg, stream, |_| {})
}

/// [`train`], calling `observer` after each applied update.
pub fn train_with_observer<F>(
    ds: &LabeledDataset,
    c: &ConfusionMatrix,
    cfg: &UmaConfig,
    stream: RngStream,
    mut observer: F,
) -> Result<UmaFit>
where
    F: FnMut(&UpdateEvent<'_>),
{
    cfg.validate()?;
    if c.q() != ds.q() {
        return Err(Error::DimensionMismatch { expected: ds.q(), found: c.q() });
    }
    if ds.is_empty() {
        return Err(Error::InvalidShape("empty training set".into()));
    }
    let noisy = ds.labels(LabelSource::Noisy)?;
    let xs: Vec<&[f64]> = ds.examples().iter().map(|e| e.x()).collect();
    let priors = match cfg.selection {
        Selection::Confusion => Some(estimate_class_priors(ds, c)?.raw.into_vec()),
        _ => None,
    };
    let mut rng = stream.rng();
    let q_classes = ds.q();
    let n = ds.len() as f64;

    let mut model = LinearModel::zeros(ds.dim(), q_classes);
    // scores[i·Q + r] = ⟨w_r, x_i⟩, kept in step with the model
    let mut scores = vec![0.0; xs.len() * q_classes];
    let mut trace = Vec::new();
    let mut termination = Termination::MaxIters;

    'outer: for iter in 0..cfg.max_iters {
        let at_zero = model.is_zero();
        let alpha = if at_zero { 0.0 } else { cfg.alpha };
        let stats = region_stats(&scores, q_classes, &xs, &noisy, alpha, at_zero);
        let candidates = all_candidates(&stats, c.inverse())?;
        let max_norm = candidates.iter().map(|c| c.norm_z).fold(0.0, f64::max);
        if max_norm <= cfg.stop_norm {
            termination = Termination::SmallUpdates;
            break;
        }

        let mut spent = vec![false; candidates.len()];
        loop {
            let Some(idx) =
                select_index(&candidates, &spent, priors.as_deref(), cfg.selection, cfg.stop_norm, &mut rng)
            else {
                termination = Termination::NoUpdate;
                break 'outer;
            };
            let cand = &candidates[idx];
            let errors = error_set(&model, cand.z.as_slice(), cand.q, alpha)?;
            if errors.is_empty() {
                spent[idx] = true;
                continue;
            }
            let tau = tau_steps(&errors, cand.q, cfg.step_rule, cand.p, q_classes);
            apply_update(&mut model, &tau, cand.z.as_slice())?;
            let moved: Vec<(usize, f64)> =
                tau.iter().copied().enumerate().filter(|(_, t)| *t != 0.0).collect();
            for (s, x) in scores.chunks_exact_mut(q_classes).zip(&xs) {
                let zx = dot(cand.z.as_slice(), x);
                for &(r, t) in &moved {
                    s[r] += t * zx;
                }
            }
            trace.push(IterationTrace {
                iter,
                chosen_p: cand.p,
                chosen_q: cand.q,
                norm_z: cand.norm_z,
                error_set_size: errors.len(),
                train_noisy_error: stats.noisy_errors as f64 / n,
            });
            observer(&UpdateEvent {
                iter,
                p: cand.p,
                q: cand.q,
                tau: &tau,
                z: cand.z.as_slice(),
                model: &model,
            });
            break;
        }
    }
    Ok(UmaFit { model, trace, termination })
}
