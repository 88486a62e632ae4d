//! Plain multiclass perceptron, the reference learner.
//!
//! Trained on noisy labels it is the `Mperc` baseline; trained on true
//! labels it is `Mperc_full`.

use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::problem::{argmax, LabelSource, LabeledDataset, LinearModel};
use crate::rng::{Purpose, RngStream};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct PerceptronConfig {
    pub max_epochs: usize,
    pub shuffle: bool,
    pub seed: u64,
    pub label_source: LabelSource,
}

impl Default for PerceptronConfig {
    fn default() -> Self {
        Self { max_epochs: 50, shuffle: true, seed: 0, label_source: LabelSource::Noisy }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerceptronFit {
    pub model: LinearModel,
    pub updates: usize,
    pub epochs: usize,
    /// Whether the last epoch made no mistake.
    pub converged: bool,
}

pub fn train_perceptron(ds: &LabeledDataset, cfg: &PerceptronConfig) -> Result<PerceptronFit> {
    train_perceptron_with_observer(ds, cfg, |_| {})
}

/// [`train_perceptron`], calling `observer` with the model after every update.
pub fn train_perceptron_with_observer<F>(
    ds: &LabeledDataset,
    cfg: &PerceptronConfig,
    mut observer: F,
) -> Result<PerceptronFit>
where
    F: FnMut(&LinearModel),
{
    if cfg.max_epochs == 0 {
        return Err(Error::InvalidConfig("max_epochs must be >= 1".into()));
    }
    let labels = ds.labels(cfg.label_source)?;
    let mut order: Vec<usize> = (0..ds.len()).collect();
    let mut rng = RngStream::for_run(cfg.seed, 0, Purpose::Shuffle).rng();
    let mut model = LinearModel::zeros(ds.dim(), ds.q());
    let mut scores = alloc::vec![0.0; ds.q()];
    let mut updates = 0;
    let mut epochs = 0;
    let mut converged = false;

    while epochs < cfg.max_epochs {
        epochs += 1;
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        let mut mistakes = 0;
        for &i in &order {
            let x = ds.examples()[i].x();
            model.scores_into(x, &mut scores);
            let predicted = argmax(&scores);
            let y = labels[i];
            if predicted != y {
                model.add_to_column(y, 1.0, x);
                model.add_to_column(predicted, -1.0, x);
                updates += 1;
                mistakes += 1;
                observer(&model);
            }
        }
        if mistakes == 0 {
            converged = true;
            break;
        }
    }
    Ok(PerceptronFit { model, updates, epochs, converged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseVector;
    use crate::problem::LabeledExample;

    fn ex(x: &[f64], t: usize) -> LabeledExample {
        LabeledExample::renormalized(DenseVector::new(x.to_vec()).unwrap(), Some(t), None).unwrap()
    }

    #[test]
    fn single_class_never_updates() {
        let ds = LabeledDataset::new(1, 2, alloc::vec![ex(&[1.0, 0.0], 0)]).unwrap();
        let cfg = PerceptronConfig { label_source: LabelSource::True, ..Default::default() };
        let fit = train_perceptron(&ds, &cfg).unwrap();
        assert_eq!(fit.updates, 0);
        assert!(fit.converged);
    }

    #[test]
    fn missing_labels_are_reported() {
        let ds = LabeledDataset::new(2, 2, alloc::vec![ex(&[1.0, 0.0], 0)]).unwrap();
        let err = train_perceptron(&ds, &PerceptronConfig::default()).unwrap_err();
        assert_eq!(err, Error::MissingLabels { index: 0, label_source: "noisy" });
    }

    #[test]
    fn separable_data_converges_and_stays_centered() {
        let pts = [([1.0, 0.1], 0), ([0.1, 1.0], 1), ([-1.0, 0.2], 2), ([0.9, -0.3], 0), ([-0.2, 0.9], 1)];
        let ds = LabeledDataset::new(3, 2, pts.iter().map(|(x, t)| ex(x, *t)).collect()).unwrap();
        let cfg = PerceptronConfig { label_source: LabelSource::True, seed: 3, ..Default::default() };
        let mut centered = true;
        let fit = train_perceptron_with_observer(&ds, &cfg, |m| centered &= m.is_centered()).unwrap();
        assert!(fit.converged);
        assert!(centered);
        for (x, t) in &pts {
            assert_eq!(fit.model.predict(ex(x, *t).x()).unwrap(), *t);
        }
        assert_eq!(fit, train_perceptron(&ds, &cfg).unwrap());
    }
}
