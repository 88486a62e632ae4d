mod support;

use rand::Rng;
use unconfused_core::perceptron::{train_perceptron, PerceptronConfig};
use unconfused_core::synth::{corrupt, generate_concept, generate_dataset, SynthConfig};
use unconfused_core::uma::{self, Termination, UmaConfig};
use unconfused_core::{ConfusionMatrix, LabelSource, LinearModel, RngStream};

#[test]
fn training_loop_matches_naive_reimplementation() {
    let mut rng = RngStream::new(21, 0).rng();
    for case in 0..40 {
        let q = rng.gen_range(2..=4);
        let d = rng.gen_range(1..=3);
        let n = rng.gen_range(5..=50);
        let xs: Vec<Vec<f64>> = (0..n).map(|_| support::random_unit(d, &mut rng)).collect();
        let truth: Vec<usize> = (0..n).map(|_| rng.gen_range(0..q)).collect();
        let c = support::random_confusion(q, &mut rng);
        let ds = support::dataset(q, &xs, &truth, &truth);
        let cm = ConfusionMatrix::new(support::matrix(&c)).unwrap();
        let noisy_ds = corrupt(&ds, &cm, RngStream::new(case, 1)).unwrap();
        let noisy: Vec<usize> = noisy_ds.labels(LabelSource::Noisy).unwrap();
        let alpha = if case % 2 == 0 { 0.0 } else { 0.01 };

        let cfg = UmaConfig { alpha, stop_norm: 1e-4, max_iters: 60, ..UmaConfig::default() };
        let fit = uma::train(&noisy_ds, &cm, &cfg, RngStream::new(case, 2)).unwrap();
        let (w, chosen) = support::naive_train(&xs, &noisy, &c, alpha, 1e-4, 60);

        let got: Vec<(usize, usize)> = fit.trace.iter().map(|t| (t.chosen_p, t.chosen_q)).collect();
        assert_eq!(got, chosen, "case {case}");
        for (k, col) in fit.model.columns().iter().enumerate() {
            for (a, b) in col.iter().zip(&w[k]) {
                assert!((a - b).abs() <= 1e-9, "case {case}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn noise_free_uma_and_perceptron_stay_within_their_mistake_bounds() {
    let theta = 0.025;
    let bound = (2.0 / (theta * theta)) as usize;
    for seed in 0..3 {
        let cfg = SynthConfig { seed, ..SynthConfig::default() };
        let concept = generate_concept(&cfg, RngStream::new(seed, 1)).unwrap();
        let ds = generate_dataset(&cfg, &concept, cfg.n_train, RngStream::new(seed, 2)).unwrap();
        let clean = support::dataset(
            cfg.q_classes,
            &ds.examples().iter().map(|e| e.x().to_vec()).collect::<Vec<_>>(),
            &ds.labels(LabelSource::True).unwrap(),
            &ds.labels(LabelSource::True).unwrap(),
        );

        let ucfg = UmaConfig { alpha: 0.0, ..UmaConfig::for_margin(theta) };
        let fit = uma::train(&clean, &ConfusionMatrix::identity(cfg.q_classes), &ucfg, RngStream::new(seed, 3))
            .unwrap();
        assert!(fit.updates() <= bound, "uma: {} updates", fit.updates());
        assert_eq!(training_errors(&fit.model, &clean), 0);
        assert_ne!(fit.termination, Termination::MaxIters);

        // pairwise-feature bound R²‖W*‖²/γ² with R² = 2, ‖W*‖² = Σ‖w_q‖², γ the smallest raw gap
        let gamma = clean
            .examples()
            .iter()
            .map(|e| concept.margin_of(e.x(), e.true_label().unwrap()).unwrap())
            .fold(f64::INFINITY, f64::min);
        let w_norm2: f64 = concept.columns().iter().flatten().map(|v| v * v).sum();
        let kesler = 2.0 * w_norm2 / (gamma * gamma);
        let pcfg = PerceptronConfig { label_source: LabelSource::True, seed, max_epochs: 1000, ..Default::default() };
        let perc = train_perceptron(&clean, &pcfg).unwrap();
        assert!(perc.converged);
        assert!((perc.updates as f64) <= kesler, "perceptron: {} updates, bound {kesler}", perc.updates);
    }
}

fn training_errors(model: &LinearModel, ds: &unconfused_core::LabeledDataset) -> usize {
    ds.examples()
        .iter()
        .filter(|e| model.predict(e.x()).unwrap() != e.true_label().unwrap())
        .count()
}
