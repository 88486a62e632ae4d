//! Brute-force reference implementations used as test oracles.
//!
//! Everything here is written from the definitions with plain loops and
//! nested `Vec`s, sharing no code with the library besides the data types.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use unconfused_core::{DenseMatrix, DenseVector, LabeledDataset, LabeledExample, LinearModel};

pub type Mat = Vec<Vec<f64>>;

pub fn to_mat(m: &DenseMatrix) -> Mat {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

/// Laplace expansion along the first row.
pub fn det(m: &Mat) -> f64 {
    let n = m.len();
    if n == 1 {
        return m[0][0];
    }
    let mut acc = 0.0;
    for c in 0..n {
        let sign = if c % 2 == 0 { 1.0 } else { -1.0 };
        acc += sign * m[0][c] * det(&minor(m, 0, c));
    }
    acc
}

fn minor(m: &Mat, row: usize, col: usize) -> Mat {
    m.iter()
        .enumerate()
        .filter(|(r, _)| *r != row)
        .map(|(_, r)| r.iter().enumerate().filter(|(c, _)| *c != col).map(|(_, v)| *v).collect())
        .collect()
}

/// `adj(M) / det(M)`.
pub fn adjugate_inverse(m: &Mat) -> Mat {
    let n = m.len();
    let d = det(m);
    if n == 1 {
        return vec![vec![1.0 / d]];
    }
    let mut inv = vec![vec![0.0; n]; n];
    for r in 0..n {
        for c in 0..n {
            let sign = if (r + c) % 2 == 0 { 1.0 } else { -1.0 };
            // adjugate is the transposed cofactor matrix
            inv[c][r] = sign * det(&minor(m, r, c)) / d;
        }
    }
    inv
}

/// `⟨w_k, x⟩` for every class, prototypes given as columns.
pub fn scores(w: &Mat, x: &[f64]) -> Vec<f64> {
    w.iter().map(|wk| wk.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
}

pub fn prototypes(model: &LinearModel) -> Mat {
    model.columns()
}

pub fn in_region(w: &Mat, x: &[f64], p: usize, alpha: f64) -> bool {
    let s = scores(w, x);
    (0..w.len()).filter(|&k| k != p).all(|k| s[p] - s[k] > alpha)
}

pub fn gamma(w: &Mat, xs: &[Vec<f64>], noisy: &[usize], p: usize, alpha: f64) -> Mat {
    let (q, d) = (w.len(), xs[0].len());
    let mut g = vec![vec![0.0; d]; q];
    for (x, &y) in xs.iter().zip(noisy) {
        if in_region(w, x, p, alpha) {
            for j in 0..d {
                g[y][j] += x[j];
            }
        }
    }
    let n = xs.len() as f64;
    g.iter().map(|r| r.iter().map(|v| v / n).collect()).collect()
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            for l in 0..k {
                out[i][j] += a[i][l] * b[l][j];
            }
        }
    }
    out
}

/// Row `q` of `C⁻¹ Γ^p` with the inverse built from the adjugate.
pub fn candidate(w: &Mat, xs: &[Vec<f64>], noisy: &[usize], c: &Mat, p: usize, q: usize, alpha: f64) -> Vec<f64> {
    matmul(&adjugate_inverse(c), &gamma(w, xs, noisy, p, alpha))[q].clone()
}

/// Random column-stochastic matrix with a dominant diagonal.
pub fn random_confusion(q: usize, rng: &mut ChaCha8Rng) -> Mat {
    let mut c = vec![vec![0.0; q]; q];
    for col in 0..q {
        let diag = rng.gen_range(0.6..0.95);
        let raw: Vec<f64> = (0..q).map(|r| if r == col { 0.0 } else { rng.gen_range(0.01..1.0) }).collect();
        let total: f64 = raw.iter().sum();
        for r in 0..q {
            c[r][col] = if r == col { diag } else if total > 0.0 { (1.0 - diag) * raw[r] / total } else { 0.0 };
        }
        if q == 1 {
            c[0][0] = 1.0;
        }
    }
    c
}

pub fn random_unit(d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 1e-3 {
            return v.iter().map(|a| a / n).collect();
        }
    }
}

pub fn dataset(q: usize, xs: &[Vec<f64>], truth: &[usize], noisy: &[usize]) -> LabeledDataset {
    let d = xs[0].len();
    let examples = xs
        .iter()
        .zip(truth.iter().zip(noisy))
        .map(|(x, (&t, &y))| {
            LabeledExample::new(DenseVector::new(x.clone()).unwrap(), Some(t), Some(y)).unwrap()
        })
        .collect();
    LabeledDataset::new(q, d, examples).unwrap()
}

pub fn matrix(m: &Mat) -> DenseMatrix {
    DenseMatrix::from_rows(m).unwrap()
}

/// The learner with error selection and perceptron steps, written naively:
/// every score is recomputed from the prototypes on every iteration.
/// Returns the prototypes and the chosen `(p, q)` sequence.
pub fn naive_train(
    xs: &[Vec<f64>],
    noisy: &[usize],
    c: &Mat,
    alpha: f64,
    stop_norm: f64,
    max_iters: usize,
) -> (Mat, Vec<(usize, usize)>) {
    let (q, d) = (c.len(), xs[0].len());
    let c_inv = adjugate_inverse(c);
    let n = xs.len() as f64;
    let mut w = vec![vec![0.0; d]; q];
    let mut chosen = Vec::new();
    for _ in 0..max_iters {
        let at_zero = w.iter().flatten().all(|v| *v == 0.0);
        let a = if at_zero { 0.0 } else { alpha };
        let mut cands = Vec::new();
        for p in 0..q {
            let mut g = vec![vec![0.0; d]; q];
            for (x, &y) in xs.iter().zip(noisy) {
                let s = scores(&w, x);
                // first index of the maximum
                let top = (0..q).fold(0, |b, k| if s[k] > s[b] { k } else { b });
                let member = if at_zero { top == p } else { in_region(&w, x, p, a) };
                if member {
                    for j in 0..d {
                        g[y][j] += x[j] / n;
                    }
                }
            }
            let z = matmul(&c_inv, &g);
            for qq in (0..q).filter(|&qq| qq != p) {
                let norm = z[qq].iter().map(|v| v * v).sum::<f64>().sqrt();
                cands.push((p, qq, z[qq].clone(), norm));
            }
        }
        if cands.iter().all(|c| c.3 <= stop_norm) {
            break;
        }
        let mut spent = vec![false; cands.len()];
        let mut applied = false;
        loop {
            let mut best: Option<usize> = None;
            for (i, cand) in cands.iter().enumerate() {
                if spent[i] || cand.3 <= stop_norm {
                    continue;
                }
                if best.map_or(true, |b| cand.3 > cands[b].3) {
                    best = Some(i);
                }
            }
            let Some(i) = best else { break };
            let (p, qq, z, _) = cands[i].clone();
            let s = scores(&w, &z);
            let errors: Vec<usize> = (0..q).filter(|&r| r != qq && s[r] - s[qq] >= a).collect();
            if errors.is_empty() {
                spent[i] = true;
                continue;
            }
            let mut tau = vec![0.0; q];
            tau[qq] = 1.0;
            if errors.contains(&p) {
                tau[p] = -1.0;
            } else {
                for &r in &errors {
                    tau[r] = -1.0 / errors.len() as f64;
                }
            }
            for r in 0..q {
                for j in 0..d {
                    w[r][j] += tau[r] * z[j];
                }
            }
            chosen.push((p, qq));
            applied = true;
            break;
        }
        if !applied {
            break;
        }
    }
    (w, chosen)
}

/// Largest gap between the library's `z_pq` and the brute-force one over
/// `instances` random problems with `n ≤ 50`, `Q ≤ 4`, `d ≤ 3`.
pub fn candidate_max_deviation(instances: usize, seed: u64) -> f64 {
    use unconfused_core::uma;
    use unconfused_core::ConfusionMatrix;
    let mut rng = unconfused_core::RngStream::new(seed, 0).rng();
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let q = rng.gen_range(2..=4);
        let d = rng.gen_range(1..=3);
        let n = rng.gen_range(1..=50);
        let xs: Vec<Vec<f64>> = (0..n).map(|_| random_unit(d, &mut rng)).collect();
        let truth: Vec<usize> = (0..n).map(|_| rng.gen_range(0..q)).collect();
        let noisy: Vec<usize> = (0..n).map(|_| rng.gen_range(0..q)).collect();
        let w: Mat = (0..q).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let c = random_confusion(q, &mut rng);
        let alpha = if rng.gen_bool(0.5) { 0.0 } else { rng.gen_range(0.0..0.3) };

        let ds = dataset(q, &xs, &truth, &noisy);
        let model = LinearModel::from_columns(&w).unwrap();
        let cm = ConfusionMatrix::new(matrix(&c)).unwrap();
        for p in 0..q {
            for qq in (0..q).filter(|&qq| qq != p) {
                let got = uma::candidate(&model, &ds, &cm, p, qq, alpha).unwrap();
                let want = candidate(&w, &xs, &noisy, &c, p, qq, alpha);
                for (a, b) in got.z.as_slice().iter().zip(&want) {
                    worst = worst.max((a - b).abs());
                }
            }
        }
    }
    worst
}

/// Noise with frequencies equal to `C` exactly: every base point is copied
/// ten times and the copies of a class-`q` point carry label `p` exactly
/// `10·C[p][q]` times. Then `C⁻¹Γ^p` row `q` must equal `(1/n) Σ x` over the
/// points of true class `q` in the region, for every `p` and `q`. Returns the
/// largest deviation over several random models.
pub fn exact_recovery_max_deviation(seed: u64) -> f64 {
    use unconfused_core::{linalg, uma, ConfusionMatrix};
    let c: Mat = vec![vec![0.7, 0.2, 0.1], vec![0.2, 0.6, 0.1], vec![0.1, 0.2, 0.8]];
    let q = 3;
    let mut rng = unconfused_core::RngStream::new(seed, 0).rng();
    let (mut xs, mut truth, mut noisy) = (Vec::new(), Vec::new(), Vec::new());
    for t in 0..q {
        for _ in 0..4 {
            let x = random_unit(2, &mut rng);
            for p in 0..q {
                let copies = (10.0 * c[p][t]).round() as usize;
                for _ in 0..copies {
                    xs.push(x.clone());
                    truth.push(t);
                    noisy.push(p);
                }
            }
        }
    }
    let ds = dataset(q, &xs, &truth, &noisy);
    let cm = ConfusionMatrix::new(matrix(&c)).unwrap();
    let n = xs.len() as f64;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let w: Mat = (0..q).map(|_| (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let model = LinearModel::from_columns(&w).unwrap();
        let alpha = rng.gen_range(0.0..0.2);
        for p in 0..q {
            let unmixed =
                linalg::matmul(cm.inverse(), &uma::gamma_matrix(&model, &ds, p, alpha).unwrap()).unwrap();
            for t in 0..q {
                let mut mean = [0.0; 2];
                for (x, &tt) in xs.iter().zip(&truth) {
                    if tt == t && in_region(&w, x, p, alpha) {
                        mean[0] += x[0] / n;
                        mean[1] += x[1] / n;
                    }
                }
                let row = unmixed.row(t);
                if t != p {
                    let z = uma::candidate(&model, &ds, &cm, p, t, alpha).unwrap();
                    assert_eq!(z.z.as_slice(), row);
                }
                for j in 0..2 {
                    worst = worst.max((row[j] - mean[j]).abs());
                }
            }
        }
    }
    worst
}
