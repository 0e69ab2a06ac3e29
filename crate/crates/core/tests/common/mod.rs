//! Oracles shared by the integration tests and the acceptance harness.
#![allow(dead_code)]

use std::sync::Arc;

use incrlin::datamodel::{
    ClassId, EmbeddingSource, EmbeddingTable, FeatureVector, LabeledExample, RegularizerKind,
    WeightMatrix,
};
use incrlin::linalg::orthonormal_basis;
use incrlin::objectives::{
    linear_map_targets, semantic_targets, Anchor, Gradient, NovelPrior, Objective, OldAnchors,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian<R: Rng>(rng: &mut R, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Central-difference gradient of `f` with respect to every entry of every
/// row of `weights`, compared with `analytic` (missing rows count as zero).
/// Returns `||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-8)`.
pub fn fd_relative_error(
    weights: &WeightMatrix,
    analytic: &Gradient,
    h: f64,
    f: impl Fn(&WeightMatrix) -> f64,
) -> f64 {
    let (mut diff, mut na, mut nn) = (0.0, 0.0, 0.0);
    let classes: Vec<ClassId> = weights.classes().collect();
    for c in classes {
        let row = weights.row(c).unwrap().to_vec();
        for k in 0..row.len() {
            let eval = |delta: f64| {
                let mut w = weights.clone();
                let mut r = row.clone();
                r[k] += delta;
                w.insert(c, r).unwrap();
                f(&w)
            };
            let numeric = (eval(h) - eval(-h)) / (2.0 * h);
            let a = analytic.get(c).map_or(0.0, |g| g[k]);
            diff += (a - numeric).powi(2);
            na += a * a;
            nn += numeric * numeric;
        }
    }
    diff.sqrt() / na.sqrt().max(nn.sqrt()).max(1e-8)
}

/// A small random fine-tuning problem: weights over `n` classes of which the
/// first `n_base` are anchored base classes and the rest novel.
pub struct Instance {
    pub weights: WeightMatrix,
    pub batch: Vec<LabeledExample>,
    pub active: Vec<ClassId>,
    pub base: Vec<ClassId>,
    pub novel: Vec<ClassId>,
    pub anchors: OldAnchors,
    pub embeddings: EmbeddingTable,
    pub base_weights: WeightMatrix,
    pub alpha: f64,
    pub gamma: f64,
    pub tau: f64,
}

pub fn instance<R: Rng>(rng: &mut R) -> Instance {
    let d = rng.random_range(1..=16);
    let n = rng.random_range(2..=8u32);
    let n_base = rng.random_range(1..n);
    let active: Vec<ClassId> = (0..n).map(ClassId).collect();
    let base = active[..n_base as usize].to_vec();
    let novel = active[n_base as usize..].to_vec();

    let mut weights = WeightMatrix::new(d);
    let mut base_weights = WeightMatrix::new(d);
    for &c in &active {
        weights.insert(c, gaussian(rng, d, 1.0)).unwrap();
    }
    for &c in &base {
        base_weights.insert(c, gaussian(rng, d, 1.0)).unwrap();
    }
    let anchors = OldAnchors::new(
        base.iter()
            .map(|&c| Anchor {
                class: c,
                target: base_weights.row(c).unwrap().to_vec(),
                beta: rng.random_range(0.01..1.0),
            })
            .collect(),
    );
    let d_e = rng.random_range(1..=8);
    let mut embeddings = EmbeddingTable::new(d_e, EmbeddingSource::Label);
    for &c in &active {
        embeddings.insert(c, gaussian(rng, d_e, 1.0)).unwrap();
    }
    let batch = (0..rng.random_range(1..=12))
        .map(|_| {
            let c = active[rng.random_range(0..active.len())];
            LabeledExample::new(c, FeatureVector::new(gaussian(rng, d, 1.0)).unwrap())
        })
        .collect();
    Instance {
        weights,
        batch,
        active,
        base,
        novel,
        anchors,
        embeddings,
        base_weights,
        alpha: rng.random_range(0.0..0.1),
        gamma: rng.random_range(0.0..2.0),
        tau: rng.random_range(0.5..4.0),
    }
}

impl Instance {
    pub fn prior(&self, kind: RegularizerKind) -> NovelPrior {
        use RegularizerKind::*;
        match kind {
            FineTune => NovelPrior::None,
            Subspace => {
                let rows: Vec<&[f64]> = self.base_weights.iter().map(|(_, r)| r).collect();
                NovelPrior::Subspace(Arc::new(orthonormal_basis(&rows).unwrap()))
            }
            Semantic | Description => NovelPrior::Fixed(
                semantic_targets(&self.embeddings, &self.novel, &self.base, &self.base_weights, self.tau)
                    .unwrap(),
            ),
            LinearMap => NovelPrior::Fixed(
                linear_map_targets(&self.embeddings, &self.novel, &self.base, &self.base_weights, None)
                    .unwrap(),
            ),
        }
    }

    pub fn objective(&self, kind: RegularizerKind) -> Objective {
        Objective::assemble(
            kind,
            self.alpha,
            self.gamma,
            &self.active,
            &self.novel,
            self.anchors.clone(),
            self.prior(kind),
        )
        .unwrap()
    }
}

/// Straight-line full-batch gradient descent on
/// `CE + alpha |W|^2 + sum beta |w - anchor|^2 + gamma sum_novel |w - P P^T w|^2`
/// with row-major `Vec<Vec<f64>>` weights, `basis` given as orthonormal
/// columns.
pub fn reference_sgd(
    mut w: Vec<Vec<f64>>,
    xs: &[Vec<f64>],
    ys: &[usize],
    alpha: f64,
    anchors: &[(usize, Vec<f64>, f64)],
    gamma: f64,
    novel: &[usize],
    basis: &[Vec<f64>],
    lr: f64,
    steps: usize,
) -> Vec<Vec<f64>> {
    let k = w.len();
    let d = w[0].len();
    let n = xs.len() as f64;
    for _ in 0..steps {
        let mut g = vec![vec![0.0; d]; k];
        for (x, &y) in xs.iter().zip(ys) {
            let logits: Vec<f64> = w.iter().map(|r| r.iter().zip(x).map(|(a, b)| a * b).sum()).collect();
            let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
            for j in 0..k {
                let p = (logits[j] - m).exp() / z;
                let coef = (p - if j == y { 1.0 } else { 0.0 }) / n;
                for i in 0..d {
                    g[j][i] += coef * x[i];
                }
            }
        }
        for j in 0..k {
            for i in 0..d {
                g[j][i] += 2.0 * alpha * w[j][i];
            }
        }
        for (j, target, beta) in anchors {
            for i in 0..d {
                g[*j][i] += 2.0 * beta * (w[*j][i] - target[i]);
            }
        }
        for &j in novel {
            let mut proj = vec![0.0; d];
            for q in basis {
                let c: f64 = q.iter().zip(&w[j]).map(|(a, b)| a * b).sum();
                for i in 0..d {
                    proj[i] += c * q[i];
                }
            }
            for i in 0..d {
                g[j][i] += 2.0 * gamma * (w[j][i] - proj[i]);
            }
        }
        for j in 0..k {
            for i in 0..d {
                w[j][i] -= lr * g[j][i];
            }
        }
    }
    w
}

/// Accuracy (percent) of classifying each query by its nearest true mean.
pub fn nearest_mean_accuracy(means: &[Vec<f64>], queries: &[(usize, &[f64])]) -> f64 {
    let correct = queries
        .iter()
        .filter(|(y, x)| {
            let dist = |m: &Vec<f64>| m.iter().zip(x.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            let best = (0..means.len())
                .min_by(|&i, &j| dist(&means[i]).total_cmp(&dist(&means[j])))
                .unwrap();
            best == *y
        })
        .count();
    100.0 * correct as f64 / queries.len() as f64
}

/// Largest violation of the basis properties on one random instance: a set
/// of `n` vectors in `R^d` of known rank `r`.
pub fn linalg_instance(seed: u64) -> Result<(), String> {
    use incrlin::linalg::{dot, norm, sub};

    let mut g = rng(seed);
    let d = g.random_range(1..=12);
    let r = g.random_range(1..=d);
    let n = g.random_range(r..=r + 4);
    let gens: Vec<Vec<f64>> = (0..r).map(|_| gaussian(&mut g, d, 1.0)).collect();
    let vs: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            if i < r {
                gens[i].clone()
            } else {
                let c = gaussian(&mut g, r, 1.0);
                (0..d).map(|k| (0..r).map(|j| c[j] * gens[j][k]).sum()).collect()
            }
        })
        .collect();
    let p = orthonormal_basis(&vs).map_err(|e| e.to_string())?;
    if p.rank() != r {
        return Err(format!("rank {} != {r}", p.rank()));
    }
    for (i, a) in p.columns().iter().enumerate() {
        for (j, b) in p.columns().iter().enumerate() {
            let e = (dot(a, b) - if i == j { 1.0 } else { 0.0 }).abs();
            if e > 1e-6 {
                return Err(format!("Q^T Q off identity by {e:e}"));
            }
        }
    }
    let v = gaussian(&mut g, d, 2.0);
    let pv = p.project(&v).unwrap();
    let ppv = p.project(&pv).unwrap();
    if norm(&sub(&ppv, &pv)) > 1e-9 * norm(&v).max(1.0) {
        return Err("projection is not idempotent".into());
    }
    let best = norm(&sub(&v, &pv));
    for _ in 0..20 {
        let c = gaussian(&mut g, n, 1.0);
        let u: Vec<f64> = (0..d).map(|k| (0..n).map(|j| c[j] * vs[j][k]).sum()).collect();
        if norm(&sub(&v, &u)) < best - 1e-9 {
            return Err("a span element is closer than the projection".into());
        }
    }
    // Invertible recombination (and reversal) of the generators spans the
    // same space, so the projector must not change.
    let m: Vec<Vec<f64>> = (0..r).map(|_| gaussian(&mut g, r, 1.0)).collect();
    let mut mixed: Vec<Vec<f64>> = (0..r)
        .map(|i| (0..d).map(|k| (0..r).map(|j| m[i][j] * gens[j][k]).sum()).collect())
        .collect();
    mixed.reverse();
    if let Ok(q) = orthonormal_basis(&mixed) {
        if q.rank() == r {
            let qv = q.project(&v).unwrap();
            if norm(&sub(&qv, &pv)) > 1e-6 * norm(&v).max(1.0) {
                return Err("projection depends on the spanning set".into());
            }
        }
    }
    Ok(())
}

/// First-order optimality and minimality of the least-squares map on one
/// random instance.
pub fn lstsq_instance(seed: u64) -> Result<(), String> {
    use incrlin::linalg::fit_least_squares;

    let mut g = rng(seed);
    let de = g.random_range(1..=6);
    let d = g.random_range(1..=6);
    let n = g.random_range(2..=12);
    let es: Vec<Vec<f64>> = (0..n).map(|_| gaussian(&mut g, de, 1.0)).collect();
    let ts: Vec<Vec<f64>> = (0..n).map(|_| gaussian(&mut g, d, 1.0)).collect();
    let ridge = if g.random_bool(0.5) { 0.0 } else { g.random_range(0.01..1.0) };
    let map = fit_least_squares(&es, &ts, ridge).map_err(|e| e.to_string())?;
    let base = map.objective(&es, &ts, ridge).unwrap();
    for _ in 0..10 {
        let mut other = map.clone();
        let eps = 1e-3;
        for i in 0..d {
            other.bias[i] += eps * gaussian(&mut g, 1, 1.0)[0];
            for j in 0..de {
                other.matrix[(i, j)] += eps * gaussian(&mut g, 1, 1.0)[0];
            }
        }
        let o = other.objective(&es, &ts, ridge).unwrap();
        if o < base - 1e-12 * base.max(1.0) {
            return Err(format!("perturbation lowers the objective: {o} < {base}"));
        }
    }
    Ok(())
}

/// The 3-class, 4-example, d = 2 problem: engine weights after `steps`
/// full-batch steps at lr 0.01 against the reference loop. Returns the
/// largest absolute difference.
pub fn trainer_oracle_gap(steps: usize) -> f64 {
    use incrlin::datamodel::OptimizerConfig;
    use incrlin::trainer::fine_tune;

    let w0: Vec<Vec<f64>> = vec![vec![0.5, -0.2], vec![-0.3, 0.8], vec![0.1, 0.1]];
    let xs = vec![vec![1.0, 0.5], vec![-0.4, 1.2], vec![0.3, -0.9], vec![2.0, 0.1]];
    let ys = vec![0usize, 1, 2, 0];
    let (alpha, gamma, lr) = (0.01, 0.7, 0.01);
    let anchors = vec![(0usize, vec![0.4, -0.1], 0.2), (1usize, vec![-0.2, 0.9], 0.2)];
    // base span: the line through the first base row
    let b = &w0[0];
    let nb = (b[0] * b[0] + b[1] * b[1]).sqrt();
    let basis = vec![vec![b[0] / nb, b[1] / nb]];

    let ids: Vec<ClassId> = (0..3).map(ClassId).collect();
    let mut weights = WeightMatrix::new(2);
    for (c, row) in ids.iter().zip(&w0) {
        weights.insert(*c, row.clone()).unwrap();
    }
    let data: Vec<LabeledExample> = xs
        .iter()
        .zip(&ys)
        .map(|(x, &y)| LabeledExample::new(ids[y], FeatureVector::new(x.clone()).unwrap()))
        .collect();
    let old = OldAnchors::new(
        anchors
            .iter()
            .map(|(j, t, beta)| Anchor {
                class: ids[*j],
                target: t.clone(),
                beta: *beta,
            })
            .collect(),
    );
    let prior = NovelPrior::Subspace(Arc::new(orthonormal_basis(&[w0[0].clone()]).unwrap()));
    let obj = Objective::assemble(RegularizerKind::Subspace, alpha, gamma, &ids, &ids[2..], old, prior)
        .unwrap();
    let opt = OptimizerConfig {
        learning_rate: lr,
        max_epochs: steps,
        convergence_tolerance: 0.0,
        patience_epochs: 10,
        batch_size: 64,
    };
    fine_tune(&mut weights, &obj, &data, &opt, &mut rng(0)).unwrap();

    let expect = reference_sgd(w0, &xs, &ys, alpha, &anchors, gamma, &[2], &basis, lr, steps);
    ids.iter()
        .zip(&expect)
        .flat_map(|(c, e)| {
            let got = weights.row(*c).unwrap().to_vec();
            got.into_iter().zip(e.clone()).map(|(a, b)| (a - b).abs())
        })
        .fold(0.0, f64::max)
}

/// Every gradient the engine computes: each penalty on its own, then the
/// assembled objective for each regularizer kind.
pub const GRADIENT_VARIANTS: [&str; 11] = [
    "cross-entropy",
    "prior",
    "old-anchor",
    "subspace-term",
    "semantic-term",
    "linmap-term",
    "objective:finetune",
    "objective:subspace",
    "objective:semantic",
    "objective:linmap",
    "objective:description",
];

pub const FD_STEP: f64 = 1e-6;

/// Relative error of one gradient variant on one random instance.
pub fn gradient_error(variant: &str, seed: u64) -> f64 {
    use incrlin::objectives::{cross_entropy, r_new_fixed_target, r_new_subspace, r_old, r_prior};

    let inst = instance(&mut rng(seed));
    let fixed = |kind| match inst.prior(kind) {
        NovelPrior::Fixed(t) => t,
        _ => unreachable!(),
    };
    match variant {
        "cross-entropy" => {
            let g = cross_entropy(&inst.weights, &inst.batch, &inst.active).unwrap().gradient;
            fd_relative_error(&inst.weights, &g, FD_STEP, |w| {
                cross_entropy(w, &inst.batch, &inst.active).unwrap().value
            })
        }
        "prior" => {
            let g = r_prior(&inst.weights, &inst.active).unwrap().gradient;
            fd_relative_error(&inst.weights, &g, FD_STEP, |w| r_prior(w, &inst.active).unwrap().value)
        }
        "old-anchor" => {
            let g = r_old(&inst.weights, &inst.anchors).unwrap().gradient;
            fd_relative_error(&inst.weights, &g, FD_STEP, |w| r_old(w, &inst.anchors).unwrap().value)
        }
        "subspace-term" => {
            let NovelPrior::Subspace(basis) = inst.prior(RegularizerKind::Subspace) else {
                unreachable!()
            };
            let g = r_new_subspace(&inst.weights, &inst.novel, &basis).unwrap().gradient;
            fd_relative_error(&inst.weights, &g, FD_STEP, |w| {
                r_new_subspace(w, &inst.novel, &basis).unwrap().value
            })
        }
        "semantic-term" | "linmap-term" => {
            let kind = if variant == "semantic-term" {
                RegularizerKind::Semantic
            } else {
                RegularizerKind::LinearMap
            };
            let t = fixed(kind);
            let g = r_new_fixed_target(&inst.weights, &inst.novel, &t).unwrap().gradient;
            fd_relative_error(&inst.weights, &g, FD_STEP, |w| {
                r_new_fixed_target(w, &inst.novel, &t).unwrap().value
            })
        }
        other => {
            let kind: RegularizerKind = other.trim_start_matches("objective:").parse().unwrap();
            let obj = inst.objective(kind);
            let g = obj.evaluate(&inst.weights, &inst.batch).unwrap().gradient;
            fd_relative_error(&inst.weights, &g, FD_STEP, |w| obj.evaluate(w, &inst.batch).unwrap().total)
        }
    }
}

/// Largest gap between the analytic subspace gradient and central
/// differences of the penalty, once with the projected target
/// differentiated through and once with it held fixed.
pub fn stop_gradient_gap(seed: u64) -> f64 {
    use incrlin::objectives::r_new_subspace;

    let h = 1e-5;
    let inst = instance(&mut rng(seed));
    let rows: Vec<&[f64]> = inst.base_weights.iter().map(|(_, r)| r).collect();
    let basis = orthonormal_basis(&rows).unwrap();
    let g = r_new_subspace(&inst.weights, &inst.novel, &basis).unwrap().gradient;
    let mut worst: f64 = 0.0;
    for &c in &inst.novel {
        let row = inst.weights.row(c).unwrap().to_vec();
        let frozen = basis.project(&row).unwrap();
        for k in 0..row.len() {
            let shifted = |delta: f64| {
                let mut r = row.clone();
                r[k] += delta;
                r
            };
            let through = |delta: f64| {
                let res = basis.residual(&shifted(delta)).unwrap();
                res.iter().map(|x| x * x).sum::<f64>()
            };
            let fixed = |delta: f64| {
                shifted(delta).iter().zip(&frozen).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
            };
            let a = g.get(c).unwrap()[k];
            worst = worst
                .max((a - (through(h) - through(-h)) / (2.0 * h)).abs())
                .max((a - (fixed(h) - fixed(-h)) / (2.0 * h)).abs());
        }
    }
    worst
}
