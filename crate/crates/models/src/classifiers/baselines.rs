//! Bag-of-counts baselines: multinomial naive Bayes and an elastic-net
//! penalized logistic regression.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::classifiers::spec::{ElasticNetSpec, NaiveBayesSpec};
use crate::vocab::VocabIndex;

/// Sparse (feature, count) pairs over known, non-special tokens.
pub(crate) fn bag(vocab: &VocabIndex, text: &str) -> Vec<(usize, f64)> {
    let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
    for w in headcheck_core::text::words(text) {
        if let Some(id) = vocab.get(w) {
            if (id as usize) >= vocab.specials() {
                *counts.entry(id as usize).or_insert(0.0) += 1.0;
            }
        }
    }
    counts.into_iter().collect()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayes {
    /// log P(generated) - log P(real)
    prior_log_odds: f64,
    /// Per token id: log P(w | generated) - log P(w | real).
    token_log_odds: Vec<f64>,
}

impl NaiveBayes {
    pub fn fit(spec: &NaiveBayesSpec, vocab: &VocabIndex, docs: &[Vec<(usize, f64)>], y: &[bool]) -> NaiveBayes {
        let v = vocab.len();
        let mut counts = [vec![0.0f64; v], vec![0.0f64; v]];
        let mut docs_per_class = [0.0f64; 2];
        for (doc, &gen) in docs.iter().zip(y) {
            let c = usize::from(gen);
            docs_per_class[c] += 1.0;
            for &(f, n) in doc {
                counts[c][f] += n;
            }
        }
        let features = (v - vocab.specials()) as f64;
        let totals = [counts[0].iter().sum::<f64>(), counts[1].iter().sum::<f64>()];
        let token_log_odds = (0..v)
            .map(|f| {
                if f < vocab.specials() {
                    return 0.0;
                }
                let p = |c: usize| ((counts[c][f] + spec.alpha) / (totals[c] + spec.alpha * features)).ln();
                p(1) - p(0)
            })
            .collect();
        NaiveBayes { prior_log_odds: (docs_per_class[1] / docs_per_class[0]).ln(), token_log_odds }
    }

    pub fn score(&self, doc: &[(usize, f64)]) -> f64 {
        sigmoid(self.prior_log_odds + doc.iter().map(|&(f, n)| n * self.token_log_odds[f]).sum::<f64>())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElasticNet {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub strength: f64,
    pub l1_ratio: f64,
    /// Dev accuracy for each candidate strength, in grid order.
    pub dev_accuracy: Vec<(f64, f64)>,
}

impl ElasticNet {
    pub fn score(&self, doc: &[(usize, f64)]) -> f64 {
        sigmoid(self.intercept + doc.iter().map(|&(f, n)| n * self.weights[f]).sum::<f64>())
    }

    /// Fits the whole strength grid on train (warm-started from the strongest
    /// penalty down) and keeps the strength with the best dev accuracy.
    pub fn fit(
        spec: &ElasticNetSpec,
        dim: usize,
        train: &[Vec<(usize, f64)>],
        y: &[bool],
        dev: &[Vec<(usize, f64)>],
        dev_y: &[bool],
    ) -> ElasticNet {
        let lipschitz = lipschitz_bound(dim, train);
        let mut grid = spec.strengths.clone();
        grid.sort_by(|a, b| b.total_cmp(a));
        let mut w = vec![0.0; dim];
        let mut b = 0.0;
        let mut best: Option<ElasticNet> = None;
        let mut best_acc = f64::NEG_INFINITY;
        let mut scores = Vec::new();
        for &lambda in &grid {
            fista(train, y, &mut w, &mut b, lambda, spec.l1_ratio, lipschitz, spec.iterations);
            let candidate =
                ElasticNet { weights: w.clone(), intercept: b, strength: lambda, l1_ratio: spec.l1_ratio, dev_accuracy: Vec::new() };
            let acc = if dev.is_empty() { 0.0 } else { accuracy(&candidate, dev, dev_y) };
            scores.push((lambda, acc));
            // Strict improvement keeps the stronger penalty on ties.
            if acc > best_acc {
                best_acc = acc;
                best = Some(candidate);
            }
        }
        let mut model = best.expect("non-empty grid");
        model.dev_accuracy = scores;
        model
    }
}

fn accuracy(m: &ElasticNet, docs: &[Vec<(usize, f64)>], y: &[bool]) -> f64 {
    let hits = docs.iter().zip(y).filter(|(d, &g)| (m.score(d) >= 0.5) == g).count();
    hits as f64 / docs.len() as f64
}

/// Upper bound on the Lipschitz constant of the mean logistic loss gradient,
/// from a power-iteration estimate of the largest eigenvalue of XᵀX / n (with
/// the intercept column), times 1/4, plus a safety margin.
fn lipschitz_bound(dim: usize, docs: &[Vec<(usize, f64)>]) -> f64 {
    let n = docs.len() as f64;
    let mut v = vec![1.0 / ((dim + 1) as f64).sqrt(); dim + 1];
    let mut eig = 1.0;
    for _ in 0..30 {
        let mut out = vec![0.0; dim + 1];
        for d in docs {
            let xv = v[dim] + d.iter().map(|&(f, c)| c * v[f]).sum::<f64>();
            out[dim] += xv;
            for &(f, c) in d {
                out[f] += c * xv;
            }
        }
        let norm = out.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        eig = norm / n;
        v = out.into_iter().map(|x| x / norm).collect();
    }
    1.1 * eig / 4.0
}

#[allow(clippy::too_many_arguments)]
fn fista(
    docs: &[Vec<(usize, f64)>],
    y: &[bool],
    w: &mut [f64],
    b: &mut f64,
    lambda: f64,
    l1_ratio: f64,
    lipschitz: f64,
    iterations: usize,
) {
    let n = docs.len() as f64;
    let l2 = lambda * (1.0 - l1_ratio);
    let l1 = lambda * l1_ratio;
    let step = 1.0 / (lipschitz + l2);
    let mut z = w.to_vec();
    let mut zb = *b;
    let mut t = 1.0f64;
    let mut grad = vec![0.0; w.len()];
    for _ in 0..iterations {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut grad_b = 0.0;
        for (d, &gen) in docs.iter().zip(y) {
            let p = sigmoid(zb + d.iter().map(|&(f, c)| c * z[f]).sum::<f64>());
            let r = (p - f64::from(u8::from(gen))) / n;
            grad_b += r;
            for &(f, c) in d {
                grad[f] += r * c;
            }
        }
        let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let momentum = (t - 1.0) / t_next;
        let nb = zb - step * grad_b;
        zb = nb + momentum * (nb - *b);
        *b = nb;
        for f in 0..w.len() {
            let u = z[f] - step * (grad[f] + l2 * z[f]);
            let nw = u.signum() * (u.abs() - step * l1).max(0.0);
            z[f] = nw + momentum * (nw - w[f]);
            w[f] = nw;
        }
        t = t_next;
    }
}
