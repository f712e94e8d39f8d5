//! Output heads: softmax cross-entropy and a diagonal Gaussian mixture.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Log-std bounds applied inside the mixture likelihood.
pub const LOG_STD_MIN: f64 = -10.0;
pub const LOG_STD_MAX: f64 = 3.0;

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(logits);
    logits.iter().map(|l| (l - lse).exp()).collect()
}

/// First index of the maximum; ties go to the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate().skip(1) {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

/// Softmax cross-entropy, gradient written into `grad` (overwrites).
pub fn categorical_nll_into(logits: &[f64], label: usize, grad: &mut [f64]) -> f64 {
    let lse = log_sum_exp(logits);
    for (g, l) in grad.iter_mut().zip(logits) {
        *g = (l - lse).exp();
    }
    grad[label] -= 1.0;
    lse - logits[label]
}

pub fn categorical_nll(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; logits.len()];
    let loss = categorical_nll_into(logits, label, &mut grad);
    (loss, grad)
}

/// Layout of a mixture-density output row: `k` logits, then `k * dim`
/// center offsets, then `k * dim` log-stds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MixtureHead {
    pub k: usize,
    pub dim: usize,
}

impl MixtureHead {
    pub fn new(k: usize, dim: usize) -> Self {
        MixtureHead { k, dim }
    }

    pub fn width(&self) -> usize {
        self.k * (1 + 2 * self.dim)
    }

    pub fn view<'a>(&self, row: &'a [f64]) -> MdnOutput<'a> {
        debug_assert_eq!(row.len(), self.width());
        MdnOutput { head: *self, row }
    }
}

/// Borrowed view over one mixture-density output row.
///
/// Mode `k` is `N(anchor + c_k, diag(exp(2 * log_std_k)))`.
#[derive(Debug, Clone, Copy)]
pub struct MdnOutput<'a> {
    head: MixtureHead,
    row: &'a [f64],
}

impl<'a> MdnOutput<'a> {
    pub fn head(&self) -> MixtureHead {
        self.head
    }

    pub fn raw(&self) -> &'a [f64] {
        self.row
    }

    pub fn logits(&self) -> &'a [f64] {
        &self.row[..self.head.k]
    }

    pub fn offset(&self, k: usize) -> &'a [f64] {
        let d = self.head.dim;
        let start = self.head.k + k * d;
        &self.row[start..start + d]
    }

    pub fn log_std(&self, k: usize) -> &'a [f64] {
        let d = self.head.dim;
        let start = self.head.k + self.head.k * d + k * d;
        &self.row[start..start + d]
    }

    pub fn mean(&self, k: usize, anchor: &[f64]) -> Vec<f64> {
        anchor.iter().zip(self.offset(k)).map(|(a, c)| a + c).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        softmax(self.logits())
    }

    /// Mode with the largest logit.
    pub fn most_likely(&self) -> usize {
        argmax(self.logits())
    }

    /// Negative log-likelihood of `target`; gradient w.r.t. the raw row is
    /// written into `grad` (overwrites).
    pub fn nll_into(&self, anchor: &[f64], target: &[f64], grad: &mut [f64]) -> f64 {
        let MixtureHead { k: n_modes, dim } = self.head;
        let logits = self.logits();
        let lse_p = log_sum_exp(logits);
        let mut joint = vec![0.0; n_modes];
        for (k, j) in joint.iter_mut().enumerate() {
            let c = self.offset(k);
            let ls = self.log_std(k);
            let mut log_n = -0.5 * LN_2PI * dim as f64;
            for d in 0..dim {
                let s = ls[d].clamp(LOG_STD_MIN, LOG_STD_MAX);
                let z = (target[d] - anchor[d] - c[d]) * (-s).exp();
                log_n -= s + 0.5 * z * z;
            }
            *j = logits[k] - lse_p + log_n;
        }
        let lse = log_sum_exp(&joint);

        for (k, j) in joint.iter().enumerate() {
            let resp = (j - lse).exp();
            grad[k] = (logits[k] - lse_p).exp() - resp;
            let c = self.offset(k);
            let ls = self.log_std(k);
            for d in 0..dim {
                let raw = ls[d];
                let s = raw.clamp(LOG_STD_MIN, LOG_STD_MAX);
                let inv_var = (-2.0 * s).exp();
                let diff = target[d] - anchor[d] - c[d];
                grad[n_modes + k * dim + d] = -resp * diff * inv_var;
                let ds = if (LOG_STD_MIN..=LOG_STD_MAX).contains(&raw) {
                    resp * (1.0 - diff * diff * inv_var)
                } else {
                    0.0
                };
                grad[n_modes + n_modes * dim + k * dim + d] = ds;
            }
        }
        -lse
    }

    pub fn nll(&self, anchor: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.head.width()];
        let loss = self.nll_into(anchor, target, &mut grad);
        (loss, grad)
    }

    /// Draws from mode `mode`, or from a mode chosen by the mixture weights.
    pub fn sample<R: Rng + ?Sized>(&self, anchor: &[f64], rng: &mut R, mode: Option<usize>) -> Vec<f64> {
        let k = match mode {
            Some(k) => k,
            None => sample_categorical(&self.weights(), rng),
        };
        let c = self.offset(k);
        let ls = self.log_std(k);
        (0..self.head.dim)
            .map(|d| {
                let eps: f64 = StandardNormal.sample(rng);
                anchor[d] + c[d] + ls[d].min(LOG_STD_MAX).exp() * eps
            })
            .collect()
    }
}

pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left u above the final partial sum
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}
