//! A priori LLRs to bit probabilities, symbol means and symbol variances.

use num_complex::Complex64;

use crate::comms::Constellation;

/// Beyond this magnitude an LLR is treated as certain when forming probabilities.
pub const LLR_SATURATION: f64 = 30.0;

/// `Pr(c = sign)` for a bit with LLR `llr`, `sign` in `{-1, +1}`.
pub fn bit_prob_from_llr(llr: f64, sign: f64) -> f64 {
    let l = sign.signum() * llr;
    if l > LLR_SATURATION {
        1.0
    } else if l < -LLR_SATURATION {
        0.0
    } else {
        0.5 * (1.0 + (0.5 * l).tanh())
    }
}

/// `ln Pr(c = sign)`, evaluated as `-ln(1 + exp(-sign * llr))` without overflow.
#[inline]
pub fn bit_log_prob(llr: f64, sign: f64) -> f64 {
    let t = -sign * llr;
    if t.is_nan() {
        return f64::NEG_INFINITY;
    }
    -(t.max(0.0) + (-t.abs()).exp().ln_1p())
}

/// Mean and variance of one symbol under independent bit priors.
pub fn symbol_stats(llrs: &[f64], c: &Constellation) -> (Complex64, f64) {
    let q = c.bits_per_symbol();
    assert_eq!(llrs.len(), q);
    let p1: Vec<f64> = llrs.iter().map(|&l| bit_prob_from_llr(l, 1.0)).collect();
    let probs: Vec<f64> = (0..c.size())
        .map(|s| (0..q).map(|j| if c.bit(s, j) == 1 { p1[j] } else { 1.0 - p1[j] }).product())
        .collect();
    let mean: Complex64 = c.points().iter().zip(&probs).map(|(z, p)| z * p).sum();
    let var: f64 = c.points().iter().zip(&probs).map(|(z, p)| (z - mean).norm_sqr() * p).sum();
    (mean, var.max(0.0))
}

/// Per-stream prior statistics for one symbol vector.
///
/// Bit `j` of stream `k` lives at index `k * Q + j` of `llr`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorStats {
    pub llr: Vec<f64>,
    /// `Pr(c = +1)` per bit.
    pub bit_prob: Vec<f64>,
    pub sym_mean: Vec<Complex64>,
    pub sym_var: Vec<f64>,
    /// `-sum_j ln Pr(bit_j)` for each stream and each symbol index; `+inf` if impossible.
    pub neg_log_prior: Vec<Vec<f64>>,
}

impl PriorStats {
    pub fn new(llr: &[f64], c: &Constellation) -> Self {
        let q = c.bits_per_symbol();
        assert!(llr.len().is_multiple_of(q), "LLR count must be a multiple of Q");
        let n = llr.len() / q;
        let mut sym_mean = Vec::with_capacity(n);
        let mut sym_var = Vec::with_capacity(n);
        let mut neg_log_prior = Vec::with_capacity(n);
        for k in 0..n {
            let l = &llr[k * q..(k + 1) * q];
            let (m, v) = symbol_stats(l, c);
            sym_mean.push(m);
            sym_var.push(v);
            neg_log_prior.push(
                (0..c.size())
                    .map(|s| -(0..q).map(|j| bit_log_prob(l[j], c.bit_sign(s, j))).sum::<f64>())
                    .collect(),
            );
        }
        Self {
            llr: llr.to_vec(),
            bit_prob: llr.iter().map(|&l| bit_prob_from_llr(l, 1.0)).collect(),
            sym_mean,
            sym_var,
            neg_log_prior,
        }
    }

    /// All-zero LLRs: zero means, unit variances.
    pub fn uniform(n: usize, c: &Constellation) -> Self {
        Self::new(&vec![0.0; n * c.bits_per_symbol()], c)
    }

    pub fn num_streams(&self) -> usize {
        self.sym_mean.len()
    }

    /// Reorders streams so that stream `j` of the result is stream `perm[j]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.num_streams();
        assert_eq!(perm.len(), n);
        let q = self.llr.len().checked_div(n).unwrap_or(0);
        let pick_bits = |v: &[f64]| -> Vec<f64> { perm.iter().flat_map(|&p| v[p * q..(p + 1) * q].to_vec()).collect() };
        Self {
            llr: pick_bits(&self.llr),
            bit_prob: pick_bits(&self.bit_prob),
            sym_mean: perm.iter().map(|&p| self.sym_mean[p]).collect(),
            sym_var: perm.iter().map(|&p| self.sym_var[p]).collect(),
            neg_log_prior: perm.iter().map(|&p| self.neg_log_prior[p].clone()).collect(),
        }
    }
}
