//! Path metrics on the triangularised system `y = R x + n`.
//!
//! Positions are 0-based: the tree root has all `N` symbols undecided and the
//! search fixes positions `N-1, N-2, ..., 0` in that order. A node with
//! `undecided = i` has fixed `x[i..N]` and still has to choose `x[0..i]`.
//!
//! * causal metric: sum of branch metrics of the fixed symbols;
//! * look-ahead metric: causal metric plus `||Z_i a_i||^2`, where `a_i` is the
//!   residual on the undecided rows after cancelling fixed symbols and prior
//!   means, and `Z_i = sigma2 (R11 Lambda R11^H + sigma2 I)^-1`;
//! * genie metric: causal metric plus the exact best completion.

use std::ops::{Add, AddAssign, Range};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comms::Constellation;
use crate::numkit::{self, CMatrix, CVector, LinalgError};
use crate::priors::PriorStats;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("parameter error: {0}")]
    Param(String),
    #[error("exhaustive completion over {bits} bits exceeds the limit of {limit}")]
    TooLarge { bits: usize, limit: usize },
}

/// Largest number of undecided bits the genie metric will enumerate.
pub const GENIE_MAX_BITS: usize = 20;

/// Complex multiplication tally, split by where the work happens.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultCount {
    /// Look-ahead products `Z_i a` (one per surviving parent).
    pub bias: u64,
    /// Per-child metric evaluation: interference update and bias correction.
    pub metric: u64,
    /// Residual updates for surviving nodes.
    pub update: u64,
    /// Exact cost evaluation of flipped list entries and soft demapping.
    pub llr: u64,
}

impl MultCount {
    pub fn total(&self) -> u64 {
        self.bias + self.metric + self.update + self.llr
    }
}

impl Add for MultCount {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            bias: self.bias + o.bias,
            metric: self.metric + o.metric,
            update: self.update + o.update,
            llr: self.llr + o.llr,
        }
    }
}

impl AddAssign for MultCount {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

/// One triangularised detection instance.
#[derive(Debug, Clone)]
pub struct DetectionProblem {
    pub r: CMatrix,
    pub y: CVector,
    pub sigma2: f64,
    pub priors: PriorStats,
    pub constellation: Constellation,
    /// Received energy outside the column space of `H`; constant across candidates.
    pub c_const: f64,
}

impl DetectionProblem {
    pub fn new(
        r: CMatrix,
        y: CVector,
        sigma2: f64,
        priors: PriorStats,
        constellation: Constellation,
        c_const: f64,
    ) -> Result<Self, MetricError> {
        let n = r.cols();
        if r.rows() != n || y.len() != n || priors.num_streams() != n {
            return Err(MetricError::Shape(format!(
                "R is {}x{}, y has {}, priors cover {} streams",
                r.rows(),
                r.cols(),
                y.len(),
                priors.num_streams()
            )));
        }
        if !r.is_upper_triangular(1e-12 * r.frobenius_norm().max(1.0)) {
            return Err(MetricError::Shape("R must be upper triangular".into()));
        }
        if (0..n).any(|i| r[(i, i)].im.abs() > 1e-12 || r[(i, i)].re < 0.0) {
            return Err(MetricError::Shape("R must have a real non-negative diagonal".into()));
        }
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(MetricError::Param(format!("noise variance must be positive, got {sigma2}")));
        }
        Ok(Self {
            r,
            y,
            sigma2,
            priors,
            constellation,
            c_const,
        })
    }

    /// Triangularises `y_o = H x + n` with a thin QR; `priors` follow the columns of `h`.
    pub fn from_channel(
        h: &CMatrix,
        y_o: &[Complex64],
        sigma2: f64,
        priors: PriorStats,
        constellation: Constellation,
    ) -> Result<Self, MetricError> {
        if y_o.len() != h.rows() {
            return Err(MetricError::Shape(format!("y_o has {} entries, H has {} rows", y_o.len(), h.rows())));
        }
        let (q1, r) = numkit::qr_thin(h)?;
        let y = q1.adjoint_mul_vec(y_o);
        let c_const = (numkit::norm_sqr(y_o) - numkit::norm_sqr(&y)).max(0.0);
        Self::new(r, y, sigma2, priors, constellation, c_const)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.r.cols()
    }

    /// `xi(x_i) = -sigma2 * sum_j ln Pr(bit_j)` for symbol index `s` at position `i`.
    #[inline]
    pub fn prior_term(&self, i: usize, s: usize) -> f64 {
        let nlp = self.priors.neg_log_prior[i][s];
        if nlp == 0.0 {
            0.0
        } else {
            self.sigma2 * nlp
        }
    }

    #[inline]
    pub fn point(&self, s: usize) -> Complex64 {
        self.constellation.point(s)
    }

    /// Prior means with the given positions replaced by fixed symbols.
    fn residual_root(&self) -> CVector {
        let xbar = &self.priors.sym_mean;
        let rx = self.r.mul_vec(xbar);
        self.y.iter().zip(&rx).map(|(a, b)| a - b).collect()
    }
}

/// Branch metric at position `i` for the fixed tail `tail = [x_i, x_{i+1}, ..., x_{N-1}]`.
pub fn branch_metric(p: &DetectionProblem, i: usize, tail: &[usize]) -> f64 {
    let n = p.n();
    assert_eq!(tail.len(), n - i);
    let mut v = p.y[i];
    for (j, &s) in (i..n).zip(tail) {
        v -= p.r[(i, j)] * p.point(s);
    }
    v.norm_sqr() + p.prior_term(i, tail[0])
}

/// `||y - R x||^2 + sum_i xi(x_i)`; the full cost metric minus the constant `C`.
pub fn cost_metric(p: &DetectionProblem, x: &[usize]) -> f64 {
    let n = p.n();
    assert_eq!(x.len(), n);
    let pts: CVector = x.iter().map(|&s| p.point(s)).collect();
    let rx = p.r.mul_vec(&pts);
    let resid: f64 = p.y.iter().zip(&rx).map(|(a, b)| (a - b).norm_sqr()).sum();
    resid + (0..n).map(|i| p.prior_term(i, x[i])).sum::<f64>()
}

/// Log a posteriori weight `-||y_o - H x||^2 / sigma2 + sum ln Pr(bits)`.
pub fn psi(p: &DetectionProblem, x: &[usize]) -> f64 {
    -(cost_metric(p, x) + p.c_const) / p.sigma2
}

/// Partial path with its metric state.
#[derive(Debug, Clone, PartialEq)]
pub struct PathNode {
    /// Number of still-undecided leading positions.
    pub undecided: usize,
    /// Symbol indices; only `symbols[undecided..]` are meaningful.
    pub symbols: Vec<usize>,
    pub gamma_c: f64,
    pub gamma_b: f64,
    /// Residual on the undecided rows, length `undecided`.
    pub a: CVector,
}

impl PathNode {
    pub fn root(p: &DetectionProblem) -> Self {
        Self {
            undecided: p.n(),
            symbols: vec![0; p.n()],
            gamma_c: 0.0,
            gamma_b: 0.0,
            a: p.residual_root(),
        }
    }

    #[inline]
    pub fn gamma_l(&self) -> f64 {
        self.gamma_c + self.gamma_b
    }

    pub fn tail(&self) -> &[usize] {
        &self.symbols[self.undecided..]
    }
}

/// Causal metric of `node` extended by symbol `s` at position `node.undecided - 1`.
pub fn causal_metric_extend(p: &DetectionProblem, node: &PathNode, s: usize) -> f64 {
    let k = node.undecided - 1;
    let delta = p.point(s) - p.priors.sym_mean[k];
    let v = node.a[k] - p.r[(k, k)] * delta;
    node.gamma_c + v.norm_sqr() + p.prior_term(k, s)
}

/// Child node with residual, causal metric and (if `zs` is given) look-ahead bias.
pub fn lela_metric_extend(p: &DetectionProblem, node: &PathNode, s: usize, zs: Option<&ZSequence>) -> PathNode {
    assert!(node.undecided >= 1, "cannot extend a complete path");
    let k = node.undecided - 1;
    let delta = p.point(s) - p.priors.sym_mean[k];
    let a: CVector = (0..k).map(|row| node.a[row] - p.r[(row, k)] * delta).collect();
    let v = node.a[k] - p.r[(k, k)] * delta;
    let gamma_c = node.gamma_c + v.norm_sqr() + p.prior_term(k, s);
    let gamma_b = match zs {
        Some(zs) if zs.dim(k) > 0 => numkit::norm_sqr(&zs.z(k).mul_vec(&a[zs.window(k)])),
        _ => 0.0,
    };
    let mut symbols = node.symbols.clone();
    symbols[k] = s;
    PathNode {
        undecided: k,
        symbols,
        gamma_c,
        gamma_b,
        a,
    }
}

/// Look-ahead operators for every level.
///
/// Index `i` (0..N) is the number of undecided positions after a decision;
/// `Z_i` acts on the window `[i - d_i, i)` with `d_i = min(i, depth)`.
#[derive(Debug, Clone)]
pub struct ZSequence {
    depth: usize,
    mats: Vec<CMatrix>,
    leads: Vec<CVector>,
}

impl ZSequence {
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn levels(&self) -> usize {
        self.mats.len()
    }

    #[inline]
    pub fn dim(&self, i: usize) -> usize {
        self.mats[i].rows()
    }

    #[inline]
    pub fn window(&self, i: usize) -> Range<usize> {
        i - self.dim(i)..i
    }

    #[inline]
    pub fn z(&self, i: usize) -> &CMatrix {
        &self.mats[i]
    }

    /// `Z_i R[window, i]`, the per-level direction along which the candidate symbol moves the bias.
    #[inline]
    pub fn lead(&self, i: usize) -> &[Complex64] {
        &self.leads[i]
    }

    /// True when every level has an empty window (no look-ahead).
    pub fn is_causal(&self) -> bool {
        self.mats.iter().all(|m| m.rows() == 0)
    }
}

/// Grows `Z` by one dimension when column `(r_col, r_diag)` with variance `lambda` joins the window.
pub fn grow_z(z: &CMatrix, r_col: &[Complex64], r_diag: f64, lambda: f64, sigma2: f64) -> CMatrix {
    let d = z.rows();
    debug_assert_eq!(r_col.len(), d);
    let t = z.mul_vec(r_col);
    let g = numkit::dot(r_col, &t).re.max(0.0);
    let block_inverse_scalar = 1.0 / (lambda * (g + r_diag * r_diag) + sigma2);
    let kl = block_inverse_scalar * lambda;
    let mut out = CMatrix::zeros(d + 1, d + 1);
    for i in 0..d {
        for j in 0..d {
            out[(i, j)] = z[(i, j)] - kl * t[i] * t[j].conj();
        }
        let off = -kl * r_diag * t[i];
        out[(i, d)] = off;
        out[(d, i)] = off.conj();
    }
    out[(d, d)] = Complex64::new(block_inverse_scalar * (lambda * g + sigma2), 0.0);
    out
}

fn z_for_window(r: &CMatrix, lambda: &[f64], sigma2: f64, w: Range<usize>) -> CMatrix {
    let start = w.start;
    let mut z = CMatrix::zeros(0, 0);
    for c in w {
        let col: CVector = (start..c).map(|row| r[(row, c)]).collect();
        z = grow_z(&z, &col, r[(c, c)].re, lambda[c], sigma2);
    }
    z
}

/// Builds `Z_i` for all levels. `depth >= N - 1` gives the untruncated operators.
pub fn compute_z_sequence(r: &CMatrix, lambda: &[f64], sigma2: f64, depth: usize) -> ZSequence {
    let n = r.cols();
    assert_eq!(lambda.len(), n);
    let mut mats = Vec::with_capacity(n);
    if depth + 1 >= n {
        let mut z = CMatrix::zeros(0, 0);
        for i in 0..n {
            mats.push(z.clone());
            if i + 1 < n {
                let col: CVector = (0..i).map(|row| r[(row, i)]).collect();
                z = grow_z(&z, &col, r[(i, i)].re, lambda[i], sigma2);
            }
        }
    } else {
        for i in 0..n {
            let d = i.min(depth);
            mats.push(z_for_window(r, lambda, sigma2, i - d..i));
        }
    }
    let leads = (0..n)
        .map(|i| {
            let d = mats[i].rows();
            let col: CVector = (i - d..i).map(|row| r[(row, i)]).collect();
            mats[i].mul_vec(&col)
        })
        .collect();
    ZSequence { depth, mats, leads }
}

/// Sum of branch metrics for positions `fixed_from..N` of `symbols`.
pub fn causal_metric(p: &DetectionProblem, symbols: &[usize], fixed_from: usize) -> f64 {
    let n = p.n();
    (fixed_from..n).map(|i| branch_metric(p, i, &symbols[i..n])).sum()
}

/// Best completion of positions `0..undecided` given the fixed tail, by exhaustive
/// depth-first enumeration with branch-and-bound. Returns the added metric and the completion.
pub fn best_completion(
    p: &DetectionProblem,
    symbols: &[usize],
    undecided: usize,
) -> Result<(f64, Vec<usize>), MetricError> {
    let bits = undecided * p.constellation.bits_per_symbol();
    if bits > GENIE_MAX_BITS {
        return Err(MetricError::TooLarge {
            bits,
            limit: GENIE_MAX_BITS,
        });
    }
    let n = p.n();
    // residual of the undecided rows against the fixed tail
    let mut e: CVector = (0..undecided)
        .map(|row| {
            let mut v = p.y[row];
            for j in undecided..n {
                v -= p.r[(row, j)] * p.point(symbols[j]);
            }
            v
        })
        .collect();
    let mut best = (f64::INFINITY, vec![0; undecided]);
    let mut cur = vec![0; undecided];
    fn dfs(
        p: &DetectionProblem,
        pos: usize,
        e: &mut CVector,
        acc: f64,
        cur: &mut Vec<usize>,
        best: &mut (f64, Vec<usize>),
    ) {
        if pos == 0 {
            if acc < best.0 {
                *best = (acc, cur.clone());
            }
            return;
        }
        let k = pos - 1;
        for s in 0..p.constellation.size() {
            let x = p.point(s);
            let m = acc + (e[k] - p.r[(k, k)] * x).norm_sqr() + p.prior_term(k, s);
            if m >= best.0 {
                continue;
            }
            for row in 0..k {
                e[row] -= p.r[(row, k)] * x;
            }
            cur[k] = s;
            dfs(p, k, e, m, cur, best);
            for row in 0..k {
                e[row] += p.r[(row, k)] * x;
            }
        }
    }
    dfs(p, undecided, &mut e, 0.0, &mut cur, &mut best);
    if undecided == 0 {
        best.0 = 0.0;
    }
    Ok(best)
}

/// Causal metric plus the exact best completion of the undecided positions.
pub fn genie_metric(p: &DetectionProblem, symbols: &[usize], undecided: usize) -> Result<f64, MetricError> {
    Ok(causal_metric(p, symbols, undecided) + best_completion(p, symbols, undecided)?.0)
}
