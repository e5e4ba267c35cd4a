//! Correct-path-loss (CPL) analysis of the M-algorithm under the causal and
//! look-ahead path metrics.
//!
//! Levels are 1-based here: level `k` decides position `k - 1` and looks ahead
//! over positions `0..k-1`. The top level `k = N` is decided first.

mod cpl_sim;

pub use cpl_sim::{simulate_cpl, CplSimConfig, CplSimResult};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comms::complex_gaussian;
use crate::numkit::{self, CMatrix, CVector, LinalgError};
use crate::par::{self, Execution};
use crate::pathmetric::MetricError;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

fn param(msg: impl Into<String>) -> AnalysisError {
    AnalysisError::Param(msg.into())
}

/// `3 / (2^Q - 1)`, the minimum-distance scale of square QAM at unit energy.
pub fn qam_gap_constant(q: usize) -> f64 {
    3.0 / ((1u64 << q) as f64 - 1.0)
}

/// Nearest-neighbour multiplicity `4 (1 - 2^{-Q/2})` of square QAM.
pub fn cpl_prefactor(q: usize) -> f64 {
    4.0 * (1.0 - 1.0 / ((1u64 << q) as f64).sqrt())
}

/// Gaussian tail `Q(x)`; via `erfc`, relative error near 1e-15 up to `x = 37`.
pub fn gaussian_q(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// One level of the tree seen as a scalar channel.
#[derive(Debug, Clone)]
pub struct LevelContext {
    pub k: usize,
    /// Column `k` of `R` above the diagonal (length `k - 1`).
    pub r_k: CVector,
    pub r_kk: f64,
    /// Leading `(k-1) x (k-1)` block of `R`.
    pub r11: CMatrix,
    /// `R11 Lambda R11^H + sigma2 I`.
    pub sigma: CMatrix,
    pub sigma2: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl LevelContext {
    /// `lambda` holds the prior variances of positions `0..k-1`.
    pub fn new(r11: CMatrix, r_k: CVector, r_kk: f64, lambda: &[f64], sigma2: f64) -> Result<Self, AnalysisError> {
        let d = r_k.len();
        if r11.rows() != d || r11.cols() != d || lambda.len() != d {
            return Err(param(format!(
                "level context: r11 is {}x{}, r_k has {d} entries, lambda has {}",
                r11.rows(),
                r11.cols(),
                lambda.len()
            )));
        }
        if !(sigma2 > 0.0) || lambda.iter().any(|&l| !(l >= 0.0)) {
            return Err(param("sigma2 must be positive and lambda non-negative"));
        }
        let sigma = r11.matmul(&CMatrix::from_diag(lambda)).matmul(&r11.adjoint()).add_diag(sigma2);
        let (lambda_min, lambda_max) = if d == 0 {
            (1.0, 1.0)
        } else {
            lambda.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &l| (lo.min(l), hi.max(l)))
        };
        Ok(Self {
            k: d + 1,
            r_k,
            r_kk,
            r11,
            sigma,
            sigma2,
            lambda_min,
            lambda_max,
        })
    }

    /// Level `k` (1-based) of an upper-triangular `R`.
    pub fn from_r(r: &CMatrix, k: usize, lambda: &[f64], sigma2: f64) -> Result<Self, AnalysisError> {
        if k == 0 || k > r.cols() || k > r.rows() {
            return Err(param(format!("level {k} outside 1..={}", r.cols().min(r.rows()))));
        }
        let d = k - 1;
        let r11 = r.block(0, d, 0, d);
        let r_k: CVector = (0..d).map(|i| r[(i, d)]).collect();
        Self::new(r11, r_k, r[(d, d)].re, &lambda[..d], sigma2)
    }

    /// `Sigma^{-1} r`, `Sigma^{-2} r`.
    fn solves(&self) -> Result<(CVector, CVector), AnalysisError> {
        let w1 = numkit::hermitian_solve_vec(&self.sigma, &self.r_k)?;
        let w2 = numkit::hermitian_solve_vec(&self.sigma, &w1)?;
        Ok((w1, w2))
    }

    fn causal_part(&self) -> f64 {
        self.r_kk * self.r_kk / self.sigma2
    }
}

/// SINR of the look-ahead scalar channel.
pub fn sinr_lela(ctx: &LevelContext) -> Result<f64, AnalysisError> {
    if ctx.r_k.is_empty() {
        return Ok(ctx.causal_part());
    }
    let s2 = ctx.sigma2;
    let c = ctx.r_kk * ctx.r_kk;
    let (w1, w2) = ctx.solves()?;
    let quad2 = numkit::norm_sqr(&w1);
    let quad3 = numkit::dot(&w1, &w2).re;
    let num = s2 * s2 * quad2 + c;
    Ok(num * num / (s2 * (s2 * s2 * s2 * quad3 + c)))
}

/// SINR of the causal metric, `|r_kk|^2 / sigma2`.
pub fn sinr_causal(ctx: &LevelContext) -> f64 {
    ctx.causal_part()
}

/// `(lower, upper)` bounds on [`sinr_lela`].
pub fn sinr_bounds(ctx: &LevelContext) -> Result<(f64, f64), AnalysisError> {
    if ctx.r_k.is_empty() {
        let c = ctx.causal_part();
        return Ok((c, c));
    }
    let w1 = numkit::hermitian_solve_vec(&ctx.sigma, &ctx.r_k)?;
    let lower = ctx.sigma2 * numkit::norm_sqr(&w1) + ctx.causal_part();
    let upper = numkit::dot(&ctx.r_k, &w1).re + ctx.causal_part();
    Ok((lower, upper))
}

/// Prior-free bounds on the SINR gain that only use the extreme prior variances:
/// `B_upper = r^H (sigma2 I + lmin R11 R11^H)^-1 r` and
/// `B_lower = sigma2 r^H (sigma2 I + lmax R11 R11^H)^-2 r`.
pub fn gain_bounds(ctx: &LevelContext) -> Result<(f64, f64), AnalysisError> {
    if ctx.r_k.is_empty() {
        return Ok((0.0, 0.0));
    }
    let gram = ctx.r11.matmul(&ctx.r11.adjoint());
    let b = gram.scale(ctx.lambda_min).add_diag(ctx.sigma2);
    let a = gram.scale(ctx.lambda_max).add_diag(ctx.sigma2);
    let wu = numkit::hermitian_solve_vec(&b, &ctx.r_k)?;
    let wl = numkit::hermitian_solve_vec(&a, &ctx.r_k)?;
    Ok((numkit::dot(&ctx.r_k, &wu).re, ctx.sigma2 * numkit::norm_sqr(&wl)))
}

/// `G(x, b) = sqrt(1 + 2 (1 + b) x + (1 - b)^2 x^2)`.
pub fn g_function(x: f64, b: f64) -> f64 {
    (1.0 + 2.0 * (1.0 + b) * x + (1.0 - b) * (1.0 - b) * x * x).sqrt()
}

/// Large-system regime: `beta = N / L` and level `k = gamma N + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticParams {
    pub beta: f64,
    pub gamma: f64,
}

impl AsymptoticParams {
    pub fn new(beta: f64, gamma: f64) -> Result<Self, AnalysisError> {
        if !(beta > 0.0 && beta <= 1.0) || !(gamma > 0.0 && gamma < 1.0) {
            return Err(param(format!("need 0 < beta <= 1 and 0 < gamma < 1, got beta={beta} gamma={gamma}")));
        }
        Ok(Self { beta, gamma })
    }

    pub fn load(&self) -> f64 {
        self.beta * self.gamma
    }
}

/// Limits `(B_upper, B_lower)` of [`gain_bounds`] as `N, L -> inf` for a channel
/// with i.i.d. entries of variance `1 / L`.
pub fn asymptotic_bounds(p: AsymptoticParams, lambda_min: f64, lambda_max: f64, sigma2: f64) -> (f64, f64) {
    let c = p.load();
    let xu = lambda_min / sigma2;
    let upper = if lambda_min > 0.0 {
        // G - (1 + (1-c) x) = 4 c x / (G + 1 + (1-c) x), free of cancellation at large x
        let t = 1.0 + (1.0 - c) * xu;
        4.0 * c * xu / (g_function(xu, c) + t) / (2.0 * lambda_min)
    } else {
        c / sigma2
    };
    let xl = lambda_max / sigma2;
    let lower = (-(1.0 - c) + (1.0 + c + (1.0 - c) * (1.0 - c) * xl) / g_function(xl, c)) / (2.0 * sigma2);
    (upper, lower)
}

/// High-SNR limit of the asymptotic upper bound, `lmin c / (1 - c)`.
pub fn asymptotic_upper_limit(p: AsymptoticParams, lambda_min: f64) -> f64 {
    let c = p.load();
    lambda_min * c / (1.0 - c)
}

/// Support `[(1 - sqrt c)^2, (1 + sqrt c)^2]` of the Marchenko-Pastur law with ratio `c`.
pub fn marchenko_pastur_support(ratio: f64) -> (f64, f64) {
    let s = ratio.sqrt();
    ((1.0 - s) * (1.0 - s), (1.0 + s) * (1.0 + s))
}

/// Limiting eigenvalue density of `H^H H` for an `L x m` matrix with variance-`1/L`
/// entries and `m / L -> ratio <= 1`.
pub fn marchenko_pastur_density(x: f64, ratio: f64) -> f64 {
    let (a, b) = marchenko_pastur_support(ratio);
    if x <= 0.0 {
        return 0.0;
    }
    ((x - a).max(0.0) * (b - x).max(0.0)).sqrt() / (2.0 * std::f64::consts::PI * ratio * x)
}

/// `int f(x) mp(x) dx` over the support, with the substitution
/// `x = a + (b - a)(1 - cos t) / 2` that removes the square-root endpoints.
pub fn marchenko_pastur_integral(ratio: f64, f: impl Fn(f64) -> f64, nodes: usize) -> f64 {
    let (a, b) = marchenko_pastur_support(ratio);
    let half = 0.5 * (b - a);
    let h = std::f64::consts::PI / nodes as f64;
    // the transformed integrand is smooth and even in t, so the midpoint rule converges spectrally
    (0..nodes)
        .map(|i| {
            let t = (i as f64 + 0.5) * h;
            let x = a + half * (1.0 - t.cos());
            let s = half * t.sin();
            f(x) * s * s / (2.0 * std::f64::consts::PI * ratio * x)
        })
        .sum::<f64>()
        * h
}

fn ln_factorial(n: usize) -> f64 {
    libm::lgamma(n as f64 + 1.0)
}

/// Joint density of the unordered eigenvalues of `H^H H`, `H` being `L x m`
/// with i.i.d. CN(0, 1) entries and `m = x.len() <= L`.
pub fn wishart_eigen_pdf(x: &[f64], l: usize) -> f64 {
    let m = x.len();
    assert!(m >= 1 && m <= l, "need 1 <= m <= L");
    if x.iter().any(|&v| v < 0.0) {
        return 0.0;
    }
    let mut ln = -ln_factorial(m);
    for (i, &v) in x.iter().enumerate() {
        let i1 = i + 1;
        ln += -v + (l - m) as f64 * v.ln() - ln_factorial(m - i1) - ln_factorial(l - i1);
    }
    let mut vdm = 1.0;
    for i in 0..m {
        for j in i + 1..m {
            vdm *= (x[i] - x[j]) * (x[i] - x[j]);
        }
    }
    ln.exp() * vdm
}

/// CPL bound of one level for QAM with the exact look-ahead SINR.
pub fn cpl_level_exact(ctx: &LevelContext, q: usize) -> Result<f64, AnalysisError> {
    Ok(cpl_prefactor(q) * gaussian_q((qam_gap_constant(q) * sinr_lela(ctx)?).sqrt()))
}

/// CPL bound of one level with the SINR replaced by its lower bound.
pub fn cpl_level_bound(ctx: &LevelContext, q: usize) -> Result<f64, AnalysisError> {
    let (lower, _) = sinr_bounds(ctx)?;
    Ok(cpl_prefactor(q) * gaussian_q((qam_gap_constant(q) * lower).sqrt()))
}

/// CPL bound of one level for the causal metric.
pub fn cpl_level_causal(ctx: &LevelContext, q: usize) -> f64 {
    cpl_prefactor(q) * gaussian_q((qam_gap_constant(q) * sinr_causal(ctx)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CplTotal {
    /// `1 - prod (1 - p_k)`.
    pub total: f64,
    /// `sum p_k`.
    pub first_order: f64,
}

pub fn cpl_total(per_level: &[f64]) -> CplTotal {
    let survive: f64 = per_level.iter().map(|p| 1.0 - p.clamp(0.0, 1.0)).product();
    CplTotal {
        total: 1.0 - survive,
        first_order: per_level.iter().sum(),
    }
}

/// `E[Q(sqrt(K |r_kk|^2 / sigma2))]` with `|r_kk|^2 ~ Gamma(L - k + 1, 1)`.
pub fn chi_square_q_average(l: usize, k: usize, q: usize, sigma2: f64) -> f64 {
    assert!(k >= 1 && k <= l, "need 1 <= k <= L");
    let kq = qam_gap_constant(q);
    let s = (kq / (kq + 2.0 * sigma2)).sqrt();
    let lo = 0.5 - 0.5 * s;
    let hi = 0.5 + 0.5 * s;
    if lo <= 0.0 {
        return 0.0;
    }
    let m = l - k;
    let base = (m + 1) as f64 * lo.ln();
    (0..=m)
        .map(|j| {
            let ln_binom = ln_factorial(m + j) - ln_factorial(j) - ln_factorial(m);
            (base + ln_binom + j as f64 * hi.ln()).exp()
        })
        .sum()
}

/// Monte-Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub samples: usize,
    /// Set when the standard error exceeds half a unit in the third significant digit.
    pub unstable: bool,
}

impl McEstimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n.max(1) as f64;
        let var = if n > 1 {
            xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64
        } else {
            f64::INFINITY
        };
        let std_err = (var / n.max(1) as f64).sqrt();
        Self {
            mean,
            std_err,
            samples: n,
            unstable: !(std_err <= 5e-4 * mean.abs()),
        }
    }
}

const MC_BLOCK: usize = 256;

/// Draws `samples` values of `f` in deterministic blocks, each with its own stream.
fn mc_blocks<F>(samples: usize, seed: u64, exec: Execution, f: F) -> Result<Vec<f64>, AnalysisError>
where
    F: Fn(&mut rng::SimRng) -> Result<f64, AnalysisError> + Sync + Send,
{
    let blocks = samples.div_ceil(MC_BLOCK);
    let parts = par::map_indexed(blocks, exec, |b| {
        let mut r = rng::stream(seed, &[b as u64]);
        let len = MC_BLOCK.min(samples - b * MC_BLOCK);
        (0..len).map(|_| f(&mut r)).collect::<Result<Vec<f64>, _>>()
    });
    let mut out = Vec::with_capacity(samples);
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

fn gaussian_matrix<R: Rng + ?Sized>(r: &mut R, rows: usize, cols: usize, var: f64) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| complex_gaussian(r, var))
}

/// Upper bound on the look-ahead scaling gain at level `k`:
/// `E[prod_i 1 / (1 + (K/2) sigma2 / (lmax eta_i + sigma2)^2)]` over the
/// eigenvalues `eta_i` of `H^H H`, `H` being `L x (k-1)` with CN(0, 1) entries.
#[allow(clippy::too_many_arguments)]
pub fn scaling_gain(
    l: usize,
    k: usize,
    q: usize,
    sigma2: f64,
    lambda_max: f64,
    mc_samples: usize,
    seed: u64,
    exec: Execution,
) -> Result<McEstimate, AnalysisError> {
    if k < 2 || k > l {
        return Err(param(format!("scaling gain needs 2 <= k <= L, got k={k} L={l}")));
    }
    if mc_samples < 2 || !(sigma2 > 0.0) || !(lambda_max >= 0.0) {
        return Err(param("scaling gain needs mc_samples >= 2, sigma2 > 0, lambda_max >= 0"));
    }
    let half_k = 0.5 * qam_gap_constant(q);
    let xs = mc_blocks(mc_samples, seed, exec, |r| {
        let h = gaussian_matrix(r, l, k - 1, 1.0);
        let eta = numkit::hermitian_eigenvalues(&h.adjoint().matmul(&h))?;
        Ok(eta
            .iter()
            .map(|&e| {
                let d = lambda_max * e.max(0.0) + sigma2;
                1.0 / (1.0 + half_k * sigma2 / (d * d))
            })
            .product())
    })?;
    Ok(McEstimate::from_samples(&xs))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DominantCpl {
    pub lela_bound: f64,
    pub causal_bound: f64,
    pub scaling_gain: McEstimate,
}

impl DominantCpl {
    /// Monte-Carlo standard error of `lela_bound`.
    pub fn lela_std_err(&self) -> f64 {
        self.causal_bound * self.scaling_gain.std_err
    }
}

/// Top-level (`k = N`) approximation of the average CPL probability for both metrics.
#[allow(clippy::too_many_arguments)]
pub fn avg_cpl_dominant(
    l: usize,
    n: usize,
    q: usize,
    sigma2: f64,
    lambda_max: f64,
    mc_samples: usize,
    seed: u64,
    exec: Execution,
) -> Result<DominantCpl, AnalysisError> {
    if n < 2 || n > l {
        return Err(param(format!("need 2 <= N <= L, got N={n} L={l}")));
    }
    let causal_bound = cpl_prefactor(q) * chi_square_q_average(l, n, q, sigma2);
    let gain = scaling_gain(l, n, q, sigma2, lambda_max, mc_samples, seed, exec)?;
    Ok(DominantCpl {
        lela_bound: causal_bound * gain.mean,
        causal_bound,
        scaling_gain: gain,
    })
}

/// Monte-Carlo `(B_upper, B_lower)` of [`gain_bounds`] at level `k` over `L x N`
/// channels with variance-`1/L` entries and uniform prior variance `lambda`.
#[allow(clippy::too_many_arguments)]
pub fn sample_gain_bounds(
    n: usize,
    l: usize,
    k: usize,
    lambda: f64,
    sigma2: f64,
    channels: usize,
    seed: u64,
    exec: Execution,
) -> Result<(McEstimate, McEstimate), AnalysisError> {
    if k < 2 || k > n || n > l {
        return Err(param(format!("need 2 <= k <= N <= L, got k={k} N={n} L={l}")));
    }
    let per = par::map_indexed(channels, exec, |c| -> Result<(f64, f64), AnalysisError> {
        let mut r = rng::stream(seed, &[c as u64]);
        // only the first k columns influence level k
        let h = gaussian_matrix(&mut r, l, k, 1.0 / l as f64);
        let (_, rr) = numkit::qr_thin(&h)?;
        let ctx = LevelContext::from_r(&rr, k, &vec![lambda; k - 1], sigma2)?;
        gain_bounds(&ctx)
    });
    let mut up = Vec::with_capacity(channels);
    let mut lo = Vec::with_capacity(channels);
    for p in per {
        let (u, v) = p?;
        up.push(u);
        lo.push(v);
    }
    Ok((McEstimate::from_samples(&up), McEstimate::from_samples(&lo)))
}

#[cfg(test)]
mod tests;
