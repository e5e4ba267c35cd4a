//! Transmit chain and channel: RSC encoder, random interleaver, gray-mapped
//! square QAM, i.i.d. / Kronecker-correlated Rayleigh channels and AWGN.
//!
//! Bits are `u8` values in `{0, 1}`. Throughout the crate logical `1` maps to
//! the antipodal value `+1` and to a positive LLR.

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numkit::{self, CMatrix, CVector};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CommsError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("channel model error: {0}")]
    Model(String),
    #[error("parameter error: {0}")]
    Param(String),
}

/// Square `2^Q`-ary QAM with independent binary-reflected gray coding per axis.
///
/// Symbol index `s` *is* its `Q`-bit label, most significant bit first. The
/// first `Q/2` bits select the in-phase amplitude, the remaining `Q/2` the
/// quadrature amplitude.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    bits_per_symbol: usize,
    points: Vec<Complex64>,
    normalizer: f64,
}

fn gray_decode(mut g: usize) -> usize {
    let mut b = g;
    while g > 0 {
        g >>= 1;
        b ^= g;
    }
    b
}

impl Constellation {
    /// `bits_per_symbol` must be even and between 2 and 12.
    pub fn new(bits_per_symbol: usize) -> Result<Self, CommsError> {
        if bits_per_symbol == 0 || !bits_per_symbol.is_multiple_of(2) || bits_per_symbol > 12 {
            return Err(CommsError::Param(format!(
                "bits_per_symbol must be even in [2, 12], got {bits_per_symbol}"
            )));
        }
        let half = bits_per_symbol / 2;
        let m = 1usize << half;
        let normalizer = (2.0 * ((m * m) as f64 - 1.0) / 3.0).sqrt();
        let amp = |g: usize| (2.0 * gray_decode(g) as f64 - (m as f64 - 1.0)) / normalizer;
        let points = (0..1usize << bits_per_symbol)
            .map(|s| Complex64::new(amp(s >> half), amp(s & (m - 1))))
            .collect();
        Ok(Self {
            bits_per_symbol,
            points,
            normalizer,
        })
    }

    pub fn qpsk() -> Self {
        Self::new(2).expect("valid order")
    }

    pub fn qam16() -> Self {
        Self::new(4).expect("valid order")
    }

    pub fn qam64() -> Self {
        Self::new(6).expect("valid order")
    }

    #[inline]
    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.points.len()
    }

    /// `P` such that the odd-integer grid divided by `P` has unit average energy.
    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    #[inline]
    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    #[inline]
    pub fn point(&self, index: usize) -> Complex64 {
        self.points[index]
    }

    /// Bit `j` (0 = MSB) of symbol `index`.
    #[inline]
    pub fn bit(&self, index: usize, j: usize) -> u8 {
        ((index >> (self.bits_per_symbol - 1 - j)) & 1) as u8
    }

    /// Antipodal value (`+1` for logical one) of bit `j` of symbol `index`.
    #[inline]
    pub fn bit_sign(&self, index: usize, j: usize) -> f64 {
        if self.bit(index, j) == 1 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn index_of_bits(&self, bits: &[u8]) -> usize {
        debug_assert_eq!(bits.len(), self.bits_per_symbol);
        bits.iter().fold(0, |acc, &b| (acc << 1) | (b as usize & 1))
    }

    /// Nearest constellation point (per-axis slicing).
    pub fn slice(&self, z: Complex64) -> usize {
        (0..self.size())
            .min_by(|&a, &b| (z - self.points[a]).norm_sqr().total_cmp(&(z - self.points[b]).norm_sqr()))
            .unwrap_or(0)
    }
}

/// Maps a bit sequence to symbol indices.
pub fn qam_map_indices(bits: &[u8], c: &Constellation) -> Result<Vec<usize>, CommsError> {
    let q = c.bits_per_symbol();
    if !bits.len().is_multiple_of(q) {
        return Err(CommsError::Shape(format!(
            "bit count {} not divisible by bits per symbol {q}",
            bits.len()
        )));
    }
    Ok(bits.chunks(q).map(|ch| c.index_of_bits(ch)).collect())
}

/// Maps a bit sequence to constellation points.
pub fn qam_map(bits: &[u8], c: &Constellation) -> Result<CVector, CommsError> {
    Ok(qam_map_indices(bits, c)?.into_iter().map(|s| c.point(s)).collect())
}

/// Rate-1/2 recursive systematic convolutional code with feedback `1 + D + D^2`
/// and feedforward `1 + D^2`, memory 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RscCode;

impl RscCode {
    pub const FEEDBACK_OCTAL: u8 = 0o7;
    pub const FEEDFORWARD_OCTAL: u8 = 0o5;
    pub const MEMORY: usize = 2;
    pub const NUM_STATES: usize = 4;

    /// One encoder step. State packs `(d[t-1] << 1) | d[t-2]`.
    /// Returns `(next_state, parity)`; the systematic output equals `input`.
    #[inline]
    pub fn step(state: usize, input: u8) -> (usize, u8) {
        let s1 = ((state >> 1) & 1) as u8;
        let s2 = (state & 1) as u8;
        let d = input ^ s1 ^ s2;
        let parity = d ^ s2;
        (((d as usize) << 1) | s1 as usize, parity)
    }

    /// Encodes from the zero state without termination. Output is `[u0, p0, u1, p1, ...]`.
    pub fn encode(&self, info: &[u8]) -> Vec<u8> {
        let mut out = Vec::with_capacity(2 * info.len());
        let mut state = 0;
        for &u in info {
            let (next, p) = Self::step(state, u & 1);
            out.push(u & 1);
            out.push(p);
            state = next;
        }
        out
    }
}

/// Convenience wrapper around [`RscCode::encode`].
pub fn rsc_encode(info: &[u8]) -> Vec<u8> {
    RscCode.encode(info)
}

/// Random block interleaver. `interleave(x)[i] = x[perm[i]]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interleaver {
    perm: Vec<usize>,
}

impl Interleaver {
    pub fn random<R: Rng + ?Sized>(size: usize, rng: &mut R) -> Self {
        let mut perm: Vec<usize> = (0..size).collect();
        perm.shuffle(rng);
        Self { perm }
    }

    pub fn from_permutation(perm: Vec<usize>) -> Result<Self, CommsError> {
        let mut seen = vec![false; perm.len()];
        for &p in &perm {
            if p >= perm.len() || std::mem::replace(&mut seen[p], true) {
                return Err(CommsError::Param("interleaver permutation is not a bijection".into()));
            }
        }
        Ok(Self { perm })
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    pub fn interleave<T: Copy>(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.perm.len());
        self.perm.iter().map(|&p| x[p]).collect()
    }

    pub fn deinterleave<T: Copy + Default>(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.perm.len());
        let mut out = vec![T::default(); x.len()];
        for (i, &p) in self.perm.iter().enumerate() {
            out[p] = x[i];
        }
        out
    }
}

/// Serializable description of a channel model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChannelSpec {
    #[default]
    Iid,
    /// Exponential correlation `rho^|i-j|` at both ends.
    Kronecker { rho_tx: f64, rho_rx: f64 },
}

/// Rayleigh channel generator, optionally with Kronecker spatial correlation.
#[derive(Debug, Clone)]
pub struct ChannelModel {
    rx: usize,
    tx: usize,
    /// `R_r^{1/2}` and `R_t^{1/2}`; `None` stands for the identity.
    rx_sqrt: Option<CMatrix>,
    tx_sqrt: Option<CMatrix>,
}

/// `rho^|i-j|` correlation matrix.
pub fn exponential_correlation(n: usize, rho: f64) -> CMatrix {
    CMatrix::from_fn(n, n, |i, j| Complex64::new(rho.powi((i as i32 - j as i32).abs()), 0.0))
}

fn is_identity(m: &CMatrix) -> bool {
    m.max_abs_diff(&CMatrix::identity(m.rows())) == 0.0
}

fn correlation_sqrt(name: &str, m: &CMatrix, n: usize) -> Result<Option<CMatrix>, CommsError> {
    if m.rows() != n || m.cols() != n {
        return Err(CommsError::Model(format!("{name} must be {n}x{n}")));
    }
    if m.max_abs_diff(&m.adjoint()) > 1e-12 {
        return Err(CommsError::Model(format!("{name} is not hermitian")));
    }
    if (0..n).any(|i| (m[(i, i)] - Complex64::new(1.0, 0.0)).norm() > 1e-12) {
        return Err(CommsError::Model(format!("{name} must have unit diagonal")));
    }
    if is_identity(m) {
        return Ok(None);
    }
    let ev = numkit::hermitian_eigenvalues(m).map_err(|e| CommsError::Model(format!("{name}: {e}")))?;
    if ev[0] < -1e-12 {
        return Err(CommsError::Model(format!("{name} is not positive semi-definite")));
    }
    numkit::hermitian_sqrt(m)
        .map(Some)
        .map_err(|e| CommsError::Model(format!("{name} square root: {e}")))
}

impl ChannelModel {
    pub fn iid(rx: usize, tx: usize) -> Self {
        Self {
            rx,
            tx,
            rx_sqrt: None,
            tx_sqrt: None,
        }
    }

    /// `H = R_r^{1/2} H_iid R_t^{1/2}` with hermitian square roots.
    pub fn kronecker(r_rx: &CMatrix, r_tx: &CMatrix) -> Result<Self, CommsError> {
        let rx = r_rx.rows();
        let tx = r_tx.rows();
        Ok(Self {
            rx,
            tx,
            rx_sqrt: correlation_sqrt("R_r", r_rx, rx)?,
            tx_sqrt: correlation_sqrt("R_t", r_tx, tx)?,
        })
    }

    pub fn from_spec(spec: &ChannelSpec, rx: usize, tx: usize) -> Result<Self, CommsError> {
        match *spec {
            ChannelSpec::Iid => Ok(Self::iid(rx, tx)),
            ChannelSpec::Kronecker { rho_tx, rho_rx } => {
                if !(0.0..1.0).contains(&rho_tx.abs()) || !(0.0..1.0).contains(&rho_rx.abs()) {
                    return Err(CommsError::Model("correlation coefficients must satisfy |rho| < 1".into()));
                }
                Self::kronecker(&exponential_correlation(rx, rho_rx), &exponential_correlation(tx, rho_tx))
            }
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rx, self.tx)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> CMatrix {
        let h = CMatrix::from_fn(self.rx, self.tx, |_, _| complex_gaussian(rng, 1.0));
        let h = match &self.rx_sqrt {
            Some(s) => s.matmul(&h),
            None => h,
        };
        match &self.tx_sqrt {
            Some(s) => h.matmul(s),
            None => h,
        }
    }
}

/// Draws a matrix from `model`.
pub fn sample_channel<R: Rng + ?Sized>(model: &ChannelModel, rng: &mut R) -> CMatrix {
    model.sample(rng)
}

/// Circular complex Gaussian with total variance `var`.
#[inline]
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let s = (0.5 * var).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * s, im * s)
}

/// Adds `CN(0, sigma2)` noise to every entry.
pub fn add_awgn<R: Rng + ?Sized>(y: &[Complex64], sigma2: f64, rng: &mut R) -> Result<CVector, CommsError> {
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(CommsError::Param(format!("noise variance must be positive and finite, got {sigma2}")));
    }
    Ok(y.iter().map(|&v| v + complex_gaussian(rng, sigma2)).collect())
}

/// Noise variance for `SNR = 10 log10(N / sigma2)` with `N` transmit streams.
pub fn sigma2_from_snr_db(snr_db: f64, tx: usize) -> f64 {
    tx as f64 / 10f64.powf(snr_db / 10.0)
}

pub fn random_bits<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<u8> {
    (0..n).map(|_| rng.random::<bool>() as u8).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn constellation_energy_and_normalizer() {
        for (q, p) in [(2usize, 2f64.sqrt()), (4, 10f64.sqrt()), (6, 42f64.sqrt())] {
            let c = Constellation::new(q).unwrap();
            assert!((c.normalizer() - p).abs() < 1e-12);
            let e: f64 = c.points().iter().map(|z| z.norm_sqr()).sum::<f64>() / c.size() as f64;
            assert!((e - 1.0).abs() < 1e-12);
            let m = 1i64 << (q / 2);
            for z in c.points() {
                for v in [z.re * p, z.im * p] {
                    let k = v.round() as i64;
                    assert!((v - k as f64).abs() < 1e-9 && k % 2 != 0 && k.abs() < m);
                }
            }
        }
    }

    #[test]
    fn qpsk_alphabet() {
        let c = Constellation::qpsk();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        for z in c.points() {
            assert!((z.re.abs() - s).abs() < 1e-15 && (z.im.abs() - s).abs() < 1e-15);
        }
        // bit 0 -> real sign, bit 1 -> imaginary sign
        assert!(c.point(0b10).re > 0.0 && c.point(0b10).im < 0.0);
    }

    #[test]
    fn gray_property_per_axis() {
        for q in [2usize, 4, 6] {
            let c = Constellation::new(q).unwrap();
            for a in 0..c.size() {
                for b in 0..c.size() {
                    let (za, zb) = (c.point(a), c.point(b));
                    let step = 2.0 / c.normalizer();
                    let same_im = (za.im - zb.im).abs() < 1e-12;
                    let adj_re = ((za.re - zb.re).abs() - step).abs() < 1e-12;
                    let same_re = (za.re - zb.re).abs() < 1e-12;
                    let adj_im = ((za.im - zb.im).abs() - step).abs() < 1e-12;
                    if (same_im && adj_re) || (same_re && adj_im) {
                        assert_eq!((a ^ b).count_ones(), 1, "q={q} a={a} b={b}");
                    }
                }
            }
        }
    }

    #[test]
    fn map_rejects_partial_symbols() {
        assert!(matches!(qam_map(&[1, 0, 1], &Constellation::qpsk()), Err(CommsError::Shape(_))));
        assert_eq!(qam_map(&[1, 0, 1, 1], &Constellation::qpsk()).unwrap().len(), 2);
    }

    #[test]
    fn rsc_zero_and_length() {
        assert_eq!(rsc_encode(&[0; 8]), vec![0; 16]);
        let mut r = rng::stream(3, &[]);
        for n in [1usize, 7, 100] {
            let bits = random_bits(n, &mut r);
            let out = rsc_encode(&bits);
            assert_eq!(out.len(), 2 * n);
            assert_eq!(out, rsc_encode(&bits));
        }
    }

    /// Parity must equal the GF(2) series expansion of `(1 + D^2) / (1 + D + D^2)` convolved with the input.
    #[test]
    fn rsc_matches_polynomial_division() {
        let len = 40;
        // 1 / (1 + D + D^2) by long division
        let mut inv = vec![0u8; len];
        for n in 0..len {
            let mut v = if n == 0 { 1 } else { 0 };
            if n >= 1 {
                v ^= inv[n - 1];
            }
            if n >= 2 {
                v ^= inv[n - 2];
            }
            inv[n] = v;
        }
        let transfer: Vec<u8> = (0..len).map(|n| inv[n] ^ if n >= 2 { inv[n - 2] } else { 0 }).collect();
        assert_eq!(&transfer[..5], &[1, 1, 1, 0, 1]);
        let out = rsc_encode(&[1, 0, 0, 0, 0]);
        let sys: Vec<u8> = out.iter().step_by(2).copied().collect();
        let par: Vec<u8> = out.iter().skip(1).step_by(2).copied().collect();
        assert_eq!(sys, vec![1, 0, 0, 0, 0]);
        assert_eq!(par, vec![1, 1, 1, 0, 1]);

        let mut r = rng::stream(9, &[]);
        let u = random_bits(len, &mut r);
        let par: Vec<u8> = rsc_encode(&u).iter().skip(1).step_by(2).copied().collect();
        for n in 0..len {
            let conv = (0..=n).fold(0u8, |acc, m| acc ^ (u[m] & transfer[n - m]));
            assert_eq!(par[n], conv);
        }
    }

    #[test]
    fn interleaver_roundtrip() {
        for seed in 0..5 {
            let mut r = rng::stream(seed, &[]);
            let il = Interleaver::random(257, &mut r);
            let x: Vec<u32> = (0..257).collect();
            assert_eq!(il.deinterleave(&il.interleave(&x)), x);
            assert_eq!(il.interleave(&il.deinterleave(&x)), x);
        }
        assert!(Interleaver::from_permutation(vec![0, 0, 1]).is_err());
    }

    #[test]
    fn iid_channel_moments() {
        let model = ChannelModel::iid(4, 4);
        let mut r = rng::stream(5, &[]);
        let n = 100_000;
        let mut sum = [[Complex64::new(0.0, 0.0); 4]; 4];
        let mut sq = [[0.0f64; 4]; 4];
        for _ in 0..n {
            let h = model.sample(&mut r);
            for i in 0..4 {
                for j in 0..4 {
                    sum[i][j] += h[(i, j)];
                    sq[i][j] += h[(i, j)].norm_sqr();
                }
            }
        }
        for i in 0..4 {
            for j in 0..4 {
                let mean = sum[i][j] / n as f64;
                assert!(mean.re.abs() < 0.02 && mean.im.abs() < 0.02);
                assert!((sq[i][j] / n as f64 - 1.0).abs() < 0.05);
            }
        }
    }

    #[test]
    fn kronecker_identity_equals_iid() {
        let k = ChannelModel::kronecker(&CMatrix::identity(3), &CMatrix::identity(2)).unwrap();
        let i = ChannelModel::iid(3, 2);
        let a = k.sample(&mut rng::stream(11, &[]));
        let b = i.sample(&mut rng::stream(11, &[]));
        assert_eq!(a, b);
    }

    #[test]
    fn kronecker_covariance() {
        let (l, n) = (4usize, 4usize);
        let rt = exponential_correlation(n, 0.8);
        let rr = exponential_correlation(l, 0.8);
        let model = ChannelModel::kronecker(&rr, &rt).unwrap();
        let mut r = rng::stream(17, &[]);
        let trials = 40_000;
        let mut acc = CMatrix::zeros(n, n);
        for _ in 0..trials {
            let h = model.sample(&mut r);
            acc = acc.add(&h.adjoint().matmul(&h));
        }
        // E[H^H H] = tr(R_r) R_t
        let est = acc.scale(1.0 / (trials as f64 * l as f64));
        assert!(est.max_abs_diff(&rt) < 0.03, "{est:?}");
    }

    #[test]
    fn kronecker_rejects_bad_models() {
        let bad = CMatrix::from_fn(2, 2, |i, j| Complex64::new(if i == j { 1.0 } else { 1.5 }, 0.0));
        assert!(matches!(
            ChannelModel::kronecker(&CMatrix::identity(2), &bad),
            Err(CommsError::Model(_))
        ));
        let nonunit = CMatrix::from_diag(&[2.0, 1.0]);
        assert!(ChannelModel::kronecker(&nonunit, &CMatrix::identity(2)).is_err());
    }

    #[test]
    fn awgn_variance_and_errors() {
        let mut r = rng::stream(21, &[]);
        let zeros = vec![Complex64::new(0.0, 0.0); 1_000_000];
        let y = add_awgn(&zeros, 1.0, &mut r).unwrap();
        let p = y.iter().map(|z| z.norm_sqr()).sum::<f64>() / y.len() as f64;
        assert!((p - 1.0).abs() < 0.01);
        assert!(matches!(add_awgn(&zeros[..2], 0.0, &mut r), Err(CommsError::Param(_))));
        let x = vec![Complex64::new(0.3, -0.2); 4];
        let y = add_awgn(&x, 1e-30, &mut r).unwrap();
        assert!(y.iter().zip(&x).all(|(a, b)| (a - b).norm() < 1e-14));
    }

    #[test]
    fn snr_definition() {
        assert!((sigma2_from_snr_db(10.0, 12) - 1.2).abs() < 1e-12);
        assert!((sigma2_from_snr_db(0.0, 4) - 4.0).abs() < 1e-12);
    }
}
