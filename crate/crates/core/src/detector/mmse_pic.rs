//! Soft parallel interference cancellation followed by per-stream MMSE filtering.

use num_complex::Complex64;

use super::{split_llr, DetectError, DetectorOutput, DetectorStats};
use crate::comms::Constellation;
use crate::numkit::{self, CMatrix};
use crate::pathmetric::MultCount;
use crate::priors::{bit_log_prob, PriorStats};

/// For each stream `k` the interference of the others is cancelled with their
/// prior means, then `w_k = (H Lambda_k H^H + sigma2 I)^-1 h_k`, where `Lambda_k`
/// is the prior variance with entry `k` set to one. The filter output
/// `z_k = mu_k x_k + e_k` with `mu_k = w_k^H h_k` and `Var(e_k) = mu_k (1 - mu_k)`
/// is demapped with max-log using the other bits' priors.
pub fn mmse_pic_detect(
    h: &CMatrix,
    y_o: &[Complex64],
    sigma2: f64,
    prior_llrs: &[f64],
    c: &Constellation,
    llr_clip: f64,
) -> Result<DetectorOutput, DetectError> {
    let (l, n) = (h.rows(), h.cols());
    let q = c.bits_per_symbol();
    if y_o.len() != l || prior_llrs.len() != n * q {
        return Err(DetectError::Config("dimension mismatch in MMSE-PIC input".into()));
    }
    let priors = PriorStats::new(prior_llrs, c);
    let mut mults = MultCount::default();

    let mut a = CMatrix::zeros(l, l);
    for i in 0..l {
        for j in 0..l {
            let mut s = Complex64::new(0.0, 0.0);
            for k in 0..n {
                s += h[(i, k)] * priors.sym_var[k] * h[(j, k)].conj();
            }
            a[(i, j)] = s;
        }
    }
    let a = a.add_diag(sigma2);
    let a_inv = numkit::hermitian_inverse(&a)?;
    let hx = h.mul_vec(&priors.sym_mean);
    let resid: Vec<Complex64> = y_o.iter().zip(&hx).map(|(y, v)| y - v).collect();
    mults.metric += (l * l * n + l * l * l + l * n) as u64;

    let mut post = vec![0.0; n * q];
    let mut ext = vec![0.0; n * q];
    for k in 0..n {
        let hk = h.column(k);
        let t = a_inv.mul_vec(&hk);
        let g = numkit::dot(&hk, &t).re;
        let scale = 1.0 / (1.0 + (1.0 - priors.sym_var[k]) * g);
        let mu = (g * scale).clamp(0.0, 1.0);
        // w^H (resid + h_k xbar_k)
        let z = (numkit::dot(&t, &resid) + numkit::dot(&t, &hk) * priors.sym_mean[k]) * scale;
        mults.metric += (l * l + 3 * l) as u64;

        let nu = ((1.0 - mu) / mu.max(1e-300)).max(1e-300);
        let xhat = z / mu.max(1e-300);
        let llr_k = &priors.llr[k * q..(k + 1) * q];
        let metric: Vec<f64> = (0..c.size()).map(|s| -(xhat - c.point(s)).norm_sqr() / nu).collect();
        mults.llr += c.size() as u64;
        for bit in 0..q {
            let mut best = [f64::NEG_INFINITY; 2];
            for (s, &m) in metric.iter().enumerate() {
                let others: f64 = (0..q).filter(|&j| j != bit).map(|j| bit_log_prob(llr_k[j], c.bit_sign(s, j))).sum();
                let side = c.bit(s, bit) as usize;
                best[side] = best[side].max(m + others);
            }
            let pri = llr_k[bit];
            let e = best[1] - best[0];
            let (lp, le) = split_llr(e + pri, pri, llr_clip);
            post[k * q + bit] = lp;
            ext[k * q + bit] = le;
        }
    }
    Ok(DetectorOutput {
        posterior_llrs: post,
        extrinsic_llrs: ext,
        stats: DetectorStats {
            mults,
            list_size: 0,
            flips: 0,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comms::{add_awgn, complex_gaussian, qam_map, random_bits};
    use crate::rng;

    #[test]
    fn noiseless_identity_channel() {
        let c = Constellation::qam16();
        let mut r = rng::stream(60, &[]);
        let bits = random_bits(12, &mut r);
        let x = qam_map(&bits, &c).unwrap();
        let out = mmse_pic_detect(&CMatrix::identity(3), &x, 1e-12, &[0.0; 12], &c, 8.0).unwrap();
        for (b, l) in bits.iter().zip(&out.posterior_llrs) {
            assert_eq!(*b == 1, *l > 0.0);
        }
    }

    #[test]
    fn zero_priors_equal_plain_mmse() {
        let c = Constellation::qpsk();
        let mut r = rng::stream(61, &[]);
        let h = CMatrix::from_fn(3, 3, |_, _| complex_gaussian(&mut r, 1.0));
        let y: Vec<Complex64> = (0..3).map(|_| complex_gaussian(&mut r, 1.0)).collect();
        let sigma2 = 0.4;
        let out = mmse_pic_detect(&h, &y, sigma2, &[0.0; 6], &c, 100.0).unwrap();
        // unbiased linear MMSE: W = (H H^H + s I)^-1 H, per stream scaled by 1/mu
        let a = h.matmul(&h.adjoint()).add_diag(sigma2);
        let ainv = numkit::hermitian_inverse(&a).unwrap();
        for k in 0..3 {
            let hk = h.column(k);
            let w = ainv.mul_vec(&hk);
            let mu = numkit::dot(&w, &hk).re;
            let xhat = numkit::dot(&w, &y) / mu;
            let nu = (1.0 - mu) / mu;
            // QPSK with gray labels: LLR of the in-phase bit is 4 Re(xhat) / (sqrt(2) nu) under max-log
            let expect = 2.0 * std::f64::consts::SQRT_2 * xhat.re / nu;
            assert!((out.posterior_llrs[2 * k] - expect).abs() < 1e-8 * expect.abs().max(1.0));
        }
    }

    #[test]
    fn high_snr_symbol_error_rate() {
        // 2x2 QPSK at 20 dB; an independent linear-MMSE simulation (1.6e6 symbols) gives SER 0.0122
        let c = Constellation::qpsk();
        let mut r = rng::stream(62, &[]);
        let sigma2 = crate::comms::sigma2_from_snr_db(20.0, 2);
        let trials = 100_000;
        let mut errors = 0;
        for _ in 0..trials {
            let h = CMatrix::from_fn(2, 2, |_, _| complex_gaussian(&mut r, 1.0));
            let bits = random_bits(4, &mut r);
            let x = qam_map(&bits, &c).unwrap();
            let y = add_awgn(&h.mul_vec(&x), sigma2, &mut r).unwrap();
            let out = mmse_pic_detect(&h, &y, sigma2, &[0.0; 4], &c, 8.0).unwrap();
            let w = numkit::hermitian_inverse(&h.adjoint().matmul(&h).add_diag(sigma2))
                .unwrap()
                .matmul(&h.adjoint());
            let xhat = w.mul_vec(&y);
            for k in 0..2 {
                assert_eq!(out.posterior_llrs[2 * k] > 0.0, xhat[k].re > 0.0);
                assert_eq!(out.posterior_llrs[2 * k + 1] > 0.0, xhat[k].im > 0.0);
                let wrong = (0..2).any(|j| (out.posterior_llrs[2 * k + j] > 0.0) != (bits[2 * k + j] == 1));
                errors += wrong as usize;
            }
        }
        let ser = errors as f64 / (2 * trials) as f64;
        let se = (0.0122f64 * (1.0 - 0.0122) / (2 * trials) as f64).sqrt();
        assert!((ser - 0.0122).abs() < 4.0 * se, "ser = {ser}");
    }
}
