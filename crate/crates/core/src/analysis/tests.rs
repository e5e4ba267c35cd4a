use super::*;
use num_complex::Complex64;
use crate::detector::MetricKind;
use crate::pathmetric::compute_z_sequence;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, Gamma};

fn random_context(r: &mut rng::SimRng, n: usize) -> (CMatrix, LevelContext, Vec<f64>) {
    let rows = n + r.random_range(0..3);
    let h = gaussian_matrix(r, rows, n, 1.0);
    let (_, rr) = numkit::qr_thin(&h).unwrap();
    let lambda: Vec<f64> = (0..n).map(|_| r.random_range(0.0..1.0)).collect();
    let sigma2 = 10f64.powf(r.random_range(-2.0..1.0));
    let k = r.random_range(1..=n);
    let ctx = LevelContext::from_r(&rr, k, &lambda, sigma2).unwrap();
    (rr, ctx, lambda)
}

#[test]
fn constants() {
    assert_eq!(qam_gap_constant(2), 1.0);
    assert_eq!(cpl_prefactor(2), 2.0);
    assert!((qam_gap_constant(4) - 0.2).abs() < 1e-15);
    assert!((cpl_prefactor(4) - 3.0).abs() < 1e-15);
    assert_eq!(gaussian_q(0.0), 0.5);
    // Q(3) = 1.3498980316300946e-3
    assert!((gaussian_q(3.0) / 1.3498980316300946e-3 - 1.0).abs() < 1e-14);
    assert!(gaussian_q(40.0) < 1e-300);
}

#[test]
fn empty_lookahead_is_causal() {
    let ctx = LevelContext::new(CMatrix::zeros(0, 0), vec![], 1.3, &[], 0.2).unwrap();
    let c = 1.3 * 1.3 / 0.2;
    assert_eq!(sinr_lela(&ctx).unwrap(), c);
    assert_eq!(sinr_bounds(&ctx).unwrap(), (c, c));
    assert_eq!(sinr_causal(&ctx), c);
    // orthogonal upper column
    let ctx = LevelContext::new(CMatrix::identity(3), vec![Complex64::new(0.0, 0.0); 3], 1.3, &[1.0; 3], 0.2).unwrap();
    assert!((sinr_lela(&ctx).unwrap() - c).abs() < 1e-12);
}


#[test]
fn scalar_level_two_closed_form() {
    // Sigma = r11^2 + s2 with unit prior variance
    let (r11, r12, r22, s2) = (0.8, Complex64::new(0.3, -0.4), 1.1, 0.25);
    let ctx = LevelContext::new(CMatrix::from_diag(&[r11]), vec![r12], r22, &[1.0], s2).unwrap();
    let sig = r11 * r11 + s2;
    let a = r12.norm_sqr();
    let expect = (s2 * s2 * a / (sig * sig) + r22 * r22).powi(2) / (s2 * (s2 * s2 * s2 * a / sig.powi(3) + r22 * r22));
    assert!((sinr_lela(&ctx).unwrap() - expect).abs() < 1e-12 * expect);
}

#[test]
fn perfect_priors_collapse_bounds() {
    let mut r = rng::stream(80, &[]);
    let h = gaussian_matrix(&mut r, 5, 5, 1.0);
    let (_, rr) = numkit::qr_thin(&h).unwrap();
    let ctx = LevelContext::from_r(&rr, 4, &[0.0; 5], 0.3).unwrap();
    let (lo, hi) = sinr_bounds(&ctx).unwrap();
    let expect = numkit::norm_sqr(&ctx.r_k) / 0.3 + ctx.r_kk * ctx.r_kk / 0.3;
    assert!((lo - expect).abs() < 1e-10 * expect);
    assert!((hi - expect).abs() < 1e-10 * expect);
}

#[test]
fn sinr_sandwich_and_gain() {
    let mut r = rng::stream(81, &[]);
    for _ in 0..300 {
        let n = r.random_range(1..10);
        let (_, ctx, _) = random_context(&mut r, n);
        let s = sinr_lela(&ctx).unwrap();
        let (lo, hi) = sinr_bounds(&ctx).unwrap();
        assert!(lo <= s * (1.0 + 1e-12) && s <= hi * (1.0 + 1e-12), "{lo} {s} {hi}");
        assert!(s >= sinr_causal(&ctx) * (1.0 - 1e-12));
        let (bu, _) = gain_bounds(&ctx).unwrap();
        let c = sinr_causal(&ctx);
        assert!(hi <= (bu + c) * (1.0 + 1e-10) + 1e-12);
    }
}

#[test]
fn uniform_prior_gain_bounds_sandwich() {
    // with Lambda = lambda I the matrices commute and both looser bounds hold
    let mut r = rng::stream(87, &[]);
    for _ in 0..300 {
        let n = r.random_range(2..10);
        let h = gaussian_matrix(&mut r, n, n, 1.0);
        let (_, rr) = numkit::qr_thin(&h).unwrap();
        let lam = r.random_range(0.05..1.0);
        let ctx = LevelContext::from_r(&rr, n, &vec![lam; n], r.random_range(0.01..2.0)).unwrap();
        let (lo, hi) = sinr_bounds(&ctx).unwrap();
        let (bu, bl) = gain_bounds(&ctx).unwrap();
        let c = sinr_causal(&ctx);
        assert!(bl + c <= lo * (1.0 + 1e-10));
        assert!(hi <= (bu + c) * (1.0 + 1e-10));
    }
}

#[test]
fn looser_lower_bound_can_fail_for_unequal_priors() {
    // A >= Sigma does not imply A^-2 <= Sigma^-2 when they do not commute
    let mut r = rng::stream(81, &[]);
    let mut violations = 0;
    for _ in 0..2000 {
        let n = r.random_range(2..10);
        let (_, ctx, _) = random_context(&mut r, n);
        let (lo, _) = sinr_bounds(&ctx).unwrap();
        let (_, bl) = gain_bounds(&ctx).unwrap();
        if bl + sinr_causal(&ctx) > lo * (1.0 + 1e-9) {
            violations += 1;
        }
    }
    assert!(violations > 0);
}

#[test]
fn lookahead_operator_is_scaled_inverse_covariance() {
    let mut r = rng::stream(82, &[]);
    for _ in 0..50 {
        let n = r.random_range(2..9);
        let (rr, _, lambda) = random_context(&mut r, n);
        let sigma2 = 0.37;
        let zs = compute_z_sequence(&rr, &lambda, sigma2, n);
        for k in 2..=n {
            let ctx = LevelContext::from_r(&rr, k, &lambda, sigma2).unwrap();
            let direct = numkit::hermitian_inverse(&ctx.sigma).unwrap().scale(sigma2);
            assert!(zs.z(k - 1).max_abs_diff(&direct) < 1e-10);
        }
    }
}

#[test]
fn scalar_channel_monte_carlo() {
    // Simulate the look-ahead statistic [Z r; r_kk]^H [Z b; n_k] against its signal gain.
    let mut r = rng::stream(83, &[]);
    let n = 4;
    let h = gaussian_matrix(&mut r, n, n, 1.0);
    let (_, rr) = numkit::qr_thin(&h).unwrap();
    let lambda = [0.4, 1.0, 0.7];
    let sigma2 = 0.5;
    let ctx = LevelContext::from_r(&rr, n, &[0.4, 1.0, 0.7, 1.0], sigma2).unwrap();
    let z = numkit::hermitian_inverse(&ctx.sigma).unwrap().scale(sigma2);
    let zr = z.mul_vec(&ctx.r_k);
    let zzr = z.mul_vec(&zr);
    let signal = numkit::norm_sqr(&zr) + ctx.r_kk * ctx.r_kk;
    let samples = 1_000_000;
    let mut power = 0.0;
    for _ in 0..samples {
        let e: CVector = (0..3).map(|i| complex_gaussian(&mut r, lambda[i])).collect();
        let nn: CVector = (0..3).map(|_| complex_gaussian(&mut r, sigma2)).collect();
        let b: CVector = ctx.r11.mul_vec(&e).iter().zip(&nn).map(|(a, b)| a + b).collect();
        let nk = complex_gaussian(&mut r, sigma2);
        let v = numkit::dot(&zzr, &b) + ctx.r_kk * nk;
        power += v.norm_sqr();
    }
    let empirical = signal * signal / (power / samples as f64);
    let formula = sinr_lela(&ctx).unwrap();
    assert!((empirical / formula - 1.0).abs() < 0.02, "{empirical} vs {formula}");
}

#[test]
fn g_values() {
    assert_eq!(g_function(0.0, 0.3), 1.0);
    assert!((g_function(2.0, 1.0) - 3.0).abs() < 1e-15);
    assert!((g_function(1.0, 0.5) - 4.25f64.sqrt()).abs() < 1e-15);
}

#[test]
fn asymptotic_limits_and_monotonicity() {
    let p = AsymptoticParams::new(1.0, 0.5).unwrap();
    let (u, l) = asymptotic_bounds(p, 1.0, 1.0, 1e-8);
    assert!((u - 1.0).abs() < 1e-6);
    assert!(l < 1e-3);
    let mut prev = (0.0, 0.0);
    for i in 1..10 {
        let q = AsymptoticParams::new(1.0, i as f64 / 10.0).unwrap();
        let b = asymptotic_bounds(q, 0.6, 1.0, 0.2);
        assert!(b.0 > prev.0 && b.1 > prev.1);
        prev = b;
    }
    assert!(AsymptoticParams::new(1.0, 1.0).is_err());
    assert!(AsymptoticParams::new(0.0, 0.5).is_err());
}

#[test]
fn asymptotic_bounds_match_density_integrals() {
    for &(c, lmin, lmax, s2) in &[(0.5, 1.0, 1.0, 0.1), (0.2, 0.3, 0.9, 0.05), (0.9, 0.5, 0.5, 1.0)] {
        let p = AsymptoticParams::new(1.0, c).unwrap();
        let (u, l) = asymptotic_bounds(p, lmin, lmax, s2);
        let iu = c / s2 * marchenko_pastur_integral(c, |x| 1.0 / (1.0 + lmin / s2 * x), 4000);
        let il = c / s2 * marchenko_pastur_integral(c, |x| 1.0 / (1.0 + lmax / s2 * x).powi(2), 4000);
        assert!((u - iu).abs() < 1e-9 * u, "{u} {iu}");
        assert!((l - il).abs() < 1e-9 * l, "{l} {il}");
    }
}

#[test]
fn marchenko_pastur_normalised() {
    for c in [0.1, 0.5, 0.9, 1.0] {
        let total = marchenko_pastur_integral(c, |_| 1.0, 2000);
        assert!((total - 1.0).abs() < 1e-6, "{c}: {total}");
        let mean = marchenko_pastur_integral(c, |x| x, 2000);
        assert!((mean - 1.0).abs() < 1e-6, "{c}: mean {mean}");
    }
    assert_eq!(marchenko_pastur_density(5.0, 0.5), 0.0);
}

#[test]
fn wishart_pdf_matches_samples() {
    // m = 1: Gamma(L) density
    let l = 4;
    for x in [0.5f64, 2.0, 6.0] {
        let expect = x.powi(3) * (-x).exp() / 6.0;
        assert!((wishart_eigen_pdf(&[x], l) - expect).abs() < 1e-14);
    }
    // m = 2: histogram of sampled eigenvalue pairs on a coarse grid
    let mut r = rng::stream(84, &[]);
    let samples = 200_000;
    let edges = [0.0, 1.0, 2.5, 5.0];
    let mut counts = [[0u32; 3]; 3];
    for _ in 0..samples {
        let h = gaussian_matrix(&mut r, l, 2, 1.0);
        let eta = numkit::hermitian_eigenvalues(&h.adjoint().matmul(&h)).unwrap();
        // unordered pair: pick one of the two orders at random
        let (a, b) = if r.random::<bool>() { (eta[0], eta[1]) } else { (eta[1], eta[0]) };
        let bin = |v: f64| edges.windows(2).position(|w| v >= w[0] && v < w[1]);
        if let (Some(i), Some(j)) = (bin(a), bin(b)) {
            counts[i][j] += 1;
        }
    }
    for i in 0..3 {
        for j in 0..3 {
            let mut mass = 0.0;
            let g = 60;
            let (x0, x1, y0, y1) = (edges[i], edges[i + 1], edges[j], edges[j + 1]);
            for a in 0..g {
                for b in 0..g {
                    let x = x0 + (a as f64 + 0.5) * (x1 - x0) / g as f64;
                    let y = y0 + (b as f64 + 0.5) * (y1 - y0) / g as f64;
                    mass += wishart_eigen_pdf(&[x, y], l) * (x1 - x0) * (y1 - y0) / (g * g) as f64;
                }
            }
            let freq = counts[i][j] as f64 / samples as f64;
            let se = (mass * (1.0 - mass) / samples as f64).sqrt();
            assert!((freq - mass).abs() < 5.0 * se + 1e-3, "bin ({i},{j}) {freq} vs {mass}");
        }
    }
}

#[test]
fn level_bound_endpoints() {
    let ctx = LevelContext::new(CMatrix::zeros(0, 0), vec![], 0.0, &[], 1.0).unwrap();
    assert_eq!(cpl_level_bound(&ctx, 2).unwrap(), 1.0);
    assert_eq!(cpl_level_causal(&ctx, 4), 1.5);
    let ctx = LevelContext::new(CMatrix::zeros(0, 0), vec![], 100.0, &[], 1e-3).unwrap();
    assert!(cpl_level_exact(&ctx, 2).unwrap() < 1e-300);
}

#[test]
fn totals() {
    assert!((cpl_total(&[0.3]).total - 0.3).abs() < 1e-15);
    assert_eq!(cpl_total(&[0.0, 0.0]).total, 0.0);
    let t = cpl_total(&[0.1, 0.1]);
    assert!((t.total - 0.19).abs() < 1e-15);
    assert!((t.first_order - 0.2).abs() < 1e-15);
}

#[test]
fn chi_square_average() {
    let s2: f64 = 0.3;
    let single = 0.5 - 0.5 * (1.0 / (1.0 + 2.0 * s2)).sqrt();
    assert!((chi_square_q_average(5, 5, 2, s2) - single).abs() < 1e-15);
    // diversity order L - k + 1 = 3
    let (a, b) = (1e-3, 1e-2);
    let slope = (chi_square_q_average(6, 4, 2, b) / chi_square_q_average(6, 4, 2, a)).ln() / (b / a).ln();
    assert!((slope - 3.0).abs() < 0.05, "{slope}");
    assert!(chi_square_q_average(6, 4, 2, 1e-9) < 1e-20);
    // Monte-Carlo over Gamma(L - k + 1) draws
    let mut r = rng::stream(85, &[]);
    let g = Gamma::new(3.0, 1.0).unwrap();
    let s2 = 0.8;
    let n = 1_000_000;
    let mc: f64 = (0..n).map(|_| { let v: f64 = g.sample(&mut r); gaussian_q((v / s2).sqrt()) }).sum::<f64>() / n as f64;
    let cf = chi_square_q_average(6, 4, 2, s2);
    assert!((mc / cf - 1.0).abs() < 0.01, "{mc} vs {cf}");
    // large systems stay finite
    let big = chi_square_q_average(200, 2, 2, 1.0);
    assert!(big.is_finite() && big > 0.0 && big < 1e-20);
}

#[test]
fn scaling_gain_properties() {
    let g = scaling_gain(5, 5, 2, 0.3, 1.0, 4000, 1, Execution::Sequential).unwrap();
    assert!(g.mean < 1.0 && g.mean > 0.0);
    let tiny = scaling_gain(5, 5, 2, 1e-7, 1.0, 500, 1, Execution::Sequential).unwrap();
    assert!(1.0 - tiny.mean < 1e-4);
    let few = scaling_gain(5, 5, 2, 0.3, 1.0, 10, 1, Execution::Sequential).unwrap();
    assert!(few.unstable);
    let par = scaling_gain(5, 5, 2, 0.3, 1.0, 4000, 1, Execution::Parallel).unwrap();
    assert_eq!(g, par);
    assert!(scaling_gain(5, 1, 2, 0.3, 1.0, 100, 1, Execution::Sequential).is_err());
}

#[test]
fn dominant_bounds() {
    let d = avg_cpl_dominant(5, 5, 2, 0.3, 1.0, 2000, 2, Execution::Parallel).unwrap();
    assert!(d.lela_bound <= d.causal_bound);
    let huge = avg_cpl_dominant(5, 5, 2, 1e9, 1.0, 100, 2, Execution::Parallel).unwrap();
    assert!((huge.causal_bound - 1.0).abs() < 1e-4);
    assert!((huge.lela_bound - 1.0).abs() < 1e-4);
}

#[test]
fn sampled_gain_bounds_are_ordered() {
    let (u, l) = sample_gain_bounds(20, 20, 11, 1.0, 0.1, 40, 3, Execution::Parallel).unwrap();
    assert!(l.mean < u.mean);
    let p = AsymptoticParams::new(1.0, 0.5).unwrap();
    let (au, _) = asymptotic_bounds(p, 1.0, 1.0, 0.1);
    // small system, loose agreement only
    assert!((u.mean / au - 1.0).abs() < 0.3, "{} vs {au}", u.mean);
}

#[test]
fn cpl_simulation_basics() {
    let mut cfg = CplSimConfig {
        n: 3,
        l: 3,
        bits_per_symbol: 2,
        snr_db: 10.0,
        trials: 3000,
        metric: MetricKind::Causal,
        lookahead_depth: None,
        seed: 9,
        execution: Execution::Parallel,
    };
    let a = simulate_cpl(&cfg).unwrap();
    assert_eq!(a.level_arrivals[2], 3000);
    assert_eq!(a.losses, a.level_losses.iter().sum::<u64>());
    for lv in 1..3 {
        assert_eq!(a.level_arrivals[lv - 1], a.level_arrivals[lv] - a.level_losses[lv]);
    }
    cfg.execution = Execution::Sequential;
    assert_eq!(simulate_cpl(&cfg).unwrap(), a);
    cfg.snr_db = 80.0;
    assert_eq!(simulate_cpl(&cfg).unwrap().losses, 0);
    cfg.metric = MetricKind::Genie;
    assert!(simulate_cpl(&cfg).is_err());
}

#[test]
fn cpl_top_level_matches_causal_bound_shape() {
    // top level of the causal search is an uncoded QPSK decision on a Rayleigh scalar channel
    let cfg = CplSimConfig {
        n: 2,
        l: 2,
        bits_per_symbol: 2,
        snr_db: 15.0,
        trials: 20_000,
        metric: MetricKind::Causal,
        lookahead_depth: None,
        seed: 10,
        execution: Execution::Parallel,
    };
    let res = simulate_cpl(&cfg).unwrap();
    let sigma2 = crate::comms::sigma2_from_snr_db(15.0, 2);
    let q = chi_square_q_average(2, 2, 2, sigma2);
    // symbol error of QPSK = 2Q - Q^2 per channel, so the rate sits just below 2 E[Q]
    let rate = res.level_rate(2);
    let se = (rate / 20_000.0).sqrt();
    assert!(rate <= 2.0 * q + 3.0 * se);
    assert!(rate >= 2.0 * q * 0.85, "{rate} vs {}", 2.0 * q);
    assert!((res.level_bound_causal[1] - 2.0 * q).abs() < 0.1 * 2.0 * q);
}

proptest! {
    #[test]
    fn sandwich_property(seed in 0u64..5000) {
        let mut r = rng::stream(seed, &[86]);
        let n = r.random_range(1..8);
        let (_, ctx, _) = random_context(&mut r, n);
        let s = sinr_lela(&ctx).unwrap();
        let (lo, hi) = sinr_bounds(&ctx).unwrap();
        prop_assert!(lo <= s * (1.0 + 1e-12) && s <= hi * (1.0 + 1e-12));
    }

    #[test]
    fn asymptotic_bounds_monotone_in_load(c1 in 0.01f64..0.98, dc in 0.001f64..0.01, s2 in 1e-3f64..10.0) {
        let a = asymptotic_bounds(AsymptoticParams::new(1.0, c1).unwrap(), 0.7, 1.0, s2);
        let b = asymptotic_bounds(AsymptoticParams::new(1.0, (c1 + dc).min(0.99)).unwrap(), 0.7, 1.0, s2);
        prop_assert!(b.0 >= a.0 && b.1 >= a.1);
    }

    #[test]
    fn total_between_max_and_sum(ps in proptest::collection::vec(0.0f64..1.0, 1..8)) {
        let t = cpl_total(&ps);
        let mx = ps.iter().cloned().fold(0.0, f64::max);
        prop_assert!(t.total >= mx - 1e-15 && t.total <= t.first_order + 1e-15);
    }
}
