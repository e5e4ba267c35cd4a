//! Runs one configured experiment and collects its result table.

use issma::analysis::{self, AnalysisError, AsymptoticParams, CplSimConfig, LevelContext};
use issma::comms::{self, complex_gaussian, CommsError, Constellation};
use issma::detector::{self, DetectError, MetricKind, SearchConfig};
use issma::idd::{self, IddConfig, IddError};
use issma::numkit::{self, CMatrix, LinalgError};
use issma::par::{self, Execution};
use issma::pathmetric::MultCount;
use issma::rng;
use thiserror::Error;

use crate::config::{
    Asymptotics, BerSweep, ComplexityReport, CplSweep, ExperimentConfig, ExperimentKind, ScalingGain, SinrBounds,
};

/// Failures during computation. The CLI exits with status 3.
#[derive(Debug, Error)]
pub enum RunError {
    #[error("idd: {0}")]
    Idd(#[from] IddError),
    #[error("analysis: {0}")]
    Analysis(#[from] AnalysisError),
    #[error("detector: {0}")]
    Detect(#[from] DetectError),
    #[error("comms: {0}")]
    Comms(#[from] CommsError),
    #[error("numkit: {0}")]
    Linalg(#[from] LinalgError),
}

/// Numeric result rows under a fixed column schema.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<f64>>,
}

impl ResultTable {
    fn new(columns: &[&'static str]) -> Self {
        Self {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the schema");
        self.rows.push(row);
    }
}

pub fn run(cfg: &ExperimentConfig, exec: Execution) -> Result<ResultTable, RunError> {
    let seed = cfg.seed;
    match cfg.experiment {
        ExperimentKind::BerSweep => ber_sweep(cfg.ber_sweep.as_ref().expect("validated"), seed, exec),
        ExperimentKind::CplSweep => cpl_sweep(cfg.cpl_sweep.as_ref().expect("validated"), seed, exec),
        ExperimentKind::ScalingGain => scaling_gain(cfg.scaling_gain.as_ref().expect("validated"), seed, exec),
        ExperimentKind::SinrBounds => sinr_bounds(cfg.sinr_bounds.as_ref().expect("validated"), seed, exec),
        ExperimentKind::ComplexityReport => complexity(cfg.complexity_report.as_ref().expect("validated"), seed, exec),
        ExperimentKind::Asymptotics => asymptotics(cfg.asymptotics.as_ref().expect("validated"), seed, exec),
    }
}

pub fn idd_config(s: &BerSweep, seed: u64, exec: Execution) -> IddConfig {
    let q = s.bits_per_symbol;
    let m = s.m.unwrap_or(1);
    let mut c = IddConfig::new(s.n_tx, s.n_rx, q, s.detector, m);
    c.snr_db = s.snr_db.clone();
    c.iterations = s.iterations;
    c.info_bits = s.info_bits;
    c.frame_coded_bits = s.frame_coded_bits;
    c.search.j = s.j.unwrap_or_else(|| 16.min((1 << q) * m));
    c.search.n_l = s.n_l;
    c.search.llr_clip = s.llr_clip;
    c.search.ordering = s.ordering;
    c.channel = s.channel.clone();
    c.fading = s.fading;
    c.seed = seed;
    c.execution = exec;
    c
}

fn ber_sweep(s: &BerSweep, seed: u64, exec: Execution) -> Result<ResultTable, RunError> {
    let res = idd::run_idd(&idd_config(s, seed, exec))?;
    let mut t = ResultTable::new(&[
        "snr_db",
        "iteration",
        "ber_info",
        "ber_coded",
        "mult_per_symbol",
        "frames",
        "bias_mult_per_symbol",
        "info_errors",
        "info_bits",
        "coded_errors",
        "coded_bits",
    ]);
    for p in &res.points {
        t.push(vec![
            p.snr_db,
            p.iteration as f64,
            p.ber_info,
            p.ber_coded,
            p.mult_per_symbol,
            p.frames as f64,
            p.bias_mult_per_symbol,
            p.info_errors as f64,
            p.info_bits as f64,
            p.coded_errors as f64,
            p.coded_bits as f64,
        ]);
    }
    Ok(t)
}

fn cpl_sweep(s: &CplSweep, seed: u64, exec: Execution) -> Result<ResultTable, RunError> {
    let l = s.l.unwrap_or(s.n);
    let mut t = ResultTable::new(&[
        "snr_db",
        "cpl_simulated",
        "cpl_simulated_std_err",
        "cpl_causal_simulated",
        "cpl_causal_std_err",
        "cpl_exact_sinr_bound",
        "cpl_lower_sinr_bound",
        "cpl_causal_bound",
        "cpl_dominant_bound",
        "cpl_dominant_causal_bound",
    ]);
    for &snr in &s.snr_db {
        let mut sim = CplSimConfig {
            n: s.n,
            l,
            bits_per_symbol: s.bits_per_symbol,
            snr_db: snr,
            trials: s.trials,
            metric: MetricKind::Lela,
            lookahead_depth: s.lookahead_depth,
            seed,
            execution: exec,
        };
        let lela = analysis::simulate_cpl(&sim)?;
        sim.metric = MetricKind::Causal;
        let causal = analysis::simulate_cpl(&sim)?;
        let sigma2 = comms::sigma2_from_snr_db(snr, s.n);
        let dom_seed = rng::derive_seed(seed, &[1, snr.to_bits()]);
        let dom = analysis::avg_cpl_dominant(l, s.n, s.bits_per_symbol, sigma2, 1.0, s.mc_samples, dom_seed, exec)?;
        let (le, ce) = (lela.estimate(), causal.estimate());
        t.push(vec![
            snr,
            le.mean,
            le.std_err,
            ce.mean,
            ce.std_err,
            lela.total_bound_exact,
            lela.total_bound,
            lela.total_bound_causal,
            dom.lela_bound,
            dom.causal_bound,
        ]);
    }
    Ok(t)
}

fn scaling_gain(s: &ScalingGain, seed: u64, exec: Execution) -> Result<ResultTable, RunError> {
    let mut t = ResultTable::new(&["n", "l", "snr_db", "sigma2", "scaling_gain", "std_err", "unstable"]);
    for &n in &s.n {
        let l = s.l.unwrap_or(n);
        for &snr in &s.snr_db {
            let sigma2 = comms::sigma2_from_snr_db(snr, n);
            let g_seed = rng::derive_seed(seed, &[n as u64, snr.to_bits()]);
            let g = analysis::scaling_gain(l, n, s.bits_per_symbol, sigma2, s.lambda_max, s.mc_samples, g_seed, exec)?;
            t.push(vec![
                n as f64,
                l as f64,
                snr,
                sigma2,
                g.mean,
                g.std_err,
                if g.unstable { 1.0 } else { 0.0 },
            ]);
        }
    }
    Ok(t)
}

const SINR_FIELDS: usize = 8;

fn sinr_bounds(s: &SinrBounds, seed: u64, exec: Execution) -> Result<ResultTable, RunError> {
    let (n, l) = (s.n, s.l.unwrap_or(s.n));
    let mut t = ResultTable::new(&[
        "snr_db",
        "level",
        "sinr_causal",
        "sinr_lela",
        "sinr_lower",
        "sinr_upper",
        "gain_upper",
        "gain_lower",
        "lower_violations",
        "upper_violations",
    ]);
    for (si, &snr) in s.snr_db.iter().enumerate() {
        let sigma2 = comms::sigma2_from_snr_db(snr, n);
        let per = par::map_indexed(s.channels, exec, |c| -> Result<Vec<[f64; SINR_FIELDS]>, RunError> {
            let mut r = rng::stream(seed, &[si as u64, c as u64]);
            let h = CMatrix::from_fn(l, n, |_, _| complex_gaussian(&mut r, 1.0));
            let (_, rr) = numkit::qr_thin(&h)?;
            (2..=n)
                .map(|k| {
                    let ctx = LevelContext::from_r(&rr, k, &vec![s.lambda; k - 1], sigma2)?;
                    let exact = analysis::sinr_lela(&ctx)?;
                    let (lo, up) = analysis::sinr_bounds(&ctx)?;
                    let (gu, gl) = analysis::gain_bounds(&ctx)?;
                    let slack = 1e-12 * (1.0 + exact.abs());
                    Ok([
                        analysis::sinr_causal(&ctx),
                        exact,
                        lo,
                        up,
                        gu,
                        gl,
                        f64::from(u8::from(lo > exact + slack)),
                        f64::from(u8::from(exact > up + slack)),
                    ])
                })
                .collect()
        });
        let mut sums = vec![[0.0; SINR_FIELDS]; n - 1];
        for ch in per {
            for (acc, v) in sums.iter_mut().zip(ch?) {
                acc.iter_mut().zip(v).for_each(|(a, x)| *a += x);
            }
        }
        let scale = 1.0 / s.channels as f64;
        for (i, acc) in sums.iter().enumerate() {
            let mut row = vec![snr, (i + 2) as f64];
            row.extend(acc[..6].iter().map(|x| x * scale));
            row.extend_from_slice(&acc[6..]);
            t.push(row);
        }
    }
    Ok(t)
}

fn complexity(s: &ComplexityReport, seed: u64, exec: Execution) -> Result<ResultTable, RunError> {
    let (n, q) = (s.n_tx, s.bits_per_symbol);
    let n_rx = s.n_rx.unwrap_or(n);
    let c = Constellation::new(q)?;
    let sigma2 = comms::sigma2_from_snr_db(s.snr_db, n);
    let mut t = ResultTable::new(&[
        "m",
        "n_l",
        "mult_bias",
        "mult_metric",
        "mult_update",
        "mult_llr",
        "mult_total",
        "bias_leading_order",
    ]);
    for &m in &s.m {
        for &n_l in &s.n_l {
            let cfg = SearchConfig {
                n_l,
                j: s.j.unwrap_or_else(|| 16.min((1 << q) * m)),
                ..SearchConfig::new(m, s.metric)
            };
            // the same vectors for every (M, N_l) pair
            let per = par::map_indexed(s.trials, exec, |trial| -> Result<MultCount, RunError> {
                let mut r = rng::stream(seed, &[trial as u64]);
                let h = CMatrix::from_fn(n_rx, n, |_, _| complex_gaussian(&mut r, 1.0));
                let x = comms::qam_map(&comms::random_bits(n * q, &mut r), &c)?;
                let y = comms::add_awgn(&h.mul_vec(&x), sigma2, &mut r)?;
                Ok(detector::detect(&h, &y, sigma2, &vec![0.0; n * q], &c, &cfg)?.stats.mults)
            });
            let mut sum = [0u64; 4];
            for mc in per {
                let mc = mc?;
                for (a, v) in sum.iter_mut().zip([mc.bias, mc.metric, mc.update, mc.llr]) {
                    *a += v;
                }
            }
            let avg = |v: u64| v as f64 / s.trials as f64;
            t.push(vec![
                m as f64,
                n_l as f64,
                avg(sum[0]),
                avg(sum[1]),
                avg(sum[2]),
                avg(sum[3]),
                avg(sum.iter().sum()),
                (m * n * n_l * n_l) as f64,
            ]);
        }
    }
    Ok(t)
}

fn asymptotics(s: &Asymptotics, seed: u64, exec: Execution) -> Result<ResultTable, RunError> {
    let mut cols = vec!["beta", "gamma", "sigma2", "gain_upper_limit", "gain_lower_limit", "gain_upper_high_snr_limit"];
    if s.finite_n.is_some() {
        cols.extend(["n", "l", "k", "gain_upper_sampled", "gain_upper_std_err", "gain_lower_sampled", "gain_lower_std_err"]);
    }
    let mut t = ResultTable::new(&cols);
    for (gi, &gamma) in s.gamma.iter().enumerate() {
        let p = AsymptoticParams::new(s.beta, gamma)?;
        let high_snr = analysis::asymptotic_upper_limit(p, s.lambda_min);
        for (vi, &sigma2) in s.sigma2.iter().enumerate() {
            let (up, lo) = analysis::asymptotic_bounds(p, s.lambda_min, s.lambda_max, sigma2);
            let mut row = vec![s.beta, gamma, sigma2, up, lo, high_snr];
            if let Some(n) = s.finite_n {
                let l = ((n as f64 / s.beta).round() as usize).max(n);
                let k = ((gamma * n as f64).round() as usize + 1).clamp(2, n);
                let g_seed = rng::derive_seed(seed, &[gi as u64, vi as u64]);
                let (su, sl) = analysis::sample_gain_bounds(n, l, k, s.lambda_min, sigma2, s.channels, g_seed, exec)?;
                row.extend([n as f64, l as f64, k as f64, su.mean, su.std_err, sl.mean, sl.std_err]);
            }
            t.push(row);
        }
    }
    Ok(t)
}
