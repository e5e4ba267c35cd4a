//! Monte-Carlo correct-path-loss rates of the single-survivor (M = 1) search.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{cpl_level_bound, cpl_level_causal, cpl_level_exact, cpl_total, param, AnalysisError, LevelContext, McEstimate};
use crate::comms::{self, complex_gaussian, Constellation};
use crate::detector::MetricKind;
use crate::numkit::{CMatrix, CVector};
use crate::par::{self, Execution};
use crate::pathmetric::{self, DetectionProblem, PathNode};
use crate::priors::PriorStats;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CplSimConfig {
    pub n: usize,
    pub l: usize,
    pub bits_per_symbol: usize,
    pub snr_db: f64,
    pub trials: usize,
    /// `Causal` or `Lela`.
    pub metric: MetricKind,
    /// Look-ahead window; `None` uses every undecided position.
    pub lookahead_depth: Option<usize>,
    pub seed: u64,
    pub execution: Execution,
}

/// Counts indexed by level minus one (entry `N - 1` is the top level).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CplSimResult {
    pub trials: u64,
    pub losses: u64,
    /// Trials in which the correct path reached the level.
    pub level_arrivals: Vec<u64>,
    /// Trials in which the correct path was dropped at the level.
    pub level_losses: Vec<u64>,
    /// Channel averages of the per-level look-ahead bound with the exact SINR.
    pub level_bound_exact: Vec<f64>,
    /// Same with the SINR lower bound.
    pub level_bound: Vec<f64>,
    /// Same for the causal metric.
    pub level_bound_causal: Vec<f64>,
    /// Channel averages of the all-level total `1 - prod (1 - p_k)` for the three per-level bounds.
    pub total_bound_exact: f64,
    pub total_bound: f64,
    pub total_bound_causal: f64,
}

impl CplSimResult {
    pub fn rate(&self) -> f64 {
        self.losses as f64 / self.trials as f64
    }

    pub fn estimate(&self) -> McEstimate {
        let p = self.rate();
        let std_err = (p * (1.0 - p) / self.trials as f64).sqrt();
        McEstimate {
            mean: p,
            std_err,
            samples: self.trials as usize,
            unstable: !(std_err <= 5e-4 * p),
        }
    }

    /// Conditional loss rate at `level` (1-based) given the correct path arrived.
    pub fn level_rate(&self, level: usize) -> f64 {
        let a = self.level_arrivals[level - 1];
        if a == 0 {
            0.0
        } else {
            self.level_losses[level - 1] as f64 / a as f64
        }
    }
}

const TRIAL_BLOCK: usize = 1000;

#[derive(Default)]
struct Tally {
    losses: u64,
    arrivals: Vec<u64>,
    lost: Vec<u64>,
    exact: Vec<f64>,
    lower: Vec<f64>,
    causal: Vec<f64>,
    totals: [f64; 3],
}

fn run_block(cfg: &CplSimConfig, c: &Constellation, sigma2: f64, block: usize) -> Result<Tally, AnalysisError> {
    let n = cfg.n;
    let mut r = rng::stream(cfg.seed, &[cfg.snr_db.to_bits(), block as u64]);
    let len = TRIAL_BLOCK.min(cfg.trials - block * TRIAL_BLOCK);
    let mut t = Tally {
        arrivals: vec![0; n],
        lost: vec![0; n],
        exact: vec![0.0; n],
        lower: vec![0.0; n],
        causal: vec![0.0; n],
        ..Default::default()
    };
    let depth = cfg.lookahead_depth.unwrap_or(n);
    let ones = vec![1.0; n];
    for _ in 0..len {
        let h = CMatrix::from_fn(cfg.l, n, |_, _| complex_gaussian(&mut r, 1.0));
        let x: Vec<usize> = (0..n).map(|_| r.random_range(0..c.size())).collect();
        let pts: CVector = x.iter().map(|&s| c.point(s)).collect();
        let y = comms::add_awgn(&h.mul_vec(&pts), sigma2, &mut r).map_err(|e| param(e.to_string()))?;
        let p = DetectionProblem::from_channel(&h, &y, sigma2, PriorStats::uniform(n, c), c.clone())?;

        let mut levels = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        for level in 1..=n {
            let ctx = LevelContext::from_r(&p.r, level, &ones, sigma2)?;
            levels[0][level - 1] = cpl_level_exact(&ctx, c.bits_per_symbol())?;
            levels[1][level - 1] = cpl_level_bound(&ctx, c.bits_per_symbol())?;
            levels[2][level - 1] = cpl_level_causal(&ctx, c.bits_per_symbol());
        }
        for (acc, v) in [&mut t.exact, &mut t.lower, &mut t.causal].into_iter().zip(&levels) {
            acc.iter_mut().zip(v).for_each(|(a, x)| *a += x);
        }
        for (tot, v) in t.totals.iter_mut().zip(&levels) {
            *tot += cpl_total(v).total;
        }

        let zs = (cfg.metric == MetricKind::Lela).then(|| pathmetric::compute_z_sequence(&p.r, &p.priors.sym_var, sigma2, depth));
        let mut node = PathNode::root(&p);
        while node.undecided > 0 {
            let k = node.undecided - 1;
            t.arrivals[k] += 1;
            let best = (0..c.size())
                .map(|s| pathmetric::lela_metric_extend(&p, &node, s, zs.as_ref()))
                .min_by(|a, b| a.gamma_l().total_cmp(&b.gamma_l()))
                .expect("non-empty constellation");
            if best.symbols[k] != x[k] {
                t.lost[k] += 1;
                t.losses += 1;
                break;
            }
            node = best;
        }
    }
    Ok(t)
}

/// Transmits uniform symbols over i.i.d. CN(0, 1) channels without detection
/// ordering and follows the single survivor until it leaves the transmitted path.
pub fn simulate_cpl(cfg: &CplSimConfig) -> Result<CplSimResult, AnalysisError> {
    if cfg.n == 0 || cfg.l < cfg.n || cfg.trials == 0 {
        return Err(param(format!("need 1 <= N <= L and trials > 0, got N={} L={} trials={}", cfg.n, cfg.l, cfg.trials)));
    }
    if cfg.metric == MetricKind::Genie {
        return Err(param("CPL simulation supports the causal and look-ahead metrics"));
    }
    let c = Constellation::new(cfg.bits_per_symbol).map_err(|e| param(e.to_string()))?;
    let sigma2 = comms::sigma2_from_snr_db(cfg.snr_db, cfg.n);
    let blocks = cfg.trials.div_ceil(TRIAL_BLOCK);
    let parts = par::map_indexed(blocks, cfg.execution, |b| run_block(cfg, &c, sigma2, b));
    let n = cfg.n;
    let mut out = CplSimResult {
        trials: cfg.trials as u64,
        losses: 0,
        level_arrivals: vec![0; n],
        level_losses: vec![0; n],
        level_bound_exact: vec![0.0; n],
        level_bound: vec![0.0; n],
        level_bound_causal: vec![0.0; n],
        total_bound_exact: 0.0,
        total_bound: 0.0,
        total_bound_causal: 0.0,
    };
    for p in parts {
        let t = p?;
        out.losses += t.losses;
        out.total_bound_exact += t.totals[0];
        out.total_bound += t.totals[1];
        out.total_bound_causal += t.totals[2];
        for i in 0..n {
            out.level_arrivals[i] += t.arrivals[i];
            out.level_losses[i] += t.lost[i];
            out.level_bound_exact[i] += t.exact[i];
            out.level_bound[i] += t.lower[i];
            out.level_bound_causal[i] += t.causal[i];
        }
    }
    let scale = 1.0 / cfg.trials as f64;
    for v in [&mut out.level_bound_exact, &mut out.level_bound, &mut out.level_bound_causal] {
        v.iter_mut().for_each(|x| *x *= scale);
    }
    out.total_bound_exact *= scale;
    out.total_bound *= scale;
    out.total_bound_causal *= scale;
    Ok(out)
}
