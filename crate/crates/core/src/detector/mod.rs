//! Soft-output detectors: the breadth-first M-algorithm over the QR tree and
//! a soft interference-cancellation MMSE baseline.

mod llr;
mod mmse_pic;
mod ordering;
mod search;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comms::Constellation;
use crate::numkit::{CMatrix, LinalgError};
use crate::pathmetric::{self, DetectionProblem, MetricError, MultCount};
use crate::priors::PriorStats;
use num_complex::Complex64;

pub use llr::{clip_llr, extend_and_compute_llrs, split_llr};
pub use mmse_pic::mmse_pic_detect;
pub use ordering::{norm_order, vblast_order};
pub use search::{m_search, Candidate, CandidateList};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectError {
    #[error("invalid search configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Path metric used to rank partial paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    /// Accumulated branch metrics of visited symbols only.
    Causal,
    /// Causal metric plus the linear-estimate look-ahead bias.
    Lela,
    /// Causal metric plus the exact best completion (exponential; for validation).
    Genie,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DetectionOrder {
    #[default]
    Vblast,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Survivors per level.
    pub m: usize,
    /// Best list entries used for bit flipping when a hypothesis is missing.
    pub j: usize,
    /// Look-ahead depth; 0 disables the bias term.
    pub n_l: usize,
    pub metric: MetricKind,
    pub llr_clip: f64,
    pub ordering: DetectionOrder,
}

impl SearchConfig {
    pub fn new(m: usize, metric: MetricKind) -> Self {
        Self {
            m,
            j: 16,
            n_l: 5,
            metric,
            llr_clip: 8.0,
            ordering: DetectionOrder::Vblast,
        }
    }

    pub fn validate(&self, bits_per_symbol: usize) -> Result<(), DetectError> {
        if self.m == 0 {
            return Err(DetectError::Config("M must be at least 1".into()));
        }
        let cap = (1usize << bits_per_symbol) * self.m;
        if self.j > cap {
            return Err(DetectError::Config(format!("J = {} violates J <= 2^Q * M = {cap}", self.j)));
        }
        if !(self.llr_clip > 0.0) || !self.llr_clip.is_finite() {
            return Err(DetectError::Config(format!("llr_clip must be positive, got {}", self.llr_clip)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectorStats {
    pub mults: MultCount,
    /// Entries in the candidate list before extension.
    pub list_size: usize,
    /// Flipped vectors evaluated during list extension.
    pub flips: usize,
}

/// Soft output for one symbol vector, bit `j` of stream `k` at index `k * Q + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorOutput {
    pub posterior_llrs: Vec<f64>,
    pub extrinsic_llrs: Vec<f64>,
    pub stats: DetectorStats,
}

/// Orders, triangularises and searches one received vector with the tree detector.
pub fn detect(
    h: &CMatrix,
    y_o: &[Complex64],
    sigma2: f64,
    prior_llrs: &[f64],
    constellation: &Constellation,
    cfg: &SearchConfig,
) -> Result<DetectorOutput, DetectError> {
    cfg.validate(constellation.bits_per_symbol())?;
    let n = h.cols();
    if prior_llrs.len() != n * constellation.bits_per_symbol() {
        return Err(DetectError::Config(format!(
            "expected {} prior LLRs, got {}",
            n * constellation.bits_per_symbol(),
            prior_llrs.len()
        )));
    }
    let perm = match cfg.ordering {
        DetectionOrder::Vblast => vblast_order(h, sigma2),
        DetectionOrder::None => (0..n).collect(),
    };
    let priors = PriorStats::new(prior_llrs, constellation).permuted(&perm);
    let problem = DetectionProblem::from_channel(&h.permute_columns(&perm), y_o, sigma2, priors, constellation.clone())?;
    let zs = match cfg.metric {
        MetricKind::Lela => Some(pathmetric::compute_z_sequence(
            &problem.r,
            &problem.priors.sym_var,
            sigma2,
            cfg.n_l,
        )),
        _ => None,
    };
    let mut mults = MultCount::default();
    let mut list = m_search(&problem, cfg, zs.as_ref(), &mut mults)?;
    list.permutation = perm;
    let mut out = extend_and_compute_llrs(&list, &problem, cfg, &mut mults);
    out.stats.mults = mults;
    Ok(out)
}
