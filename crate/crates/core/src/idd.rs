//! Iterative detection and decoding over a fast-fading MIMO channel.
//!
//! One frame is one interleaver block. Its coded bits are cut into symbol
//! vectors of `N * Q` bits; the last vector is zero-padded and padding bits are
//! given zero prior and excluded from every error count. All randomness of a
//! frame (bits, interleaver, channels, noise) is drawn up front from a stream
//! keyed by `(seed, snr index, frame index)`, so two detector configurations
//! run with the same seed see identical frames.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comms::{self, ChannelModel, ChannelSpec, Constellation, Interleaver, RscCode};
use crate::decoder::{maxlog_map_decode, Trellis};
use crate::detector::{self, DetectError, MetricKind, SearchConfig};
use crate::numkit::{CMatrix, CVector};
use crate::par::{self, Execution};
use crate::pathmetric::MultCount;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IddError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("detector failed: {0}")]
    Detect(#[from] DetectError),
    #[error("channel model: {0}")]
    Comms(#[from] comms::CommsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    /// M-algorithm with the look-ahead metric.
    Issma,
    /// M-algorithm with the causal metric.
    ConventionalMa,
    MmsePic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Fading {
    /// New channel for every symbol vector.
    #[default]
    Fast,
    /// One channel per frame.
    Block,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IddConfig {
    pub n_tx: usize,
    pub n_rx: usize,
    pub bits_per_symbol: usize,
    pub snr_db: Vec<f64>,
    pub iterations: usize,
    /// Information-bit budget per SNR point; rounded up to whole frames.
    pub info_bits: usize,
    /// Interleaver size in coded bits.
    pub frame_coded_bits: usize,
    pub detector: DetectorKind,
    pub search: SearchConfig,
    pub channel: ChannelSpec,
    pub fading: Fading,
    pub seed: u64,
    pub execution: Execution,
}

impl IddConfig {
    /// Defaults: 7 iterations, 12,000-bit interleaver, fast i.i.d. fading, `J = min(16, 2^Q M)`.
    pub fn new(n_tx: usize, n_rx: usize, bits_per_symbol: usize, detector: DetectorKind, m: usize) -> Self {
        Self {
            n_tx,
            n_rx,
            bits_per_symbol,
            snr_db: vec![10.0],
            iterations: 7,
            info_bits: 200_000,
            frame_coded_bits: 12_000,
            detector,
            search: SearchConfig {
                j: 16.min((1usize << bits_per_symbol.min(16)).saturating_mul(m)),
                ..SearchConfig::new(m, MetricKind::Lela)
            },
            channel: ChannelSpec::Iid,
            fading: Fading::Fast,
            seed: 0,
            execution: Execution::default(),
        }
    }

    /// Search configuration with the metric implied by the detector kind.
    pub fn effective_search(&self) -> SearchConfig {
        let mut s = self.search.clone();
        s.metric = match self.detector {
            DetectorKind::ConventionalMa => MetricKind::Causal,
            _ => MetricKind::Lela,
        };
        s
    }

    pub fn info_bits_per_frame(&self) -> usize {
        self.frame_coded_bits / 2
    }

    pub fn frames(&self) -> usize {
        self.info_bits.div_ceil(self.info_bits_per_frame())
    }

    pub fn vectors_per_frame(&self) -> usize {
        self.frame_coded_bits.div_ceil(self.n_tx * self.bits_per_symbol)
    }

    pub fn validate(&self) -> Result<(), IddError> {
        let err = |m: String| Err(IddError::Config(m));
        if self.n_tx == 0 || self.n_rx < self.n_tx {
            return err(format!("need 1 <= n_tx <= n_rx, got n_tx={} n_rx={}", self.n_tx, self.n_rx));
        }
        Constellation::new(self.bits_per_symbol).map_err(|e| IddError::Config(e.to_string()))?;
        if self.iterations == 0 {
            return err("iterations must be at least 1".into());
        }
        if self.info_bits == 0 {
            return err("info_bits must be positive".into());
        }
        if self.frame_coded_bits < 2 || !self.frame_coded_bits.is_multiple_of(2) {
            return err(format!("frame_coded_bits must be even and >= 2, got {}", self.frame_coded_bits));
        }
        if self.snr_db.is_empty() || self.snr_db.iter().any(|s| !s.is_finite()) {
            return err("snr_db must be a non-empty list of finite values".into());
        }
        if self.detector != DetectorKind::MmsePic {
            self.effective_search()
                .validate(self.bits_per_symbol)
                .map_err(|e| IddError::Config(e.to_string()))?;
        } else if !(self.search.llr_clip > 0.0) {
            return err("llr_clip must be positive".into());
        }
        ChannelModel::from_spec(&self.channel, self.n_rx, self.n_tx)?;
        Ok(())
    }
}

/// Aggregate for one `(SNR, iteration)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IddPoint {
    pub snr_db: f64,
    /// 1-based.
    pub iteration: usize,
    pub ber_info: f64,
    pub ber_coded: f64,
    pub info_bits: u64,
    pub info_errors: u64,
    pub coded_bits: u64,
    pub coded_errors: u64,
    pub frames: usize,
    /// Average complex multiplications per symbol vector (one channel use) in this iteration.
    pub mult_per_symbol: f64,
    pub bias_mult_per_symbol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IddResult {
    pub points: Vec<IddPoint>,
}

impl IddResult {
    /// `(snr, info BER)` after `iteration` (1-based).
    pub fn ber_curve(&self, iteration: usize) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .filter(|p| p.iteration == iteration)
            .map(|p| (p.snr_db, p.ber_info))
            .collect()
    }
}

#[derive(Debug, Clone, Default)]
struct IterStats {
    info_errors: u64,
    coded_errors: u64,
    mults: MultCount,
}

struct Frame {
    info: Vec<u8>,
    tx_bits: Vec<u8>,
    interleaver: Interleaver,
    channels: Vec<CMatrix>,
    received: Vec<CVector>,
}

fn build_frame(cfg: &IddConfig, model: &ChannelModel, c: &Constellation, sigma2: f64, snr_idx: usize, frame: usize) -> Result<Frame, IddError> {
    let mut r = rng::stream(cfg.seed, &[snr_idx as u64, frame as u64]);
    let info = comms::random_bits(cfg.info_bits_per_frame(), &mut r);
    let interleaver = Interleaver::random(cfg.frame_coded_bits, &mut r);
    let coded = RscCode.encode(&info);
    let mut tx_bits = interleaver.interleave(&coded);
    let per_vec = cfg.n_tx * cfg.bits_per_symbol;
    tx_bits.resize(cfg.vectors_per_frame() * per_vec, 0);
    let mut channels = Vec::with_capacity(cfg.vectors_per_frame());
    let mut received = Vec::with_capacity(cfg.vectors_per_frame());
    let block = model.sample(&mut r);
    for chunk in tx_bits.chunks(per_vec) {
        let h = match cfg.fading {
            Fading::Fast => model.sample(&mut r),
            Fading::Block => block.clone(),
        };
        let x = comms::qam_map(chunk, c)?;
        let y = comms::add_awgn(&h.mul_vec(&x), sigma2, &mut r)?;
        channels.push(h);
        received.push(y);
    }
    Ok(Frame {
        info,
        tx_bits,
        interleaver,
        channels,
        received,
    })
}

fn run_frame(cfg: &IddConfig, snr_idx: usize, frame_idx: usize) -> Result<Vec<IterStats>, IddError> {
    let c = Constellation::new(cfg.bits_per_symbol).map_err(|e| IddError::Config(e.to_string()))?;
    let model = ChannelModel::from_spec(&cfg.channel, cfg.n_rx, cfg.n_tx)?;
    let sigma2 = comms::sigma2_from_snr_db(cfg.snr_db[snr_idx], cfg.n_tx);
    let frame = build_frame(cfg, &model, &c, sigma2, snr_idx, frame_idx)?;
    let search = cfg.effective_search();
    let trellis = Trellis::rsc75();
    let per_vec = cfg.n_tx * cfg.bits_per_symbol;
    let coded_len = cfg.frame_coded_bits;
    let total_len = frame.tx_bits.len();

    let mut prior = vec![0.0; total_len];
    let mut post = vec![0.0; total_len];
    let mut ext = vec![0.0; total_len];
    let mut stats = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        let mut it = IterStats::default();
        for (v, (h, y)) in frame.channels.iter().zip(&frame.received).enumerate() {
            let span = v * per_vec..(v + 1) * per_vec;
            let out = match cfg.detector {
                DetectorKind::MmsePic => detector::mmse_pic_detect(h, y, sigma2, &prior[span.clone()], &c, search.llr_clip)?,
                _ => detector::detect(h, y, sigma2, &prior[span.clone()], &c, &search)?,
            };
            it.mults += out.stats.mults;
            post[span.clone()].copy_from_slice(&out.posterior_llrs);
            ext[span].copy_from_slice(&out.extrinsic_llrs);
        }
        for i in 0..coded_len {
            debug_assert!((ext[i] - (post[i] - prior[i])).abs() <= 1e-9 * (1.0 + prior[i].abs()));
            if (post[i] > 0.0) != (frame.tx_bits[i] == 1) {
                it.coded_errors += 1;
            }
        }
        let dec_in = frame.interleaver.deinterleave(&ext[..coded_len]);
        let dec = maxlog_map_decode(&dec_in, &trellis);
        it.info_errors = dec.info_bits.iter().zip(&frame.info).filter(|(a, b)| a != b).count() as u64;
        let fed_back = frame.interleaver.interleave(&dec.coded_extrinsic);
        prior[..coded_len].copy_from_slice(&fed_back);
        stats.push(it);
    }
    Ok(stats)
}

/// Runs every SNR point; frames are processed in parallel according to `cfg.execution`.
pub fn run_idd(cfg: &IddConfig) -> Result<IddResult, IddError> {
    cfg.validate()?;
    let frames = cfg.frames();
    let mut points = Vec::with_capacity(cfg.snr_db.len() * cfg.iterations);
    for (si, &snr) in cfg.snr_db.iter().enumerate() {
        let per_frame = par::map_indexed(frames, cfg.execution, |f| run_frame(cfg, si, f));
        let mut totals = vec![IterStats::default(); cfg.iterations];
        for fr in per_frame {
            for (t, s) in totals.iter_mut().zip(fr?) {
                t.info_errors += s.info_errors;
                t.coded_errors += s.coded_errors;
                t.mults += s.mults;
            }
        }
        let info_bits = (frames * cfg.info_bits_per_frame()) as u64;
        let coded_bits = (frames * cfg.frame_coded_bits) as u64;
        let vectors = (frames * cfg.vectors_per_frame()) as f64;
        for (i, t) in totals.iter().enumerate() {
            points.push(IddPoint {
                snr_db: snr,
                iteration: i + 1,
                ber_info: t.info_errors as f64 / info_bits as f64,
                ber_coded: t.coded_errors as f64 / coded_bits as f64,
                info_bits,
                info_errors: t.info_errors,
                coded_bits,
                coded_errors: t.coded_errors,
                frames,
                mult_per_symbol: t.mults.total() as f64 / vectors,
                bias_mult_per_symbol: t.mults.bias as f64 / vectors,
            });
        }
    }
    Ok(IddResult { points })
}

/// SNR at which a BER curve first crosses `target`, interpolating linearly in
/// `log10(BER)`. Zero BER is floored at `1e-9`. Returns `None` if the curve
/// does not cross inside the grid.
pub fn snr_at_ber(curve: &[(f64, f64)], target: f64) -> Option<f64> {
    let lg = |b: f64| b.max(1e-9).log10();
    curve.windows(2).find_map(|w| {
        let ((s0, b0), (s1, b1)) = (w[0], w[1]);
        if b0 > target && b1 <= target {
            let t = (lg(b0) - lg(target)) / (lg(b0) - lg(b1));
            Some(s0 + t * (s1 - s0))
        } else {
            None
        }
    })
}
