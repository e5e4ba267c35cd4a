//! Max-log bit LLRs from a candidate list, with bit-flip list extension.

use super::{CandidateList, DetectorOutput, DetectorStats, SearchConfig};
use crate::pathmetric::{self, DetectionProblem, MultCount};

/// Clamps to `[-clip, clip]`; NaN becomes 0.
#[inline]
pub fn clip_llr(l: f64, clip: f64) -> f64 {
    if l.is_nan() {
        0.0
    } else {
        l.clamp(-clip, clip)
    }
}

/// Splits a raw max-log posterior into `(posterior, extrinsic)`. The clip is
/// applied to the extrinsic part so that a large prior can never flip its sign;
/// an infinite raw value (empty hypothesis side, no flips) gives `+-clip`.
pub fn split_llr(raw_post: f64, prior: f64, clip: f64) -> (f64, f64) {
    let e = clip_llr(raw_post - prior, clip);
    (prior + e, e)
}

fn maxlog_difference(best_one: f64, best_zero: f64) -> f64 {
    if best_one == f64::NEG_INFINITY && best_zero == f64::NEG_INFINITY {
        0.0
    } else {
        best_one - best_zero
    }
}

/// Computes posterior and extrinsic LLRs for every bit.
///
/// When all list entries agree on a bit, that bit is flipped in the `J`
/// lowest-cost entries and the flipped vectors are scored exactly; they can
/// never coincide with list entries because every entry carries the other
/// bit value. With `J = 0` the extrinsic saturates at `+-llr_clip`.
/// Output bits are in original stream order (via `list.permutation`).
pub fn extend_and_compute_llrs(
    list: &CandidateList,
    p: &DetectionProblem,
    cfg: &SearchConfig,
    mults: &mut MultCount,
) -> DetectorOutput {
    assert!(!list.entries.is_empty(), "candidate list is empty");
    let n = p.n();
    let q = p.constellation.bits_per_symbol();
    let flip_cost = (n * (n + 1) / 2) as u64;
    let mut by_cost: Vec<usize> = (0..list.entries.len()).collect();
    by_cost.sort_by(|&a, &b| list.entries[a].cost.total_cmp(&list.entries[b].cost).then(a.cmp(&b)));
    let j_eff = cfg.j.min(by_cost.len());

    let mut post = vec![0.0; n * q];
    let mut ext = vec![0.0; n * q];
    let mut flips = 0usize;
    let mut flipped = vec![0usize; n];
    for pos in 0..n {
        for bit in 0..q {
            let mask = 1usize << (q - 1 - bit);
            let mut best = [f64::NEG_INFINITY; 2];
            let mut seen = [false; 2];
            for e in &list.entries {
                let side = (e.symbols[pos] & mask != 0) as usize;
                seen[side] = true;
                best[side] = best[side].max(e.psi);
            }
            let raw = if seen[0] && seen[1] {
                maxlog_difference(best[1], best[0])
            } else {
                let missing = if seen[1] { 0 } else { 1 };
                if j_eff == 0 {
                    if missing == 0 {
                        f64::INFINITY
                    } else {
                        f64::NEG_INFINITY
                    }
                } else {
                    for &idx in &by_cost[..j_eff] {
                        flipped.copy_from_slice(&list.entries[idx].symbols);
                        flipped[pos] ^= mask;
                        let psi = pathmetric::psi(p, &flipped);
                        best[missing] = best[missing].max(psi);
                    }
                    flips += j_eff;
                    mults.llr += flip_cost * j_eff as u64;
                    maxlog_difference(best[1], best[0])
                }
            };
            let orig = list.permutation[pos] * q + bit;
            let pri = p.priors.llr[pos * q + bit];
            let (lp, le) = split_llr(raw, pri, cfg.llr_clip);
            post[orig] = lp;
            ext[orig] = le;
        }
    }
    DetectorOutput {
        posterior_llrs: post,
        extrinsic_llrs: ext,
        stats: DetectorStats {
            mults: MultCount::default(),
            list_size: list.entries.len(),
            flips,
        },
    }
}
