//! Max-log BCJR for the rate-1/2 (7,5) RSC code.

use crate::comms::RscCode;

/// One trellis edge leaving `state` on input `bit`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub input: u8,
    pub parity: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trellis {
    pub num_states: usize,
    pub edges: Vec<Edge>,
}

impl Trellis {
    pub fn rsc75() -> Self {
        let edges = (0..RscCode::NUM_STATES)
            .flat_map(|from| {
                (0..2u8).map(move |input| {
                    let (to, parity) = RscCode::step(from, input);
                    Edge { from, to, input, parity }
                })
            })
            .collect();
        Self {
            num_states: RscCode::NUM_STATES,
            edges,
        }
    }
}

impl Default for Trellis {
    fn default() -> Self {
        Self::rsc75()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderOutput {
    /// Posterior minus input, per coded bit.
    pub coded_extrinsic: Vec<f64>,
    pub coded_posterior: Vec<f64>,
    pub info_posterior: Vec<f64>,
    pub info_bits: Vec<u8>,
}

#[inline]
fn sgn(b: u8) -> f64 {
    if b == 1 {
        1.0
    } else {
        -1.0
    }
}

/// Decodes interleaved `[sys0, par0, sys1, par1, ...]` LLRs. The encoder starts
/// in state 0 and is not terminated, so the backward recursion starts uniform.
pub fn maxlog_map_decode(llr_in: &[f64], trellis: &Trellis) -> DecoderOutput {
    assert!(llr_in.len().is_multiple_of(2), "coded LLR count must be even");
    let t_len = llr_in.len() / 2;
    let ns = trellis.num_states;
    let neg = f64::NEG_INFINITY;

    let gamma = |t: usize, e: &Edge| 0.5 * (sgn(e.input) * llr_in[2 * t] + sgn(e.parity) * llr_in[2 * t + 1]);

    let mut alpha = vec![neg; (t_len + 1) * ns];
    alpha[0] = 0.0;
    for t in 0..t_len {
        let (cur, next) = alpha.split_at_mut((t + 1) * ns);
        let cur = &cur[t * ns..];
        let next = &mut next[..ns];
        for e in &trellis.edges {
            let v = cur[e.from] + gamma(t, e);
            if v > next[e.to] {
                next[e.to] = v;
            }
        }
        let m = next.iter().cloned().fold(neg, f64::max);
        next.iter_mut().for_each(|v| *v -= m);
    }

    let mut beta = vec![neg; (t_len + 1) * ns];
    beta[t_len * ns..].iter_mut().for_each(|v| *v = 0.0);
    for t in (0..t_len).rev() {
        let (cur, next) = beta.split_at_mut((t + 1) * ns);
        let cur = &mut cur[t * ns..];
        let next = &next[..ns];
        for e in &trellis.edges {
            let v = next[e.to] + gamma(t, e);
            if v > cur[e.from] {
                cur[e.from] = v;
            }
        }
        let m = cur.iter().cloned().fold(neg, f64::max);
        cur.iter_mut().for_each(|v| *v -= m);
    }

    let mut coded_posterior = vec![0.0; 2 * t_len];
    for t in 0..t_len {
        // [systematic][value], [parity][value]
        let mut best = [[neg; 2]; 2];
        for e in &trellis.edges {
            let v = alpha[t * ns + e.from] + gamma(t, e) + beta[(t + 1) * ns + e.to];
            let s = &mut best[0][e.input as usize];
            *s = s.max(v);
            let p = &mut best[1][e.parity as usize];
            *p = p.max(v);
        }
        coded_posterior[2 * t] = best[0][1] - best[0][0];
        coded_posterior[2 * t + 1] = best[1][1] - best[1][0];
    }
    let coded_extrinsic: Vec<f64> = coded_posterior.iter().zip(llr_in).map(|(p, i)| p - i).collect();
    // re-derive the posterior so that posterior = input + extrinsic holds bit-exactly
    let coded_posterior: Vec<f64> = llr_in.iter().zip(&coded_extrinsic).map(|(i, e)| i + e).collect();
    let info_posterior: Vec<f64> = coded_posterior.iter().step_by(2).copied().collect();
    let info_bits = info_posterior.iter().map(|&l| (l > 0.0) as u8).collect();
    DecoderOutput {
        coded_extrinsic,
        coded_posterior,
        info_posterior,
        info_bits,
    }
}
