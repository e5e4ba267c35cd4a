//! Breadth-first M-algorithm over the QR tree.

use std::cmp::Ordering;

use num_complex::Complex64;

use super::{DetectError, MetricKind, SearchConfig};
use crate::numkit::CVector;
use crate::pathmetric::{self, DetectionProblem, MultCount, ZSequence, GENIE_MAX_BITS};

/// A complete symbol vector (detection order) with its metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub symbols: Vec<usize>,
    /// Cost metric without the constant `C`.
    pub cost: f64,
    /// Log a posteriori weight, `-(cost + C) / sigma2`.
    pub psi: f64,
}

/// Survivors of the final level, sorted by increasing cost.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateList {
    pub entries: Vec<Candidate>,
    /// Original stream index for each tree position.
    pub permutation: Vec<usize>,
}

struct Node {
    symbols: Vec<usize>,
    gamma_c: f64,
    a: CVector,
}

#[derive(Clone, Copy)]
struct Child {
    metric: f64,
    gamma_c: f64,
    parent: usize,
    symbol: usize,
}

impl Child {
    /// Generation order `(parent, symbol)` is the tie-break.
    fn cmp_rank(&self, other: &Self) -> Ordering {
        self.metric
            .total_cmp(&other.metric)
            .then(self.parent.cmp(&other.parent))
            .then(self.symbol.cmp(&other.symbol))
    }
}

fn keep_best(children: &mut Vec<Child>, m: usize) {
    if children.len() > m {
        children.select_nth_unstable_by(m - 1, Child::cmp_rank);
        children.truncate(m);
    }
    children.sort_unstable_by(Child::cmp_rank);
}

/// Runs the search and returns all `2^Q` children of every survivor at the last level.
///
/// `zs` must be provided for [`MetricKind::Lela`]; it is ignored otherwise.
pub fn m_search(
    p: &DetectionProblem,
    cfg: &SearchConfig,
    zs: Option<&ZSequence>,
    mults: &mut MultCount,
) -> Result<CandidateList, DetectError> {
    cfg.validate(p.constellation.bits_per_symbol())?;
    let n = p.n();
    let size = p.constellation.size();
    if cfg.metric == MetricKind::Lela && zs.is_none() {
        return Err(DetectError::Config("look-ahead metric needs a Z sequence".into()));
    }
    if cfg.metric == MetricKind::Genie {
        let bits = n.saturating_sub(1) * p.constellation.bits_per_symbol();
        if bits > GENIE_MAX_BITS {
            return Err(pathmetric::MetricError::TooLarge {
                bits,
                limit: GENIE_MAX_BITS,
            }
            .into());
        }
    }

    let root_a: CVector = {
        let rx = p.r.mul_vec(&p.priors.sym_mean);
        p.y.iter().zip(&rx).map(|(a, b)| a - b).collect()
    };
    let mut nodes = vec![Node {
        symbols: vec![0; n],
        gamma_c: 0.0,
        a: root_a,
    }];
    let mut children: Vec<Child> = Vec::with_capacity(cfg.m * size);
    let mut child_syms = vec![0usize; n];

    for k in (0..n).rev() {
        let xbar = p.priors.sym_mean[k];
        let rkk = p.r[(k, k)];
        let deltas: Vec<Complex64> = (0..size).map(|s| p.point(s) - xbar).collect();
        let lookahead = match (cfg.metric, zs) {
            (MetricKind::Lela, Some(z)) if z.dim(k) > 0 => Some(z),
            _ => None,
        };
        children.clear();
        for (pi, node) in nodes.iter().enumerate() {
            let u = lookahead.map(|z| {
                let d = z.dim(k) as u64;
                mults.bias += d * d;
                z.z(k).mul_vec(&node.a[z.window(k)])
            });
            for (s, delta) in deltas.iter().enumerate() {
                let v = node.a[k] - rkk * delta;
                mults.metric += 1;
                let gamma_c = node.gamma_c + v.norm_sqr() + p.prior_term(k, s);
                let metric = match cfg.metric {
                    MetricKind::Causal => gamma_c,
                    MetricKind::Lela => match (&u, lookahead) {
                        (Some(u), Some(z)) => {
                            let lead = z.lead(k);
                            mults.metric += lead.len() as u64;
                            let bias: f64 = u.iter().zip(lead).map(|(ui, li)| (ui - li * delta).norm_sqr()).sum();
                            gamma_c + bias
                        }
                        _ => gamma_c,
                    },
                    MetricKind::Genie => {
                        child_syms.copy_from_slice(&node.symbols);
                        child_syms[k] = s;
                        gamma_c + pathmetric::best_completion(p, &child_syms, k)?.0
                    }
                };
                children.push(Child {
                    metric,
                    gamma_c,
                    parent: pi,
                    symbol: s,
                });
            }
        }
        if k > 0 {
            keep_best(&mut children, cfg.m);
        } else {
            children.sort_unstable_by(|a, b| {
                a.gamma_c
                    .total_cmp(&b.gamma_c)
                    .then(a.parent.cmp(&b.parent))
                    .then(a.symbol.cmp(&b.symbol))
            });
        }
        let next: Vec<Node> = children
            .iter()
            .map(|c| {
                let parent = &nodes[c.parent];
                let delta = deltas[c.symbol];
                let a: CVector = (0..k).map(|row| parent.a[row] - p.r[(row, k)] * delta).collect();
                mults.update += k as u64;
                let mut symbols = parent.symbols.clone();
                symbols[k] = c.symbol;
                Node {
                    symbols,
                    gamma_c: c.gamma_c,
                    a,
                }
            })
            .collect();
        nodes = next;
    }

    let entries = nodes
        .into_iter()
        .map(|node| Candidate {
            psi: -(node.gamma_c + p.c_const) / p.sigma2,
            cost: node.gamma_c,
            symbols: node.symbols,
        })
        .collect();
    Ok(CandidateList {
        entries,
        permutation: (0..n).collect(),
    })
}
