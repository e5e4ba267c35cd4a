//! Detection ordering. The returned permutation lists original column indices
//! by tree position: `perm[N-1]` is detected first.

use crate::numkit::{self, CMatrix};

/// Successive MMSE ordering: repeatedly detect the remaining stream with the
/// largest post-MMSE SINR, i.e. the smallest diagonal entry of
/// `(H_S^H H_S + sigma2 I)^-1`. Ties go to the larger column index so that
/// `H = I` yields the identity.
pub fn vblast_order(h: &CMatrix, sigma2: f64) -> Vec<usize> {
    let n = h.cols();
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut perm = vec![0; n];
    for pos in (0..n).rev() {
        let hs = h.select_columns(&remaining);
        let gram = hs.adjoint().matmul(&hs).add_diag(sigma2);
        let g = match numkit::hermitian_inverse(&gram) {
            Ok(g) => g,
            Err(_) => return norm_order(h),
        };
        let mut best = remaining.len() - 1;
        for idx in (0..remaining.len()).rev() {
            if g[(idx, idx)].re < g[(best, best)].re * (1.0 - 1e-12) {
                best = idx;
            }
        }
        perm[pos] = remaining.remove(best);
    }
    perm
}

/// Column-norm ordering: strongest column at the top of the tree.
pub fn norm_order(h: &CMatrix) -> Vec<usize> {
    let norms: Vec<f64> = (0..h.cols()).map(|j| numkit::norm_sqr(&h.column(j))).collect();
    let mut perm: Vec<usize> = (0..h.cols()).collect();
    perm.sort_by(|&a, &b| norms[a].total_cmp(&norms[b]).then(a.cmp(&b)));
    perm
}
