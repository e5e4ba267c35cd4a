//! Soft-input soft-output MIMO tree detection.
//!
//! The crate is organised bottom-up:
//!
//! * [`numkit`]: dense complex linear algebra (QR, Cholesky solves, Jacobi eigenvalues).
//! * [`comms`]: RSC encoder, interleaver, gray QAM, Rayleigh channels and AWGN.
//! * [`priors`]: a priori LLRs to bit probabilities, symbol means and variances.
//! * [`pathmetric`]: causal, look-ahead and genie path metrics for the QR-triangularised tree.
//! * [`detector`]: the breadth-first M-algorithm with list extension, and an MMSE-PIC baseline.
//! * [`decoder`]: max-log BCJR for the (7,5) RSC code.
//! * [`idd`]: iterative detection and decoding Monte-Carlo driver.
//! * [`analysis`]: SINR bounds, large-system limits and correct-path-loss probabilities.
//!
//! Sign convention everywhere: logical bit `1` is the antipodal value `+1` and has a positive LLR.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod comms;
pub mod decoder;
pub mod detector;
pub mod idd;
pub mod numkit;
pub mod par;
pub mod pathmetric;
pub mod priors;
pub mod rng;

pub use num_complex::Complex64;
pub use numkit::{CMatrix, CVector, LinalgError};
pub use par::Execution;
