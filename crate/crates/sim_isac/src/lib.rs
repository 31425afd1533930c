//! Numerical core for a stacked-intelligent-metasurface (SIM) assisted
//! integrated sensing and communication system.
//!
//! The crate models a BS with a hybrid precoder feeding a multi-layer
//! metasurface, evaluates target-estimation accuracy (Fisher information and
//! Cramér-Rao bounds) and physical-layer secrecy under eavesdropper location
//! uncertainty, and optimizes all of it with a five-block layered block
//! coordinate descent solver.
//!
//! Module map:
//!
//! * [`scenario`]: configuration, array geometry, unit helpers, random streams.
//! * [`channel`]: near-field, inter-layer and far-field channel generation.
//! * [`metasurface`]: cascade transform, quantization, local search, RCG.
//! * [`sensing`]: sensing model, FIM, CRB, Block A, ML grid estimator.
//! * [`security`]: SINR/secrecy, Bernstein surrogate, Blocks B, C and E.
//! * [`lbcd`]: the outer solver, resource allocation (Block D), benchmarks.
//! * [`baselines`]: comparator schemes (TS, CF, SF, SL-RIS, NR-LBCD).
//! * [`oracle`]: brute-force and numerical-differentiation references.

pub mod baselines;
pub mod channel;
pub mod lbcd;
pub mod linalg;
pub mod metasurface;
pub mod oracle;
pub mod scenario;
pub mod security;
pub mod sensing;

pub use linalg::{CMat, CVec, C64};
