//! Exact Hausdorff-Kantorovich metrics on finitely generated convex sets of
//! finitely supported distributions, together with the quantitative equational
//! theory of convex semilattices: canonical terms, term distances, a
//! derivation checker and constructive derivations.
//!
//! All scalars are arbitrary precision rationals ([`Q`]); nothing in here
//! touches floating point.

pub mod convex;
pub mod deduction;
mod error;
pub mod json;
pub mod lifting;
mod lp;
pub mod presentation;
pub mod random;
mod rat;
pub mod space;
pub mod terms;
pub mod transport;

pub use error::{Error, Result};
pub use rat::{format_q, parse_q, Q};
pub use space::{Coupling, Dist, FiniteMetricSpace, Metric, Point};
pub use convex::ConvexSet;
pub use terms::Term;
