//! Numerics for sharp Khinchin-type inequalities: Haagerup's and Ball's
//! special functions, their perturbed counterparts for laws close to the
//! Rademacher and spherical ones, and checkers for every quantitative step
//! in the stability argument.

// `!(x > 0.0)` style guards are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certify;
pub mod dist;
pub mod par;
pub mod perturbed;
pub mod quad;
pub mod report;
pub mod specialfn;
pub mod verify;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
