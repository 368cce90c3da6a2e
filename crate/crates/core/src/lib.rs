//! Quantify and localize power-flow infeasibility.
//!
//! Grid models are parsed from MATPOWER case files ([`netmodel`]), compiled
//! into an equivalent-circuit current balance ([`ecf`]) and solved with
//! Newton-type methods ([`pfcore`], [`localizer`]). When a network has no
//! power-flow solution, fictitious *infeasibility currents* are added at the
//! buses and the localizer drives them onto as few buses as possible.

// `!(x > 0.0)` rejects NaN on purpose; index loops walk parallel arrays.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod ecf;
pub mod error;
pub mod linsolve;
pub mod localizer;
pub mod netmodel;
pub mod pfcore;

pub use error::{Error, Result};
