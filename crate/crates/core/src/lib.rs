//! Data-driven synthesis and verification of safe controllers for
//! discrete-time nonlinear systems with polyhedral safe sets.
//!
//! The plant is `x+ = A1 x + A2 S(x) + B u + w` with a known dictionary
//! `S` and unknown matrices. Controllers have the form
//! `u = K1 x + K2 Q(x)`, where `Q(x) = S(x) - A_s x` is the remainder after
//! linearizing the dictionary at the origin, and are parameterized through
//! right inverses of the data matrix `V0 = [X0; Q(X0)]`. Safety is certified
//! by linear programs that make the safe set lambda-contractive.

// Negated comparisons are deliberate: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datagen;
pub mod dynamics;
pub mod error;
pub mod linalg;
pub mod lp;
pub mod pipeline;
pub mod polytope;
pub mod scenario;
pub mod synthesis;
pub mod verify;

pub use error::{Error, Result};
pub use polytope::{IntervalBox, PolyhedralSet};
