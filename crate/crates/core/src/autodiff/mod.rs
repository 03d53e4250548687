//! Reverse-mode differentiation over small dense arrays.
//!
//! A [`Tape`] records every operation eagerly as it is evaluated. Nodes are
//! appended in evaluation order, so the arena order is already a topological
//! order and [`Tape::backward`] is a single reverse sweep.

mod finite_diff;
mod functional;
mod tape;

pub use finite_diff::finite_diff_grad;
pub use functional::{kl_div_values, log_softmax_values, relu_values, softmax_values};
pub use tape::{Shape, Tape, Var};
