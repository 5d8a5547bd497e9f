//! Delayed distributed gradient consensus over random geometric networks.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bounds;
pub mod da;
pub mod delay;
pub mod dg;
pub mod graph;
pub mod harness;
pub mod objective;
