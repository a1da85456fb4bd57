#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod dist;
pub mod dynamics;
pub mod exec;
pub mod graph;
pub mod gwtree;
pub mod harness;
pub mod linalg;
pub mod meanfield;
pub mod metrics;
pub mod rng;
pub mod spec;
pub mod stats;
