#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bandit;
pub mod cli;
pub mod config;
pub mod demand;
pub mod env;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod io;
pub mod numeric;
pub mod solver;
pub mod utility;
