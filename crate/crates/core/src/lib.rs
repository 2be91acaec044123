//! Simulated reconfigurable robot workcell.

// `!(x >= y)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod model;
pub mod registry;
pub mod robot;
pub mod periphery;
pub mod skills;
pub mod teach;
pub mod assembler;
pub mod cell;
pub mod scenario;
pub mod service;
pub mod agent;
pub mod gateway;
pub mod cli;
