//! Experiment runner, random generators and property batteries built on
//! `rccap-core`.

pub mod config;
pub mod figure1;
pub mod gen;
pub mod stats;
pub mod suite;
