//! Oracles shared by the integration test targets.
#![allow(dead_code)]

pub mod brute;
pub mod designs;
pub mod programs;
pub mod quantile_table;
pub mod vertex;
