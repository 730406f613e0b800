//! Small-signal modelling of droop-controlled, MMC-based multi-terminal dc
//! grids: state-space assembly, eigenvalue sensitivities with respect to
//! droop slopes, and the resulting slope stability regions.

pub mod assembly;
pub mod config;
pub mod control;
pub mod converter;
pub mod dynamics;
pub mod modal;
pub mod network;
pub mod region;
pub mod synthetic;
pub mod system;
pub mod units;
pub mod study;
pub mod cli;
