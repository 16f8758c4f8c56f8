//! Configuration, experiment drivers, comparison and persistence for the
//! small-body laboratory.

pub mod check;
pub mod commands;
pub mod compare;
pub mod config;
pub mod experiment;
pub mod output;
