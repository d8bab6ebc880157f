//! File formats, Monte-Carlo harness and command-line frontend on top of
//! `layerplace-core`.

pub mod cli;
pub mod files;
pub mod harness;
pub mod lp;
