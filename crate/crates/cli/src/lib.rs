//! Library side of the `graphfsl` binary: config parsing, the experiment
//! runner, and SVG plotting. Kept as a lib so the acceptance suite can
//! drive runs in-process.

pub mod config;
pub mod episode_io;
pub mod plot;
pub mod runner;
pub mod svg;
