//! Experiment harness around the estimation core: configuration files,
//! CSV/JSON/SVG serialization, and the seeded study runners behind the
//! `reachpac` command-line interface.

pub mod config;
pub mod experiments;
pub mod io;
pub mod svg;
