//! Countable-branch piecewise expanding interval maps: invariant densities,
//! coupling of measure families, Hofbauer towers and correlation statistics.

pub mod checks;
pub mod coupling;
pub mod error;
pub mod families;
pub mod fit;
pub mod hofbauer;
pub mod interval;
pub mod maps;
pub mod io;
pub mod measure;
pub mod repro;
pub mod stats;

pub use error::{Error, Result};
pub use interval::Interval;
pub use maps::MapModel;
