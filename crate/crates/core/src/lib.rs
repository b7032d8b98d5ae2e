//! Interactive binary segmentation with a simulated user, plus tools for
//! learning the energy parameters from interaction traces.

pub mod color;
pub mod dataset;
pub mod energy;
pub mod error;
pub mod eval;
pub mod gmm;
pub mod grid;
pub mod linesearch;
pub mod maxflow;
pub mod maxmargin;
pub mod morphology;
pub mod robot;
pub mod segment;
pub mod synthetic;

pub use error::{Error, Result};
