mod binio;
pub mod dmm;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod learn;
pub mod motion;
pub mod neural;
pub mod pipeline;
pub mod videoio;

pub use error::{Error, Result};
pub use grid::{Grid, RgbImage};
