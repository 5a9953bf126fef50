//! Numerical audit of feature-map alignment for discretized CNNs.
//!
//! Images and feature maps live on square lattices ([`grid`]); linear image
//! transforms and their Jordan-form classes live in [`transform`]; the
//! convolution engine and continuous-CNN model in [`conv`]; generators of
//! translation-covariant operators in [`generator`]; and the executable
//! checks in [`audit`].

pub mod audit;
pub mod conv;
pub mod error;
pub mod generator;
pub mod grid;
pub mod scene;
pub mod transform;

pub use conv::{CnnModel, ConvLayer, Filter, Nonlinearity};
pub use error::{Error, Result};
pub use grid::{FeatureStack, Geometry, Grid, Norm, SupportEstimate};
pub use transform::{LinearMap2, Vec2};
