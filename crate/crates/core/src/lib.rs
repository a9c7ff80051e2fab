pub mod error;
pub mod experiments;
pub mod mcmc;
pub mod model;
pub mod numerics;
pub mod posterior;
pub mod prior;
pub mod transform;

pub use error::{Error, Result};
