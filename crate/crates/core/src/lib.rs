pub mod checkpoint;
pub mod data_io;
pub mod error;
pub mod evaluation;
pub mod inner;
pub mod numerics;
pub mod outer;
pub mod pipeline;
pub mod semantic;

pub use error::{GsecError, Result};
