pub mod cli;
pub mod dynamics;
pub mod error;
pub mod flows;
pub mod io;
pub mod linalg;
pub mod marked;
pub mod operators;
pub mod spectral;
pub mod tree;
pub mod verify;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
