#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod completion;
pub mod conv;
pub mod error;
pub mod eval;
pub mod grad;
pub mod math;
pub mod mesh;
pub mod partial;
pub mod rigid;
pub mod rng;
pub mod vae;

pub use error::{Error, Result};
