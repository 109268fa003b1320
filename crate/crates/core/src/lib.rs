//! Block relevance scoring, block reduction and knowledge distillation for a
//! small message-passing interatomic potential.
//!
//! The crate is `no_std` (with `alloc`). Everything here is pure computation:
//! the reverse-mode tape, the Lennard-Jones data generator, the model,
//! GradCAM block relevance, checkpoint surgery, the training loops and the
//! analytic FLOP/parameter accounting. File formats, wall-clock benchmarking
//! and the command line live in the `blockprune` crate.

#![no_std]

extern crate alloc;

pub mod data;
pub mod error;
pub mod flops;
pub mod model;
pub mod relevance;
pub mod rng;
pub mod stats;
pub mod surgery;
pub mod tape;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
