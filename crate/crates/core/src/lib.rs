//! Training engine with per-layer gradient amplification.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`] and [`autograd`]: dense tensors and a dynamic graph whose
//!   backward pass honours per-node gradient transforms.
//! * [`nn`]: layer rules and model builders (MLP, small CNN, VGG, ResNet).
//! * [`amplification`]: eligible-layer groups, seeded ratio-β selection and
//!   installation of the amplification factor Γ.
//! * [`schedule`] and [`trainer`]: phased `(end_epoch, lr, β, Γ)` schedules
//!   and the SGD loop that drives them.
//! * [`data`] and [`checkpoint`]: CIFAR-10 binaries, synthetic corpora,
//!   metrics CSV and model snapshots.

pub mod amplification;
pub mod autograd;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod nn;
pub mod rng;
pub mod schedule;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::{Scalar, Tensor};
