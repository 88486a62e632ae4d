//! Learning linear multiclass classifiers from labels corrupted by a known
//! class-conditional noise process.
//!
//! The crate is `no_std` (it needs `alloc`) and carries only the numerical
//! pieces: small dense linear algebra, the dataset/model/confusion types,
//! the seeded synthetic generators, the UMA learner, the perceptron
//! baseline, evaluation metrics and the sample-size bound calculator. File
//! formats, the experiment harness and the command line live in the
//! `unconfused` crate.
//!
//! Conventions used everywhere in this crate:
//!
//! * class indices are **0-based** (`0..q`); file formats and user-facing
//!   messages shift them to `1..=q`.
//! * confusion matrices are **column-stochastic**: entry `[p][q]` is the
//!   probability that a point whose true class is `q` carries the observed
//!   label `p`.
//! * a [`LinearModel`] stores its weights as a `d × Q` matrix whose column
//!   `q` is the prototype `w_q`; prediction is the argmax of `⟨w_q, x⟩` with
//!   ties broken towards the lowest class index.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod bounds;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod perceptron;
pub mod problem;
pub mod rng;
pub mod synth;
pub mod uma;

pub use error::{Error, Result};
pub use linalg::{DenseMatrix, DenseVector};
pub use problem::{
    ConfusionMatrix, ConfusionReport, LabelSource, LabeledDataset, LabeledExample, LinearModel,
};
pub use rng::RngStream;
