//! Space-time video super-resolution built around selective state-space
//! scans.
//!
//! The crate is layered bottom-up:
//!
//! * [`tensor`]: dense tensors and a reverse-mode gradient tape.
//! * [`ssm`]: the selective scan (sequential, chunked-parallel and taped).
//! * [`sequencing`]: scan orders, register tokens and rotary spatial codes.
//! * [`nn`]: feature extraction, the global fusion pyramid, temporal
//!   refinement, the register/rotary Mamba block, multiscale alignment and
//!   reconstruction.
//! * [`model`], [`train`]: the assembled network, optimiser and training loop.
//! * [`data`], [`metrics`], [`eval`]: clip preparation, PSNR/SSIM and reports.

pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod par;
pub mod sequencing;
pub mod ssm;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Scalar, Tape, Tensor, Var};
