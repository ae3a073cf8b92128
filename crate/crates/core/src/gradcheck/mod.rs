//! Central finite-difference checks of tape gradients.

mod harness;
mod suite;

pub use harness::{check_function, randn, CheckReport, Tolerance};
pub use suite::{ablation_variants, block_net, run_all, run_blocks, run_primitives, SuiteConfig};
