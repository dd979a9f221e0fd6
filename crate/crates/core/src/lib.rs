//! Regularized kernel Kullback-Leibler divergence between discrete measures,
//! its Wasserstein gradient, and particle flows driven by it.

pub mod error;
pub mod flow;
pub mod kernel;
pub mod kkl;
pub mod measure;
pub mod metrics;
pub mod mmd;
pub mod spectral;
pub mod study;

pub use error::{Error, Result};
pub use flow::{objective_and_gradient, run_flow, step_size_heuristic, FlowOptions, FlowRun, FlowState, Method, Objective, OptimizerSpec, StepSize};
pub use kernel::{bandwidth_heuristic, kernel_grad1, kernel_value, BandwidthRule, KernelSpec};
pub use kkl::{
    build_joint_gram, cross_trace_nested, first_variation, kkl_alpha, kkl_alpha_grid, kkl_alpha_oracle,
    kkl_exact_nested, max_valid_mu, skewness_bound, skewness_coefficient, wasserstein_gradient, JointGram,
    KklOptions, SpectralCache,
};
pub use measure::{mix, DiscreteMeasure, TargetSpec};
pub use metrics::{energy_distance, wasserstein2};
pub use mmd::{mmd_squared, mmd_witness_gradient};
pub use spectral::{entropy_trace, loewner, psi_transfer, spectral_apply, sym_eig, EigenDecomposition, SpectralFn};
