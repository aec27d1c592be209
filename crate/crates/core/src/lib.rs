//! Two-layer MLPs for modular arithmetic over GF(p).
//!
//! The crate builds closed-form weights that solve multi-term modular
//! addition, modular multiplication and arbitrary two-variable polynomials,
//! checks them against exact finite-field oracles, measures their Fourier
//! concentration, and trains the same architecture from scratch.

pub mod analytic;
pub mod composite;
pub mod error;
pub mod gf;
pub mod net;
pub mod seed;
pub mod spectral;
pub mod trainer;

pub use analytic::{
    build_addition_solution, build_addition_solution_with, build_multiplication_solution,
    build_multiplication_solution_with, Amplitude, FrequencyMode, NeuronAssignment,
};
pub use composite::{build_composite, CompositeEval, CompositeNet, EvalScope, Gating, DEFAULT_BETA};
pub use error::{FieldError, NetError, SpectralError};
pub use gf::{ComposedTask, FieldContext, ModPolynomial, Monomial, SumTask, TaskOracle};
pub use net::{accuracy, argmax, NetKind, TwoLayerNet};
pub use seed::derive_seed;
pub use spectral::{ipr, network_ipr, IprReport, SpectrumMode};
pub use trainer::{
    generate_dataset, gradient_check, init_network, split, Dataset, DecayMode, MetricSeries, TrainConfig,
    TrainError, Trainer,
};
