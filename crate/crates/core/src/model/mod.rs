//! Coefficient fields `b`, `Q`, the continuity modulus φ and the assumption checks.

pub mod fields;
pub mod modulus;
pub mod registry;
pub mod validate;

pub use fields::{DriftEval, DriftField, ModelSpec, NoiseEval, NoiseField, NoiseOperator};
pub use modulus::{dini_integral, DiniIntegral, DiniModulus, ModulusCertificate, ModulusFamily};
pub use registry::{build as build_model, ModelParams, MODEL_NAMES};
pub use validate::{validate_assumptions, Clause, ClauseReport, ValidationReport, Witness};
