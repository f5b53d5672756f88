//! Dense linear algebra, diagonal Gaussians, reverse-mode gradients, Adam and
//! finite-difference gradient verification shared by every predictor.

pub mod adam;
pub mod checkpoint;
pub mod gaussian;
pub mod gradcheck;
pub mod nn;
pub mod params;
pub mod tape;
pub mod tensor;

pub use adam::{adam_step, AdamConfig};
pub use checkpoint::CheckpointFile;
pub use gaussian::{gaussian_kl, gaussian_nll, DiagGaussian, HALF_LN_2PI};
pub use gradcheck::{grad_check, relative_error, GradCheckReport, DEFAULT_STEP};
pub use nn::{mlp_forward, Activation, CellKind, Dense, DenseLayer, GaussianHead, Mlp, RecurrentCell};
pub use params::{Gradients, ParamId, ParamInit, ParamStore};
pub use tape::{Tape, Var};
pub use tensor::Tensor2;
