//! Nuisance estimation: random Fourier features with ridge or logistic heads, batch and streaming.

mod fit;
mod models;
mod rff;
mod stream;

pub use fit::{
    as_nuisance, component_specs, detect_binary_x, fit_nuisance, ComponentSpec, FitConfig, FittedModel,
    FittedNuisance, ModelDoc, NuisanceDoc, Response, StreamConfig, StreamingNuisance, Updater,
};
pub use models::{logistic_fit, ridge_fit, LogisticModel, RidgeModel};
pub use rff::{median_heuristic, rff_fit, Gamma, RffMap};
pub use stream::{
    logistic_sgd_step, ridge_sgd_step, sgd_step, StreamFitState, StreamModel, DEFAULT_MINIBATCH, DEFAULT_STEP_SCALE,
};
