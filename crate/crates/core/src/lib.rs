//! Spacecraft lifetime modeling: data preparation, a closed-form growth-trend fit that
//! corrects for right censoring, a two-stage recurrent model, a regression benchmark,
//! hyperparameter search and what-if scenarios.

pub mod benchmark;
pub mod dataset;
pub mod features;
pub mod neuralnet;
pub mod scenario;
pub mod hypertune;
pub mod seeds;
pub mod steti;
pub mod synthetic;
