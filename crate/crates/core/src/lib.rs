//! Fuzzy symbolic knowledge bases built from black-box predictions.

pub mod dataset;
pub mod error;
pub mod fuzzy_rough;
pub mod granulation;
pub mod prediction;
pub mod query;
pub mod rulebase;
pub mod synthetic;

pub use error::{Error, Result};
