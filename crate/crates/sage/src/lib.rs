//! Consistency metrics for language-model outputs under paraphrase.

pub mod corpus;
pub mod digest;
pub mod embed;
pub mod analysis;
pub mod gateway;
pub mod metric;
pub mod textsim;
