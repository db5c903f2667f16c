pub mod ablate;
pub mod build_dataset;
pub mod clean;
pub mod convert;
pub mod eval;
pub mod label;
pub mod llm;
pub mod stats;
pub mod train;
