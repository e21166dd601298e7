pub mod baselines;
pub mod error;
pub mod label_space;
pub mod prototypes;
pub mod dataset;
pub mod episodic;
pub mod evaluation;
pub mod metrics;
pub mod synthgen;
pub mod trainer;
pub mod bench;
pub mod cli_io;
