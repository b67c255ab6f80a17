//! Multi-objective feature selection by evolutionary multitasking.
//!
//! The pipeline removes class-irrelevant features, formulates auxiliary
//! tasks over reduced search spaces (ranking masks and feature-cluster
//! weights), evolves every task with its own competitive swarm solver and
//! exchanges task-specific knowledge between them whenever the search
//! stagnates. The result is a Pareto set trading balanced classification
//! error against the number of selected features.
//!
//! ```no_run
//! use fsemt::dataset::generate_synthetic;
//! use fsemt::experiment::{run_experiment, RunConfig};
//!
//! let (data, _planted) = generate_synthetic(200, 1000, 10, 3, 2.0, 7).unwrap();
//! let config = RunConfig { outer_folds: 2, max_iter: 50, ..RunConfig::default() };
//! let report = run_experiment(&data, &config).unwrap();
//! println!("best accuracy {:.3}", report.summary.best_acc);
//! ```

pub mod clustering;
pub mod dataset;
pub mod evaluation;
pub mod experiment;
pub mod filtering;
pub mod multitask;
pub mod relevance;
pub mod rng;
pub mod search;

pub use dataset::{DataError, Dataset, FoldPlan, LabelColumn};
pub use evaluation::{Individual, ObjectiveVector};
pub use experiment::{run_experiment, RunConfig, RunReport};
