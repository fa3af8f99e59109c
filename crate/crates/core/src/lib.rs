//! Meta-learned prior populations for few-shot quality-diversity search.
//!
//! A prior population of genomes is evolved so that, when used to seed a
//! novelty-driven QD run on a new task, solutions appear in few generations.
//! The crate ships the evolutionary building blocks, the outer meta loop,
//! a deceptive-maze navigation environment, a grid bandit used to compare
//! meta-objectives, and an orchestrator driving training and evaluation.

pub mod error;
pub mod evo;
pub mod genome;
pub mod grid;
pub mod lineage;
pub mod maze;
pub mod meta;
pub mod orchestrator;
pub mod qd;
pub mod rng;

pub use error::{Error, Result};
pub use genome::{Bounds, Genome, Mutate, MutationConfig, NetworkShape, Policy};
pub use meta::{MetaConfig, MetaScore, ObjectiveMode, PriorPopulation};
pub use qd::{QdConfig, QdOutcome, Task};
