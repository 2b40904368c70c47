//! Learned genetic algorithms: attention-parametrized genetic operators,
//! baseline GAs, a BBOB-style task suite and the evolution-strategy outer
//! loop that meta-trains operator weights.

pub mod attention;
pub mod bbob;
pub mod engine;
pub mod error;
pub mod features;
pub mod harness;
pub mod meta;
pub mod operators;
pub mod problem;
pub mod rng;
pub mod synthetic;

pub use attention::{multi_head_sdpa, row_softmax, sdpa, Matrix};
pub use bbob::{sample_task, BbobFunction, TaskFamily, TaskSpec};
pub use engine::{
    run, run_with_init, CrossoverSlot, GaConfig, GaState, Init, MraSlot, SamplingSlot, SelectionSlot, Trajectory,
};
pub use error::{Error, Result};
pub use meta::{meta_train, MetaConfig, MetaEsState, MetaObjective};
pub use operators::{LgaConfig, LgaParams, ParentArchive, Population};
pub use problem::{FnObjective, Objective, Problem};
pub use synthetic::MlpTask;
