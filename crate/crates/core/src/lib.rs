pub mod autodiff;
pub mod checkpoint;
pub mod datasets;
pub mod encoder;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod masks;
pub mod metrics;
pub mod objectives;
pub mod optim;
pub mod pairs;
pub mod rng;
pub mod scalar;
pub mod sparse;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Graph = graph::Graph<f64>;
pub type Dataset = datasets::Dataset<f64>;
pub type Tape = autodiff::Tape<f64>;
pub type ParamStore = autodiff::ParamStore<f64>;
pub type MaskSet = masks::MaskSet<f64>;
pub type Explanations = masks::Explanations<f64>;
pub type Model = trainer::Model<f64>;
pub type RunArtifacts = trainer::RunArtifacts<f64>;
pub type Checkpoint = checkpoint::Checkpoint<f64>;
