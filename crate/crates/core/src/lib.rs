//! Text classification over per-document word co-occurrence graphs.

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod fusion;
pub mod graph;
pub mod layers;
pub mod metrics;
pub mod model;
pub mod synth;
pub mod tensor;
pub mod textpipe;
pub mod train;

pub use checkpoint::Checkpoint;
pub use config::RunConfig;
pub use error::{Error, Result};
pub use graph::{GraphConfig, TextGraph};
pub use metrics::{ConfusionMatrix, MetricsReport};
pub use model::{LayerKind, ModalitySpec, Mode, Model, ModelConfig, ModelParams, Sample};
pub use tensor::{Scalar, Tensor};
pub use textpipe::{Document, Preprocessor, StopwordList, Vocabulary};
pub use train::{TrainConfig, Trainer};
