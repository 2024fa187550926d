//! A toy data-parallel language model used to check that the exchange
//! paths preserve learning.

mod config;
mod model;
mod run;

pub use config::{CorpusSource, TrainerConfig};
pub use model::{compression_ratio, evaluate, init_table, mean_embedding, step_gradients, MetricsRecord, StepGradients};
pub use run::{split, train, EpochSummary, TrafficBreakdown, TrainOutcome, TrainReport, INPUT_LABEL, OUTPUT_LABEL};
