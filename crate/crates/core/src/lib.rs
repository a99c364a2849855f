//! Hierarchical graph attention over atom, bond, fragment and fragment
//! connection graphs, with training, checkpoints and interpretation.

pub mod checkpoint;
pub mod data;
mod error;
pub mod features;
pub mod hiergraph;
pub mod interpret;
pub mod metrics;
pub mod model;
pub mod train;

pub use checkpoint::{Checkpoint, Standardization};
pub use data::{load_csv, Dataset, Prepared, Record, Split};
pub use error::{CoreError, Result};
pub use features::FeatureConfig;
pub use interpret::{explain, Explanation, ExplainOptions};
pub use hiergraph::{build_hier_graphs, HierGraphs};
pub use model::{forward, ForwardTrace, FragNetParams, Level, ModelConfig, Task};
pub use train::{evaluate, train_model, TrainConfig};
