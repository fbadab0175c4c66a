pub mod error;
pub mod eval;
pub mod gmed;
pub mod harness;
pub mod memory;
pub mod nn;
pub mod rng;
pub mod strategies;
pub mod stream;

pub use error::{Error, Result};
pub use memory::{MemorySlot, ReplayMemory, SlotRef};
pub use nn::{Classifier, GradBundle, Lookahead, Mlp, MlpParams, ParamGrads};
pub use stream::{Batch, DatasetKind, LabeledExample, LabeledSet, StreamConfig, StreamMode, TaskStream};
