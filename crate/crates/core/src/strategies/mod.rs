//! Replay baselines: maximally interfered retrieval, averaged gradient
//! episodic memory, and augmentation.

mod agem;
mod augment;
mod mir;

pub use agem::{agem_project, AGEM_REF_SIZE};
pub use augment::{augment, AugmentPolicy};
pub use mir::{mir_retrieve, mir_select, MIR_CANDIDATES};
