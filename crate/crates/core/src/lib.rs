//! Box-embedding concept spaces with modality projection heads, image-text
//! matching and a symbolic VQA executor.
//!
//! Concepts live as axis-aligned boxes in a shared knowledge space. The space
//! is fitted to observed entailment probabilities; encoders then map vision
//! or text inputs to boxes in the same space, where entailment against the
//! concept boxes gives attribute and category predictions.

pub mod boxes;
pub mod cli;
pub mod datagen;
pub mod error;
pub mod math;
pub mod metrics;
pub mod multimodal;
pub mod optim;
pub mod projection;
pub mod rng;
pub mod store;
pub mod trainer;
pub mod vqa;

pub use boxes::{BoxEmbedding, GlobalExtrema, KnowledgeSpaceConfig};
pub use error::{Error, Result};
pub use store::{ConceptId, ConceptSpace, Vocabulary};
