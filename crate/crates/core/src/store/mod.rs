//! Concept vocabulary, ground-truth statistics, negative sampling and
//! concept-space persistence.

pub mod dataset;
pub mod negatives;
pub mod space;
pub mod stats;
pub mod vocab;

pub use dataset::{AnnotatedSample, Dataset, DatasetHeader, FamilyDecl};
pub use negatives::{sample_negatives, NegativePolicy};
pub use space::{ConceptSpace, SPACE_FORMAT_VERSION};
pub use stats::{EntailmentTargets, GroundTruthStats, PairRow, PairTable};
pub use vocab::{build_vocabulary, Concept, ConceptDecl, ConceptId, ConceptKind, Vocabulary};
