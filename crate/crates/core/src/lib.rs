//! Weak supervision for semantic column-type detection: labeling functions
//! generated from seed columns, filtered, and aggregated by a stacked
//! generative label model into weak training labels.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod filter;
pub mod label_model;
pub mod lf;
pub mod lfgen;
pub mod pipeline;
pub mod stacked;
pub mod synthetic;

pub use corpus::{ColumnInstance, Dataset, LabelId, LabelVocabulary};
pub use error::{Error, Result};
pub use lf::{LabelMatrix, LabelingFunction};
