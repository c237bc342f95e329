//! Weighted dyadic sequence spaces, Muckenhoupt diagnostics and Calderón-product
//! factorizations on finite dyadic windows.

pub mod calderon;
pub mod counterexamples;
pub mod dyadic;
pub mod error;
pub mod instances;
pub mod maximal;
pub mod report;
mod quadrature;
pub mod seqspaces;
pub mod suite;
pub mod weights;

pub use dyadic::{DyadicBox, DyadicIndex, DyadicRational, LevelTable, Window};
pub use error::{Error, Result};
pub use seqspaces::{Scale, Sequence, Space, SpaceParams, YTable};
pub use weights::{CellMeasure, Weight};
