pub mod bicombing;
pub mod cache;
pub mod chain;
pub mod constants;
pub mod error;
pub mod group;
pub mod metric;
mod normal_form;
pub mod par;
pub mod probes;
pub mod sampling;
pub mod table;
pub mod verify;

pub use error::{Error, Result};
pub use group::{GeneratorSet, GroupElement, GroupKind, GroupModel, Letter};
