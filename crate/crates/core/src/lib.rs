pub mod analysis;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod gradcheck;
pub mod kb;
pub mod kv;
pub mod lstm;
pub mod mention;
pub mod models;
pub mod probing;
pub mod tape;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
