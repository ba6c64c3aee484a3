//! Distills an if-then knowledge base into a latent-variable mixture
//! sequence-to-sequence model, generates multi-hop reasoning paths from it,
//! and answers multiple-choice questions by scoring path endpoints.

pub mod backbone;
pub mod checkpoint;
pub mod diversity;
pub mod error;
pub mod kg;
pub mod numerics;
pub mod pipeline;
pub mod question;
pub mod reasoning;
pub mod scorer;
pub mod text;
pub mod trainer;

pub use error::{Error, Result};
