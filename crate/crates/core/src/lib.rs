//! Simulation toolkit for interest-disclosing ad APIs.
//!
//! The pipeline: a topic [`taxonomy`], a [`classification`] of domains into
//! topics, synthetic browsing [`population`]s, the API mechanism itself in
//! [`simulator`], and the adversary side in [`denoiser`] and
//! [`reidentifier`]. [`filter`] reproduces the browser's model-output filter
//! and [`analytics`] holds the closed-form results.

pub mod analytics;
pub mod classification;
pub mod denoiser;
pub mod error;
pub mod filter;
pub mod population;
pub mod reidentifier;
pub mod rng;
pub mod simulator;
pub mod taxonomy;
pub mod world;

pub use error::{Error, Result};
pub use taxonomy::{Taxonomy, TopicId};
