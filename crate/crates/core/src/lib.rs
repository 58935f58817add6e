//! Interactive imitation learning with a code-policy teacher.
//!
//! A kinematic tabletop simulator, a small JSON policy language executed as
//! the teacher, an LLM client that writes such policies, the similarity-based
//! feedback rule, a Gaussian MLP student and the training/evaluation loops.

pub mod agent;
pub mod cli;
pub mod codepolicy;
pub mod feedback;
pub mod geom;
pub mod llmgen;
pub mod rng;
pub mod sim;
pub mod trainer;
pub mod types;
