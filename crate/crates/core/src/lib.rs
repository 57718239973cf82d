pub mod config;
pub mod diffusion;
pub mod ecdf;
pub mod generate;
pub mod error;
pub mod graph;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod sampling;
pub mod selection;
pub mod embedding;
pub mod dqn;
