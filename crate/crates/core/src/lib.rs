pub mod geometry;
pub mod rng;
pub mod sde;
pub mod network;
pub mod expr;
pub mod homog;
pub mod oracle;
pub mod trainer;
pub mod config;
pub mod cli;
