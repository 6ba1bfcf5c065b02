pub mod ensemble;
pub mod error;
pub mod fem;
pub mod gaussian;
pub mod graph;
pub mod harness;
pub mod linalg;
pub mod map;
pub mod rate;
pub mod spectral;
pub mod weighted;
