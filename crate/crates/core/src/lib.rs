pub mod config;
pub mod critical;
pub mod dense;
pub mod energy;
pub mod evolution;
pub mod fast;
pub mod flow;
pub mod linalg;
pub mod pipeline;
pub mod slow;
pub mod verify;
pub use pipeline::Error;
