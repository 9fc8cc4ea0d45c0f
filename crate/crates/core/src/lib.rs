pub mod adversary;
pub mod bounds;
pub mod certification;
pub mod classifier;
pub mod concentration;
pub mod error;
pub mod experiments;
pub mod quantum;
pub mod sampling;
