//! Earth-observation satellite scheduling with dynamic task clustering.

pub mod annealer;
pub mod baselines;
pub mod bench;
pub mod clustering;
pub mod model;
pub mod neighborhoods;
pub mod oracle;
pub mod scenario;
pub mod tabu;
