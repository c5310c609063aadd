pub mod config;
pub mod ddpm;
pub mod eval;
pub mod extract;
pub mod manifest;
pub mod perturb;
pub mod pitch;
pub mod segment;
