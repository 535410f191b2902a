pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod fields;
pub mod lifespan;
pub mod lp_besov;
pub mod model;
pub mod presets;
pub mod solver;
pub mod verify;
