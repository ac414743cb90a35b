pub mod dynamics;
pub mod integrate;
pub mod linalg;
pub mod monitor;
pub mod problem;
