pub mod geometry;
pub mod graph;
pub mod linalg;
pub mod assembly;
pub mod rng;
pub mod sim;
pub mod io;
pub mod select;
pub mod solver;
pub mod budget;
