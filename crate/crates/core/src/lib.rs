pub mod bench;
pub mod fespace;
pub mod forms;
pub mod material;
pub mod mesh2d;
pub mod solver;
