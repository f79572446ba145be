//! Steady states of `N` strongly competing predator groups sharing one
//! prey on Neumann boxes, their continuation in the competition strength,
//! and numerical checks of the segregation-limit estimates.

pub mod analysis;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod model;
pub mod solver;
pub mod verify;
