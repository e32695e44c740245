pub mod numerics;
pub mod projections;
pub mod mirror_maps;
pub mod smoothing;
pub mod graph;
pub mod objective;
pub mod problems;
pub mod dynamics;
pub mod integrator;
pub mod diagnostics;
pub mod experiment;
pub mod verify;
