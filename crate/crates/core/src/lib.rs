pub mod geometry;
pub mod harness;
pub mod polysolve;
pub mod minimal_solver;
pub mod root_gate;
pub mod selection;
pub mod synth;
