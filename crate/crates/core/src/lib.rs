//! Volume-preserving hyperelastic FEM on tetrahedral meshes.
//!
//! The library simulates nearly incompressible soft solids by combining a
//! deviatoric elastic energy with explicit volume-preservation constraints
//! over user-chosen element zones, a tunable per-element compression
//! penalty, and an optional surface (epidermis) area-preservation energy.
//! Statics are solved by an augmented-Lagrangian Newton method; dynamics use
//! implicit Euler on the incremental potential.

pub mod constraints;
pub mod energy;
pub mod math;
pub mod mesh;
pub mod scenario;
pub mod solver;
pub mod sparse;
pub mod zoning;

pub use constraints::{Zone, ZoneSet};
pub use energy::{EnergyReport, EpidermisParams, MaterialModel, MaterialParams};
pub use mesh::{Displacement, TetMesh};

