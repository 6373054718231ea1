//! Cycle-consistent dense correspondences across collections of
//! near-isometric triangle meshes.
//!
//! Every shape is matched to a virtual *universe* shape twice over: once by a
//! partial permutation `P_i` (vertices to universe points) and once by a
//! semi-orthogonal functional map `C_i` (spectral basis to universe basis).
//! Pairwise correspondences `P_i P_j^T` and pairwise functional maps
//! `C_i C_j^T` are cycle-consistent by construction. The optimiser in
//! [`solver`] alternates projected updates of both stacks and never
//! decreases the objective `||U^T Phi Q||_F^2`.
//!
//! The crate is organised bottom-up:
//!
//! - [`mesh`]: OFF/PLY loading, validation, graph geodesics, diameters.
//! - [`spectral`]: cotangent Laplacian and its mass-orthonormal eigenbasis.
//! - [`descriptors`]: heat and wave kernel signatures.
//! - [`assignment`]: ε-scaling auction and a Hungarian reference solver.
//! - [`ortho`]: projection onto (semi-)orthogonal matrices.
//! - [`fmap`]: pairwise functional maps, point-wise extraction, upsampling.
//! - [`sync`]: band filtering and synchronisation into universe form.
//! - [`solver`]: objective, U/Q updates and the convergence loop.
//! - [`eval`]: geodesic error, PCK/AUC and cycle error.
//! - [`pipeline`]: end-to-end driver used by the CLI.

pub mod assignment;
pub mod bundle;
pub mod config;
pub mod descriptors;
pub mod error;
pub mod eval;
pub mod fmap;
pub mod mesh;
pub mod ortho;
pub mod pipeline;
pub mod solver;
pub mod spectral;
pub mod synth;
pub mod sync;
pub mod universe;

pub use error::{Error, Result};
pub use mesh::Shape;
pub use universe::{UniverseMaps, UniverseMatching};
