//! Rigid residue frames for protein backbones.
//!
//! Covers SO(3) primitives, isotropic Gaussian sampling on SO(3), backbone
//! frame extraction, inertial canonicalization, paired-view construction and
//! rigid flow-matching targets.

pub mod backbone;
pub mod canonicalize;
pub mod flowmatch;
pub mod igso3;
pub mod interop;
pub mod so3;
pub mod synth;
pub mod views;
