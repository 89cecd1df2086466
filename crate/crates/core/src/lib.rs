//! Verification of digital-microfluidic actuation programs.
//!
//! The pipeline parses a `.dmf` program ([`isa`]), steps it on a symbolic
//! chip model ([`chip`]) while checking fluidic rules ([`fluidics`]) and,
//! optionally, shared-pin rules ([`pins`]). A clean trace is rebuilt into a
//! sequencing graph and compared against the intended protocol ([`graph`]).
//! Programs with detectors and recovery routines are expanded into every
//! execution path first ([`branches`]).

pub mod branches;
pub mod chip;
pub mod diag;
pub mod fluidics;
pub mod graph;
pub mod inject;
pub mod isa;
pub mod pins;
pub mod render;
