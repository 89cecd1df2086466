//! Concentration arithmetic, sequencing graphs, reconstruction and
//! conformance.

pub mod cf;
pub mod conformance;
pub mod reconstruct;
pub mod sg;

pub use cf::{cf_mix, round_cf, CfVector, ReagentUniverseMismatch};
pub use conformance::{conformance, ConformOptions};
pub use reconstruct::{reconstruct, reconstruct_incremental, ReconstructError, Reconstructor};
pub use sg::{parse_sg, NodeKind, SeqGraph, SgError, SgNode};
