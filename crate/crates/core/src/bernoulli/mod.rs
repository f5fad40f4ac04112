//! Decompositions `T ⊂ U + V` of sets of sequences: `U` controlled by a
//! chaining functional and `V` by an `ℓ1` or weak-`ℓp` bound, together with
//! the converse constructions that rebuild partitions from such pieces.

mod converse;
mod interp;
mod pipeline;
mod pseq;
mod split;

pub use converse::{converse_l1, converse_weak_lp, ConverseL1Report, ConverseL1Result, ConverseWeakReport, Samples};
pub use interp::{contraction_check, interp_apply, ContractionReport, InterpMap, InterpOracle, MAX_DENSE, MAX_WIDTH};
pub use pipeline::{weak_lp_pipeline, WeakLpParams, WeakLpReport, WeakLpResult};
pub use pseq::{pseq_build, pseq_constant, PSeq, PSeqReport};
pub use split::{
    split_into_l1, split_into_weak_lp, weak_lp_norm, ChainMaps, L1SplitReport, SplitResult, WeakSplitReport,
};
