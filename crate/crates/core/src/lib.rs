//! Polar coding over binary-input memoryless channels when the successive
//! cancellation decoder runs on a metric channel `V` that may differ from
//! the true channel `W`.
//!
//! * [`channel`]: channels in `(q, Δ)` form and their matched parameters.
//! * [`mismatch`]: `(W, V)` pairs and the mismatched parameters.
//! * [`polarize`]: exact polar transforms with letter merging.
//! * [`construct`]: information sets and the lower-bound ledger.
//! * [`codec`]: encoder and (mismatched) SC decoder.
//! * [`montecarlo`]: block-error simulation and path sampling.

pub mod channel;
pub mod codec;
pub mod mismatch;
pub mod montecarlo;
pub mod construct;
mod numeric;
pub mod polarize;

pub use channel::{make_channel, Bdmc, ChannelError, ChannelSpec, MatchedParams, OutputSymbol};
pub use mismatch::{pair, ChannelPair, ExtReal, MismatchError, MismatchParams, PairSymbol};
pub use numeric::{binary_divergence, binary_entropy};
pub use polarize::{index_of, signs_of, PolarizeError, Sign, SignSequence, SynthesisBudget};
pub use construct::{
    info_set_matched, info_set_mismatched, lower_bound_family, BoundLedger, ConstructError,
    PolarCode, Rule, Selector,
};
pub use codec::{
    encode, genie_per_bit_error, sc_decode, CodecError, DecoderMetric, GenieEstimate, GenieMode,
    ScDecoder, TiePolicy,
};
pub use montecarlo::{
    sample_paths, simulate_block_error, PolarizationTrace, SimReport, TraceThresholds,
};
