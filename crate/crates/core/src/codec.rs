//! Encoder `x = u B_N F^{⊗n}` and the successive cancellation decoder.
//!
//! The decoder works on log-likelihood ratios `λ = ln(V(y|0)/V(y|1))`.
//! Minus nodes combine with `λ₁ ⊞ λ₂ = 2 atanh(tanh(λ₁/2) tanh(λ₂/2))`,
//! plus nodes with `(−1)^{û}λ₁ + λ₂`. Outputs the metric channel cannot
//! produce under either input carry `λ = NaN`, which is read as a tie and
//! propagates.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::channel::Bdmc;
use crate::construct::PolarCode;
pub use crate::numeric::boxplus;
use crate::numeric::{llr_of, snapped_sum, CompensatedSum};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("expected {expected} bits, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("received word has {got} symbols but the code length is {expected}")]
    BlockLength { expected: usize, got: usize },
    #[error("output symbol {symbol} is outside an alphabet of size {size}")]
    AlphabetMismatch { symbol: usize, size: usize },
    #[error("true and metric channels have alphabets of size {w} and {v}")]
    ChannelAlphabets { w: usize, v: usize },
    #[error("exact enumeration needs about 2^{log2_work:.1} decoder runs")]
    ExactInfeasible { log2_work: f64 },
}

/// Applies `F^{⊗n}` in place over GF(2).
pub fn polar_transform(v: &mut [u8]) {
    let n = v.len();
    debug_assert!(n.is_power_of_two());
    let mut h = 1;
    while h < n {
        for block in v.chunks_mut(2 * h) {
            let (a, b) = block.split_at_mut(h);
            for (x, y) in a.iter_mut().zip(b.iter()) {
                *x ^= *y;
            }
        }
        h *= 2;
    }
}

#[inline]
fn bitrev(k: usize, n: usize) -> usize {
    if n == 0 {
        0
    } else {
        k.reverse_bits() >> (usize::BITS as usize - n)
    }
}

/// `x = u B_N F^{⊗n}` for a full input vector `u` of length `2^n`.
pub fn encode_raw(u: &[u8], n: usize) -> Vec<u8> {
    let mut t = u.to_vec();
    polar_transform(&mut t);
    (0..t.len()).map(|k| t[bitrev(k, n)]).collect()
}

/// Places the message on the information set and the frozen values
/// elsewhere.
pub fn assemble(code: &PolarCode, message: &[u8]) -> Result<Vec<u8>, CodecError> {
    if message.len() != code.k() {
        return Err(CodecError::LengthMismatch {
            expected: code.k(),
            got: message.len(),
        });
    }
    let mut u = code.frozen_bits();
    for (&i, &b) in code.info_set.iter().zip(message) {
        u[(i - 1) as usize] = b & 1;
    }
    Ok(u)
}

pub fn encode(code: &PolarCode, message: &[u8]) -> Result<Vec<u8>, CodecError> {
    Ok(encode_raw(&assemble(code, message)?, code.n))
}

/// How the decoder settles `λ = 0` (or undefined).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TiePolicy {
    /// A fair coin from the caller's generator.
    #[default]
    FairCoin,
    /// Always decide 0.
    DeterministicZero,
}

/// Leaf log-likelihood ratios of the metric channel, one per output symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderMetric {
    llr: Vec<f64>,
}

impl DecoderMetric {
    pub fn new(v: &Bdmc) -> Self {
        let llr = v
            .symbols()
            .iter()
            .map(|s| {
                if s.q > 0.0 {
                    llr_of(s.delta)
                } else {
                    f64::NAN
                }
            })
            .collect();
        Self { llr }
    }

    pub fn alphabet(&self) -> usize {
        self.llr.len()
    }

    pub fn llr(&self, y: usize) -> f64 {
        self.llr[y]
    }

    fn leaves(&self, received: &[usize], n: usize, out: &mut [f64]) -> Result<(), CodecError> {
        for (k, slot) in out.iter_mut().enumerate() {
            let y = received[bitrev(k, n)];
            *slot = *self.llr.get(y).ok_or(CodecError::AlphabetMismatch {
                symbol: y,
                size: self.llr.len(),
            })?;
        }
        Ok(())
    }
}

/// One decision of the decoder, in index order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BitDecision {
    /// Combined metric ratio at the decision.
    pub llr: f64,
    /// The bit fed back to later stages.
    pub bit: u8,
    pub frozen: bool,
    /// Whether the metric could not tell 0 from 1.
    pub tie: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub message: Vec<u8>,
    /// Full estimate of `u`, frozen positions included.
    pub u: Vec<u8>,
    pub trace: Vec<BitDecision>,
}

#[inline]
fn is_tie(llr: f64) -> bool {
    llr == 0.0 || llr.is_nan()
}

/// Reusable SC decoder for one block length.
#[derive(Debug, Clone)]
pub struct ScDecoder {
    n: usize,
    leaves: Vec<f64>,
    scratch: Vec<f64>,
    bits: Vec<u8>,
}

impl ScDecoder {
    pub fn new(n: usize) -> Self {
        let len = 1usize << n;
        Self {
            n,
            leaves: vec![0.0; len],
            scratch: vec![0.0; len],
            bits: vec![0; len],
        }
    }

    /// Runs the decoder; `decide(i, λ)` returns the bit fed back at
    /// 0-based position `i`.
    fn run<F>(&mut self, metric: &DecoderMetric, received: &[usize], decide: &mut F) -> Result<(), CodecError>
    where
        F: FnMut(usize, f64) -> u8,
    {
        let len = 1usize << self.n;
        if received.len() != len {
            return Err(CodecError::BlockLength {
                expected: len,
                got: received.len(),
            });
        }
        metric.leaves(received, self.n, &mut self.leaves)?;
        recurse(&self.leaves, &mut self.scratch, &mut self.bits, 0, decide);
        Ok(())
    }

    /// Decodes `received` with the metric, resolving ties per `policy`.
    pub fn decode<R: Rng + ?Sized>(
        &mut self,
        code: &PolarCode,
        metric: &DecoderMetric,
        received: &[usize],
        policy: TiePolicy,
        rng: &mut R,
    ) -> Result<Decoded, CodecError> {
        let mask = code.info_mask();
        let frozen = code.frozen_bits();
        let mut trace = Vec::with_capacity(mask.len());
        self.run(metric, received, &mut |i, llr| {
            let tie = is_tie(llr);
            let bit = if !mask[i] {
                frozen[i]
            } else if llr > 0.0 {
                0
            } else if llr < 0.0 {
                1
            } else {
                match policy {
                    TiePolicy::FairCoin => rng.gen::<bool>() as u8,
                    TiePolicy::DeterministicZero => 0,
                }
            };
            trace.push(BitDecision {
                llr,
                bit,
                frozen: !mask[i],
                tie,
            });
            bit
        })?;
        let u: Vec<u8> = trace.iter().map(|d| d.bit).collect();
        let message = code.info_set.iter().map(|&i| u[(i - 1) as usize]).collect();
        Ok(Decoded { message, u, trace })
    }

    /// Genie-aided pass: the true `u` is fed back at every stage; returns
    /// the per-index error indicator, `½` on ties.
    pub fn genie_errors(
        &mut self,
        metric: &DecoderMetric,
        received: &[usize],
        u: &[u8],
        out: &mut [f64],
    ) -> Result<(), CodecError> {
        self.run(metric, received, &mut |i, llr| {
            out[i] = if is_tie(llr) {
                0.5
            } else if (llr < 0.0) != (u[i] == 1) {
                1.0
            } else {
                0.0
            };
            u[i]
        })
    }
}

/// Natural-order SC recursion on bit-reversed leaves; writes the re-encoded
/// partial sums of this subtree into `bits`.
fn recurse<F>(llr: &[f64], scratch: &mut [f64], bits: &mut [u8], offset: usize, decide: &mut F)
where
    F: FnMut(usize, f64) -> u8,
{
    let len = llr.len();
    if len == 1 {
        bits[0] = decide(offset, llr[0]);
        return;
    }
    let h = len / 2;
    let (child, rest) = scratch.split_at_mut(h);
    let (lo, hi) = llr.split_at(h);
    for j in 0..h {
        child[j] = boxplus(lo[j], hi[j]);
    }
    let (xa, xb) = bits.split_at_mut(h);
    recurse(child, rest, xa, offset, decide);
    for j in 0..h {
        let a = if xa[j] == 0 { lo[j] } else { -lo[j] };
        child[j] = snapped_sum(a, hi[j]);
    }
    recurse(child, rest, xb, offset + h, decide);
    for j in 0..h {
        xa[j] ^= xb[j];
    }
}

/// One-shot decode with a fresh decoder.
pub fn sc_decode<R: Rng + ?Sized>(
    code: &PolarCode,
    metric: &Bdmc,
    received: &[usize],
    policy: TiePolicy,
    rng: &mut R,
) -> Result<Decoded, CodecError> {
    ScDecoder::new(code.n).decode(code, &DecoderMetric::new(metric), received, policy, rng)
}

/// Draws outputs of a channel given its input.
#[derive(Debug, Clone)]
pub struct ChannelSampler {
    rows: [WeightedIndex<f64>; 2],
}

impl ChannelSampler {
    pub fn new(w: &Bdmc) -> Self {
        let (w0, w1) = w.rows();
        let row = |r: &[f64]| WeightedIndex::new(r).expect("stochastic rows have positive mass");
        Self {
            rows: [row(&w0), row(&w1)],
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, x: u8, rng: &mut R) -> usize {
        self.rows[(x & 1) as usize].sample(rng)
    }

    pub fn transmit<R: Rng + ?Sized>(&self, x: &[u8], rng: &mut R, out: &mut Vec<usize>) {
        out.clear();
        out.extend(x.iter().map(|&b| self.sample(b, rng)));
    }
}

/// Per-index genie-aided error estimates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenieEstimate {
    /// Error probability of each index, in index order.
    pub per_index: Vec<f64>,
    /// `true` for exhaustive enumeration, `false` for sampling.
    pub exact: bool,
    /// Sampled blocks when not exact.
    pub trials: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenieMode {
    /// Exhaustive enumeration or [`CodecError::ExactInfeasible`].
    Exact,
    /// Monte Carlo with per-trial generator streams.
    Sampled { trials: u64, seed: u64 },
    /// Exact when feasible, otherwise sampled.
    Auto { trials: u64, seed: u64 },
}

/// Largest enumeration, in decoder runs, accepted by exact mode.
pub const EXACT_GENIE_LIMIT: f64 = (1u64 << 26) as f64;

/// Genie-aided per-index error of SC decoding with metric `V` over `W`.
///
/// Every `u` is equally likely, frozen positions included: the synthetic
/// channels average over them.
pub fn genie_per_bit_error(
    n: usize,
    w: &Bdmc,
    v: &Bdmc,
    mode: GenieMode,
) -> Result<GenieEstimate, CodecError> {
    if w.len() != v.len() {
        return Err(CodecError::ChannelAlphabets {
            w: w.len(),
            v: v.len(),
        });
    }
    let len = 1usize << n;
    let support = |row: &[f64]| row.iter().filter(|&&p| p > 0.0).count() as f64;
    let (w0, w1) = w.rows();
    let log2_work = len as f64 * (1.0 + support(&w0).max(support(&w1)).log2());
    let feasible = log2_work <= EXACT_GENIE_LIMIT.log2();
    match mode {
        GenieMode::Exact if !feasible => Err(CodecError::ExactInfeasible { log2_work }),
        GenieMode::Exact => Ok(genie_exact(n, w, v)),
        GenieMode::Auto { .. } if feasible => Ok(genie_exact(n, w, v)),
        GenieMode::Sampled { trials, seed } | GenieMode::Auto { trials, seed } => {
            Ok(genie_sampled(n, w, v, trials, seed))
        }
    }
}

fn genie_exact(n: usize, w: &Bdmc, v: &Bdmc) -> GenieEstimate {
    let len = 1usize << n;
    let metric = DecoderMetric::new(v);
    let (w0, w1) = w.rows();
    let support: [Vec<(usize, f64)>; 2] = [&w0, &w1].map(|row| {
        row.iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(y, &p)| (y, p))
            .collect()
    });
    let per_u: Vec<Vec<f64>> = (0..1u64 << len)
        .into_par_iter()
        .map(|bits| {
            let u: Vec<u8> = (0..len).map(|i| ((bits >> i) & 1) as u8).collect();
            let x = encode_raw(&u, n);
            let letters: Vec<&[(usize, f64)]> = x.iter().map(|&b| support[b as usize].as_slice()).collect();
            let mut acc = vec![CompensatedSum::new(); len];
            let mut dec = ScDecoder::new(n);
            let mut digits = vec![0usize; len];
            let mut y = vec![0usize; len];
            let mut errs = vec![0.0; len];
            loop {
                let mut weight = 1.0;
                for k in 0..len {
                    let (sym, p) = letters[k][digits[k]];
                    y[k] = sym;
                    weight *= p;
                }
                dec.genie_errors(&metric, &y, &u, &mut errs).expect("alphabets checked");
                for (a, e) in acc.iter_mut().zip(&errs) {
                    if *e != 0.0 {
                        a.add(weight * e);
                    }
                }
                // mixed-radix increment over the supports
                let mut k = 0;
                while k < len {
                    digits[k] += 1;
                    if digits[k] < letters[k].len() {
                        break;
                    }
                    digits[k] = 0;
                    k += 1;
                }
                if k == len {
                    break;
                }
            }
            acc.iter().map(|a| a.value()).collect()
        })
        .collect();
    let scale = 0.5f64.powi(len as i32);
    let per_index = (0..len)
        .map(|i| per_u.iter().map(|row| row[i]).collect::<CompensatedSum>().value() * scale)
        .collect();
    GenieEstimate {
        per_index,
        exact: true,
        trials: 0,
    }
}

/// Generator for stream `stream` of a seeded run.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn genie_sampled(n: usize, w: &Bdmc, v: &Bdmc, trials: u64, seed: u64) -> GenieEstimate {
    let len = 1usize << n;
    let metric = DecoderMetric::new(v);
    let sampler = ChannelSampler::new(w);
    const CHUNK: u64 = 256;
    let chunks: Vec<Vec<f64>> = (0..trials.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut dec = ScDecoder::new(n);
            let mut sums = vec![0.0; len];
            let mut errs = vec![0.0; len];
            let mut y = Vec::with_capacity(len);
            for t in c * CHUNK..((c + 1) * CHUNK).min(trials) {
                let mut rng = stream_rng(seed, t);
                let u: Vec<u8> = (0..len).map(|_| rng.gen::<bool>() as u8).collect();
                sampler.transmit(&encode_raw(&u, n), &mut rng, &mut y);
                dec.genie_errors(&metric, &y, &u, &mut errs).expect("alphabets checked");
                for (s, e) in sums.iter_mut().zip(&errs) {
                    *s += e;
                }
            }
            sums
        })
        .collect();
    let per_index = (0..len)
        .map(|i| chunks.iter().map(|c| c[i]).sum::<f64>() / trials.max(1) as f64)
        .collect();
    GenieEstimate {
        per_index,
        exact: false,
        trials,
    }
}
