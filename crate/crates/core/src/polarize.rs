//! One-step and recursive polar transforms on channel pairs.
//!
//! Both transforms act on `(q_W, Δ_W, Δ_V)` triples directly:
//!
//! * minus: `q = q₁q₂`, `Δ = Δ₁Δ₂` for both channels;
//! * plus, for each `u₁` with `s = (−1)^{u₁}`:
//!   `q = ½q₁q₂(1 + sΔ_W₁Δ_W₂)`, `Δ = (sΔ₁ + Δ₂)/(1 + sΔ₁Δ₂)`.
//!
//! Outputs are merged on their `(Δ_W, Δ_V)` key after every step so the
//! alphabet only grows with the number of distinct keys.

pub mod bec;
mod grid;

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};

use thiserror::Error;

use crate::mismatch::{canonical_order, ChannelPair, PairSymbol};
use crate::numeric::{boxplus, snapped_sum};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolarizeError {
    #[error("synthesis at depth {depth} needs {symbols} symbols, budget is {max}")]
    BudgetExceeded {
        depth: usize,
        symbols: usize,
        max: usize,
    },
    #[error("index {index} is outside 1..=2^{n}")]
    IndexOutOfRange { index: u64, n: usize },
    #[error("invalid sign character `{0}`, expected `+` or `-`")]
    BadSign(char),
}

impl PolarizeError {
    /// Depth at which a budget failure happened, if any.
    pub fn depth(&self) -> Option<usize> {
        match self {
            PolarizeError::BudgetExceeded { depth, .. } => Some(*depth),
            _ => None,
        }
    }

    fn at_depth(self, d: usize) -> Self {
        match self {
            PolarizeError::BudgetExceeded { symbols, max, .. } => PolarizeError::BudgetExceeded {
                depth: d,
                symbols,
                max,
            },
            other => other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sign {
    Minus,
    Plus,
}

impl Sign {
    pub fn as_char(self) -> char {
        match self {
            Sign::Minus => '-',
            Sign::Plus => '+',
        }
    }
}

/// A path `s₁ … sₙ` through the transform tree; `s₁` is applied first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct SignSequence(pub Vec<Sign>);

impl SignSequence {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = Sign> + '_ {
        self.0.iter().copied()
    }
}

impl fmt::Display for SignSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.0 {
            write!(f, "{}", s.as_char())?;
        }
        Ok(())
    }
}

impl FromStr for SignSequence {
    type Err = PolarizeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.chars()
            .map(|c| match c {
                '-' => Ok(Sign::Minus),
                '+' => Ok(Sign::Plus),
                other => Err(PolarizeError::BadSign(other)),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(SignSequence)
    }
}

/// `i = 1 + Σ b_j 2^{n−j}` with `b_j = 1` for a plus.
pub fn index_of(s: &SignSequence) -> u64 {
    1 + s
        .iter()
        .fold(0u64, |acc, sign| (acc << 1) | (sign == Sign::Plus) as u64)
}

/// Inverse of [`index_of`] for paths of length `n`.
pub fn signs_of(index: u64, n: usize) -> Result<SignSequence, PolarizeError> {
    let out_of_range = PolarizeError::IndexOutOfRange { index, n };
    if n >= 64 || index == 0 || index - 1 >= (1u64 << n) {
        return Err(out_of_range);
    }
    let b = index - 1;
    Ok(SignSequence(
        (0..n)
            .map(|j| {
                if (b >> (n - 1 - j)) & 1 == 1 {
                    Sign::Plus
                } else {
                    Sign::Minus
                }
            })
            .collect(),
    ))
}

/// Limits on synthesized alphabets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthesisBudget {
    /// Largest merged alphabet any node may have.
    pub max_symbols: usize,
    /// Merge tolerance on `(Δ_W, Δ_V)`; `None` keeps every product letter.
    pub merge_tol: Option<f64>,
    /// Optional LLR grid width for lossy coarse-graining, see
    /// [`ChannelPair::quantize`]. Takes precedence over `merge_tol`. In this
    /// mode `max_symbols` is a target: nodes that would exceed it are
    /// re-gridded with a doubled step instead of failing.
    pub llr_step: Option<f64>,
}

impl Default for SynthesisBudget {
    fn default() -> Self {
        Self {
            max_symbols: 1 << 20,
            merge_tol: Some(crate::channel::DEFAULT_MERGE_TOL),
            llr_step: None,
        }
    }
}

impl SynthesisBudget {
    pub fn with_tol(merge_tol: f64) -> Self {
        Self {
            merge_tol: Some(merge_tol),
            ..Self::default()
        }
    }

    /// Coarse-grained synthesis on an LLR grid of width `step`.
    pub fn quantized(step: f64) -> Self {
        Self {
            llr_step: Some(step),
            ..Self::default()
        }
    }

    /// Same limits, merging switched off.
    pub fn unmerged(self) -> Self {
        Self {
            merge_tol: None,
            llr_step: None,
            ..self
        }
    }

    pub(crate) fn tidy(&self, p: &ChannelPair) -> ChannelPair {
        if let Some(step) = self.llr_step {
            return p.quantize(step);
        }
        match self.merge_tol {
            Some(tol) => p.canonicalize(tol),
            None => {
                let mut live: Vec<PairSymbol> =
                    p.symbols().iter().copied().filter(|s| s.q > 0.0).collect();
                live.sort_by(canonical_order);
                ChannelPair::from_symbols(live)
            }
        }
    }

    fn chunk(&self) -> usize {
        self.max_symbols.saturating_mul(2).max(1 << 16)
    }
}

/// Accumulates product letters, merging whenever the buffer fills.
struct Collector<'a> {
    budget: &'a SynthesisBudget,
    done: Vec<PairSymbol>,
    buf: Vec<PairSymbol>,
}

impl<'a> Collector<'a> {
    fn new(budget: &'a SynthesisBudget) -> Self {
        Self {
            budget,
            done: Vec::new(),
            buf: Vec::new(),
        }
    }

    #[inline]
    fn push(&mut self, s: PairSymbol) -> Result<(), PolarizeError> {
        self.buf.push(s);
        if self.buf.len() >= self.budget.chunk() {
            self.flush()?;
        }
        Ok(())
    }

    fn flush(&mut self) -> Result<(), PolarizeError> {
        let mut all = std::mem::take(&mut self.done);
        all.append(&mut self.buf);
        let merged = self.budget.tidy(&ChannelPair::from_symbols(all));
        if merged.len() > self.budget.max_symbols {
            return Err(PolarizeError::BudgetExceeded {
                depth: 1,
                symbols: merged.len(),
                max: self.budget.max_symbols,
            });
        }
        self.done = merged.symbols().to_vec();
        Ok(())
    }

    fn finish(mut self) -> Result<ChannelPair, PolarizeError> {
        self.flush()?;
        Ok(ChannelPair::from_symbols(self.done))
    }
}

/// The minus transform `(W, V) → (W⁻, V⁻)`.
pub fn minus(p: &ChannelPair, budget: &SynthesisBudget) -> Result<ChannelPair, PolarizeError> {
    if let Some(step) = budget.llr_step {
        return Ok(grid::minus(p, budget, step));
    }
    let s: Vec<PairSymbol> = p.symbols().iter().copied().filter(|s| s.q > 0.0).collect();
    let mut out = Collector::new(budget);
    // (y1, y2) and (y2, y1) land on the same key, so only i <= j is formed
    for (i, a) in s.iter().enumerate() {
        out.push(minus_letter(a, a, 1.0))?;
        for b in &s[i + 1..] {
            out.push(minus_letter(a, b, 2.0))?;
        }
    }
    out.finish()
}

#[inline]
fn minus_letter(a: &PairSymbol, b: &PairSymbol, mult: f64) -> PairSymbol {
    PairSymbol {
        q: mult * a.q * b.q,
        lw: boxplus(a.lw, b.lw),
        lv: a.lv.zip(b.lv).map(|(x, y)| boxplus(x, y)),
    }
}

/// A live letter with its `W` likelihood halves `(1 ± Δ_W) / 2` precomputed.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Prepared {
    pub(crate) s: PairSymbol,
    up: f64,
    down: f64,
}

pub(crate) fn prepare(p: &ChannelPair) -> Vec<Prepared> {
    p.symbols()
        .iter()
        .filter(|s| s.q > 0.0)
        .map(|s| Prepared {
            s: *s,
            up: s.w_up(),
            down: s.w_down(),
        })
        .collect()
}

/// The plus transform `(W, V) → (W⁺, V⁺)`.
pub fn plus(p: &ChannelPair, budget: &SynthesisBudget) -> Result<ChannelPair, PolarizeError> {
    if let Some(step) = budget.llr_step {
        return Ok(grid::plus(p, budget, step));
    }
    let s = prepare(p);
    let mut out = Collector::new(budget);
    for a in &s {
        for b in &s {
            for sign in [1.0, -1.0] {
                if let Some(letter) = plus_letter(a, b, sign) {
                    out.push(letter)?;
                }
            }
        }
    }
    out.finish()
}

/// Combines two letters with the already decided bit `u₁`, `sign = (−1)^{u₁}`.
/// Returns `None` for a letter of zero mass.
#[inline]
pub(crate) fn plus_letter(a: &Prepared, b: &Prepared, sign: f64) -> Option<PairSymbol> {
    // ½ (1 + s Δ₁ Δ₂) written in likelihood halves, free of cancellation
    let (up, down) = if sign > 0.0 { (a.up, a.down) } else { (a.down, a.up) };
    let q = a.s.q * b.s.q * up.mul_add(b.up, down * b.down);
    if !(q > 0.0) {
        return None;
    }
    let (a, b) = (&a.s, &b.s);
    // +∞ meeting −∞ means V gives the combined letter zero mass
    let lv = a.lv.zip(b.lv).map(|(x, y)| snapped_sum(sign * x, y)).filter(|x| !x.is_nan());
    Some(PairSymbol {
        q,
        lw: snapped_sum(sign * a.lw, b.lw),
        lv,
    })
}

pub fn transform(
    p: &ChannelPair,
    sign: Sign,
    budget: &SynthesisBudget,
) -> Result<ChannelPair, PolarizeError> {
    match sign {
        Sign::Minus => minus(p, budget),
        Sign::Plus => plus(p, budget),
    }
}

/// Applies the transforms along `s`, first sign first.
pub fn synthesize(
    p: &ChannelPair,
    s: &SignSequence,
    budget: &SynthesisBudget,
) -> Result<ChannelPair, PolarizeError> {
    let mut cur = budget.tidy(p);
    for (j, sign) in s.iter().enumerate() {
        cur = transform(&cur, sign, budget).map_err(|e| e.at_depth(j + 1))?;
    }
    Ok(cur)
}

/// All `2^n` synthesized pairs, ordered by index.
pub fn synthesize_level(
    p: &ChannelPair,
    n: usize,
    budget: &SynthesisBudget,
) -> Result<Vec<ChannelPair>, PolarizeError> {
    map_level(p, n, budget, |_, pair| pair.clone())
}

/// Evaluates `f(index, pair)` on every level-`n` pair, in index order.
///
/// The tree is walked depth first with both children of a node handed to
/// the rayon pool, so only one root-to-leaf chain per worker is alive at a
/// time. Results are assembled in index order whatever the scheduling.
pub fn map_level<T, F>(
    p: &ChannelPair,
    n: usize,
    budget: &SynthesisBudget,
    f: F,
) -> Result<Vec<T>, PolarizeError>
where
    T: Send,
    F: Fn(u64, &ChannelPair) -> T + Sync,
{
    fn walk<T: Send, F: Fn(u64, &ChannelPair) -> T + Sync>(
        node: &ChannelPair,
        depth: usize,
        n: usize,
        offset: u64,
        budget: &SynthesisBudget,
        f: &F,
    ) -> Result<Vec<T>, PolarizeError> {
        if depth == n {
            return Ok(vec![f(offset + 1, node)]);
        }
        let half = 1u64 << (n - depth - 1);
        let (lo, hi) = rayon::join(
            || {
                let child = minus(node, budget).map_err(|e| e.at_depth(depth + 1))?;
                walk(&child, depth + 1, n, offset, budget, f)
            },
            || {
                let child = plus(node, budget).map_err(|e| e.at_depth(depth + 1))?;
                walk(&child, depth + 1, n, offset + half, budget, f)
            },
        );
        let mut lo = lo?;
        lo.extend(hi?);
        Ok(lo)
    }
    let root = budget.tidy(p);
    walk(&root, 0, n, 0, budget, &f)
}

/// Per-depth sums of a vector statistic over the whole tree.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthSums {
    /// `sums[d][k]` is the sum of statistic `k` over the `2^d` pairs at
    /// depth `d`, for every depth that completed.
    pub sums: Vec<Vec<f64>>,
    /// The budget failure that stopped the walk, if any.
    pub failure: Option<PolarizeError>,
}

/// Sums `stat(pair)` over every node at depths `0..=max_n`.
///
/// When some node cannot be expanded within budget, every depth from the
/// failing one on is dropped; depths before it are complete.
pub fn depth_sums<F>(
    p: &ChannelPair,
    max_n: usize,
    budget: &SynthesisBudget,
    width: usize,
    stat: F,
) -> DepthSums
where
    F: Fn(&ChannelPair) -> Vec<f64> + Sync,
{
    struct Ctx<'a, F> {
        budget: &'a SynthesisBudget,
        stat: &'a F,
        width: usize,
        cutoff: AtomicUsize,
        failure: std::sync::Mutex<Option<PolarizeError>>,
    }

    fn walk<F: Fn(&ChannelPair) -> Vec<f64> + Sync>(
        node: &ChannelPair,
        depth: usize,
        ctx: &Ctx<'_, F>,
    ) -> Vec<Vec<f64>> {
        let own = (ctx.stat)(node);
        debug_assert_eq!(own.len(), ctx.width);
        let mut out = vec![own];
        if depth + 1 >= ctx.cutoff.load(AtomicOrdering::SeqCst) {
            return out;
        }
        let expand = |sign: Sign| match transform(node, sign, ctx.budget) {
            Ok(child) => walk(&child, depth + 1, ctx),
            Err(e) => {
                let failed_at = depth + 1;
                ctx.cutoff.fetch_min(failed_at, AtomicOrdering::SeqCst);
                let mut slot = ctx.failure.lock().unwrap();
                if slot.as_ref().and_then(|f| f.depth()).map_or(true, |d| failed_at < d) {
                    *slot = Some(e.at_depth(failed_at));
                }
                Vec::new()
            }
        };
        let (lo, hi) = rayon::join(|| expand(Sign::Minus), || expand(Sign::Plus));
        let deepest = lo.len().max(hi.len());
        for d in 0..deepest {
            let mut row = vec![0.0; ctx.width];
            for part in [&lo, &hi] {
                if let Some(r) = part.get(d) {
                    for (acc, x) in row.iter_mut().zip(r) {
                        *acc += x;
                    }
                }
            }
            out.push(row);
        }
        out
    }

    let ctx = Ctx {
        budget,
        stat: &stat,
        width,
        cutoff: AtomicUsize::new(max_n + 1),
        failure: std::sync::Mutex::new(None),
    };
    let root = budget.tidy(p);
    let mut sums = walk(&root, 0, &ctx);
    let cutoff = ctx.cutoff.load(AtomicOrdering::SeqCst);
    sums.truncate(cutoff.min(max_n + 1));
    DepthSums {
        sums,
        failure: ctx.failure.into_inner().unwrap(),
    }
}
