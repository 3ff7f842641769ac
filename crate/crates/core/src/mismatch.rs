//! True/metric channel pairs and their mismatched parameters.
//!
//! A [`ChannelPair`] stores, for every output letter, the true channel's
//! mass `q_W(y)` and likelihood difference `Δ_W(y)`, plus the metric
//! channel's `Δ_V(y)`. Every parameter here is an expectation under `q_W`
//! of a function of `(Δ_W, Δ_V)`, which is what makes merging letters with
//! equal keys lossless.

use std::cmp::Ordering;
use std::f64::consts::LN_2;
use std::fmt;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::channel::{linkage_groups, Bdmc, MatchedParams, OutputSymbol};
use crate::numeric::{csum, delta_of, llr_of, logistic, softplus, CompensatedSum, MeanLlr};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MismatchError {
    #[error("true channel has {w} output letters but the metric channel has {v}")]
    AlphabetMismatch { w: usize, v: usize },
}

/// A real number extended with `±∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtReal {
    Finite(f64),
    NegInfinity,
    PosInfinity,
}

impl ExtReal {
    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(x) => Some(x),
            _ => None,
        }
    }

    pub fn to_f64(self) -> f64 {
        match self {
            ExtReal::Finite(x) => x,
            ExtReal::NegInfinity => f64::NEG_INFINITY,
            ExtReal::PosInfinity => f64::INFINITY,
        }
    }

    /// `max(x, 0)`, with `|−∞|⁺ = 0`.
    pub fn positive_part(self) -> f64 {
        match self {
            ExtReal::Finite(x) => x.max(0.0),
            ExtReal::NegInfinity => 0.0,
            ExtReal::PosInfinity => f64::INFINITY,
        }
    }
}

impl From<f64> for ExtReal {
    fn from(x: f64) -> Self {
        if x == f64::INFINITY {
            ExtReal::PosInfinity
        } else if x == f64::NEG_INFINITY {
            ExtReal::NegInfinity
        } else {
            ExtReal::Finite(x)
        }
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::Finite(x) => fmt::Display::fmt(x, f),
            ExtReal::NegInfinity => f.write_str("-inf"),
            ExtReal::PosInfinity => f.write_str("inf"),
        }
    }
}

/// Finite values serialize as JSON numbers, infinities as the strings
/// `"-inf"` and `"inf"`.
impl Serialize for ExtReal {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ExtReal::Finite(x) => s.serialize_f64(*x),
            ExtReal::NegInfinity => s.serialize_str("-inf"),
            ExtReal::PosInfinity => s.serialize_str("inf"),
        }
    }
}

/// One output letter of a pair.
///
/// Both channels are kept as LLRs, `lw = ln(W(y|0) / W(y|1))` and likewise
/// `lv`, rather than as `Δ = tanh(λ/2)`: deep plus letters have `Δ` within
/// rounding of ±1, where `1 ∓ Δ` is no longer representable but the LLR
/// still is. `lv == None` means the metric channel puts zero mass on this
/// letter under both inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairSymbol {
    pub q: f64,
    pub lw: f64,
    pub lv: Option<f64>,
}

impl PairSymbol {
    /// True when the true channel can produce this letter from an input the
    /// metric channel says cannot produce it.
    pub fn is_null_support(&self) -> bool {
        if self.q <= 0.0 {
            return false;
        }
        match self.lv {
            None => true,
            Some(lv) => lv.is_infinite() && lv != self.lw,
        }
    }

    /// Builds a letter from `Δ_W` and `Δ_V` instead of LLRs.
    pub fn from_deltas(q: f64, dw: f64, dv: Option<f64>) -> Self {
        Self {
            q,
            lw: llr_of(dw),
            lv: dv.map(llr_of),
        }
    }

    /// `Δ_W = tanh(lw / 2)`.
    #[inline]
    pub fn dw(&self) -> f64 {
        delta_of(self.lw)
    }

    /// `W(y|0) / (W(y|0) + W(y|1)) = (1 + Δ_W) / 2`, exact near `Δ_W = ±1`.
    #[inline]
    pub fn w_up(&self) -> f64 {
        logistic(self.lw)
    }

    /// `(1 − Δ_W) / 2`.
    #[inline]
    pub fn w_down(&self) -> f64 {
        logistic(-self.lw)
    }

    /// `Δ_V = tanh(lv / 2)`.
    #[inline]
    pub fn dv(&self) -> Option<f64> {
        self.lv.map(delta_of)
    }

    /// `Δ_V` with the undefined case read as a tie.
    #[inline]
    pub fn dv_or_tie(&self) -> f64 {
        self.lv.map_or(0.0, delta_of)
    }

    /// The metric LLR with the undefined case read as a tie.
    #[inline]
    pub fn lv_or_tie(&self) -> f64 {
        self.lv.unwrap_or(0.0)
    }

    fn is_tie(&self) -> bool {
        self.lv_or_tie() == 0.0
    }

    /// Whether this letter is the negative of its folded representative.
    /// Every parameter is invariant under `(Δ_W, Δ_V) → (−Δ_W, −Δ_V)` and
    /// both transforms commute with it, so such letters may be flipped.
    #[inline]
    pub(crate) fn folds(&self) -> bool {
        let lv = self.lv_or_tie();
        lv < 0.0 || (lv == 0.0 && self.lw < 0.0)
    }

    #[inline]
    pub(crate) fn flipped(&self) -> PairSymbol {
        PairSymbol {
            q: self.q,
            lw: -self.lw,
            lv: self.lv.map(|x| -x),
        }
    }
}

/// A (true, metric) channel pair on a shared output alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelPair {
    symbols: Vec<PairSymbol>,
    v_has_null_support: bool,
}

/// All mismatched parameters of a pair at once.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MismatchParams {
    pub mmi: ExtReal,
    pub d: f64,
    pub t: f64,
    pub z: ExtReal,
    pub pe_ml: f64,
}

/// Pairs `W` (true) and `V` (metric) letter by letter.
pub fn pair(w: &Bdmc, v: &Bdmc) -> Result<ChannelPair, MismatchError> {
    if w.len() != v.len() {
        return Err(MismatchError::AlphabetMismatch {
            w: w.len(),
            v: v.len(),
        });
    }
    let symbols = w
        .symbols()
        .iter()
        .zip(v.symbols())
        .map(|(sw, sv)| PairSymbol::from_deltas(sw.q, sw.delta, (sv.q > 0.0).then_some(sv.delta)))
        .collect();
    Ok(ChannelPair::from_symbols(symbols))
}

impl ChannelPair {
    /// The pair `(W, W)`.
    pub fn matched(w: &Bdmc) -> Self {
        Self::from_symbols(
            w.symbols()
                .iter()
                .map(|s| PairSymbol::from_deltas(s.q, s.delta, Some(s.delta)))
                .collect(),
        )
    }

    /// Builds a pair from raw symbols; the null-support flag is derived.
    pub fn from_symbols(symbols: Vec<PairSymbol>) -> Self {
        let v_has_null_support = symbols.iter().any(PairSymbol::is_null_support);
        Self {
            symbols,
            v_has_null_support,
        }
    }

    pub fn symbols(&self) -> &[PairSymbol] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn v_has_null_support(&self) -> bool {
        self.v_has_null_support
    }

    /// Total `q_W` mass; 1 up to rounding for a valid pair.
    pub fn total_mass(&self) -> f64 {
        csum(self.symbols.iter().map(|s| s.q))
    }

    /// The true channel alone.
    pub fn true_channel(&self) -> Bdmc {
        Bdmc::from_symbols_unchecked(
            self.symbols
                .iter()
                .map(|s| OutputSymbol { q: s.q, delta: s.dw() })
                .collect(),
        )
    }

    pub fn true_params(&self) -> MatchedParams {
        self.true_channel().matched_params()
    }

    /// Whether `Δ_V = Δ_W` on every letter of positive mass, within `tol`.
    pub fn is_matched(&self, tol: f64) -> bool {
        self.symbols
            .iter()
            .filter(|s| s.q > 0.0)
            .all(|s| s.dv().is_some_and(|dv| (dv - s.dw()).abs() <= tol))
    }

    pub fn params(&self) -> MismatchParams {
        MismatchParams {
            mmi: mmi(self),
            d: d_param(self),
            t: t_param(self, 1),
            z: z_mismatch(self),
            pe_ml: pe_ml(self),
        }
    }

    fn live(&self) -> impl Iterator<Item = &PairSymbol> {
        self.symbols.iter().filter(|s| s.q > 0.0)
    }

    /// Merges letters with nearby `(lw, lv)` keys and sorts the result.
    ///
    /// Letters are first split by null-support flag and by the sign class
    /// of `lv` (undefined, negative, zero, positive), so merging never
    /// changes which way the metric decides nor the `−∞` flag. Inside a
    /// class, single-linkage on `asinh(lw)` (absolute near zero, relative
    /// for large LLRs) forms bands, then single-linkage on `asinh(lv)`
    /// splits each band. Merged letters carry summed mass and
    /// mass-weighted means. Zero-mass letters are dropped.
    pub fn canonicalize(&self, tol: f64) -> ChannelPair {
        let tol = tol.max(0.0);
        let mut live: Vec<PairSymbol> = self.live().copied().collect();
        live.sort_by(|a, b| {
            merge_class(a)
                .cmp(&merge_class(b))
                .then(a.lw.total_cmp(&b.lw))
                .then(a.lv_or_tie().total_cmp(&b.lv_or_tie()))
        });
        let mut merged = Vec::with_capacity(live.len());
        let mut band_buf: Vec<PairSymbol> = Vec::new();
        for class in linkage_groups(&live, 0.0, |s| merge_class(s) as f64) {
            let class = &live[class];
            for band in linkage_groups(class, tol, |s| llr_key(s.lw)) {
                let band = &class[band];
                if band.len() == 1 {
                    merged.push(band[0]);
                    continue;
                }
                if band[0].lv.is_none() {
                    merged.push(merge_run(band));
                    continue;
                }
                band_buf.clear();
                band_buf.extend_from_slice(band);
                band_buf.sort_by(|a, b| a.lv_or_tie().total_cmp(&b.lv_or_tie()));
                for run in linkage_groups(&band_buf, tol, |s| llr_key(s.lv_or_tie())) {
                    merged.push(merge_run(&band_buf[run]));
                }
            }
        }
        merged.sort_by(canonical_order);
        ChannelPair::from_symbols(merged)
    }
}

/// Largest finite LLR kept apart on the quantization grid; letters beyond
/// it share the outermost cell. Far out of reach of any feasible depth: a
/// tighter clip lumps the large metric LLRs that `I(W, V)` is linear in
/// for reflected letters.
const LLR_CLIP: f64 = 1e6;

/// Linkage coordinate of an LLR: close to `ln |λ|`, so a tolerance compares
/// LLRs relatively all the way down to [`KEY_FLOOR`]. Near-noise letters with
/// distinct tiny LLRs stay apart. Infinite LLRs only meet their own.
fn llr_key(llr: f64) -> f64 {
    if llr.is_infinite() {
        llr.signum() * 1e6
    } else {
        llr.signum() * (llr.abs() / KEY_FLOOR).ln_1p()
    }
}

const KEY_FLOOR: f64 = 1e-200;

/// Grid cell of an LLR; infinite LLRs get cells of their own.
#[inline]
pub(crate) fn llr_cell(llr: f64, step: f64) -> i64 {
    if llr == f64::INFINITY {
        return i64::MAX;
    }
    if llr == f64::NEG_INFINITY {
        return i64::MIN;
    }
    (llr.clamp(-LLR_CLIP, LLR_CLIP) / step).round() as i64
}

impl ChannelPair {
    /// Coarse-grains the pair on a grid in the log-likelihood-ratio domain.
    ///
    /// Letters whose `(λ_W, λ_V)` fall into the same cell of width `step`
    /// (natural-log LLR units, both coordinates) are merged. `Δ = ±1` letters
    /// keep their own cells and the sign-class / null-support split of
    /// [`ChannelPair::canonicalize`] still applies, so merging never moves
    /// mass across a decision boundary. Unlike `canonicalize` this bounds
    /// the alphabet size independently of depth.
    ///
    /// Letters are also folded onto `Δ_V > 0` (or `Δ_V = 0, Δ_W ≥ 0`) by a
    /// joint sign flip, which no parameter can see.
    pub fn quantize(&self, step: f64) -> ChannelPair {
        let mut keyed: Vec<((u8, i64, i64), PairSymbol)> = self
            .live()
            .map(|s| if s.folds() { s.flipped() } else { *s })
            .map(|s| {
                let kv = s.lv.map_or(0, |lv| llr_cell(lv, step));
                ((merge_class(&s), llr_cell(s.lw, step), kv), s)
            })
            .collect();
        keyed.sort_by(|a, b| a.0.cmp(&b.0).then(canonical_order(&a.1, &b.1)));
        let mut merged = Vec::new();
        let mut run: Vec<PairSymbol> = Vec::new();
        for (i, (key, s)) in keyed.iter().enumerate() {
            run.push(*s);
            if keyed.get(i + 1).map_or(true, |(next, _)| next != key) {
                merged.push(merge_run(&run));
                run.clear();
            }
        }
        merged.sort_by(canonical_order);
        ChannelPair::from_symbols(merged)
    }
}

/// Sort key for merging: null flag and the sign class of the metric LLR.
pub(crate) fn merge_class(s: &PairSymbol) -> u8 {
    let sign = match s.lv {
        None => 0,
        Some(x) if x < 0.0 => 1,
        Some(x) if x == 0.0 => 2,
        Some(_) => 3,
    };
    sign + if s.is_null_support() { 4 } else { 0 }
}

fn merge_run(run: &[PairSymbol]) -> PairSymbol {
    if run.len() == 1 {
        return run[0];
    }
    let q = csum(run.iter().map(|s| s.q));
    // both sides take the mean Δ, which merges W as a channel and keeps
    // P_e,ML exact; exact values are kept when the whole run agrees, so ±∞
    // and 0 do not drift
    let merged = |llr: fn(&PairSymbol) -> f64| {
        let first = llr(&run[0]);
        if run.iter().all(|s| llr(s) == first) {
            first
        } else {
            let mut mean = MeanLlr::EMPTY;
            run.iter().for_each(|s| mean.add(s.q, llr(s)));
            mean.value()
        }
    };
    PairSymbol {
        q,
        lw: merged(|s| s.lw),
        lv: run[0].lv.map(|_| merged(PairSymbol::lv_or_tie)),
    }
}

/// Metric LLR ascending with undefined first, then `lw` ascending, then
/// mass descending.
pub(crate) fn canonical_order(a: &PairSymbol, b: &PairSymbol) -> Ordering {
    let dv_key = |s: &PairSymbol| match s.lv {
        None => (0u8, 0.0),
        Some(x) => (1, x),
    };
    let (ca, va) = dv_key(a);
    let (cb, vb) = dv_key(b);
    ca.cmp(&cb)
        .then(va.total_cmp(&vb))
        .then(a.lw.total_cmp(&b.lw))
        .then(b.q.total_cmp(&a.q))
}

fn ln1p_terms(s: &PairSymbol) -> f64 {
    // ((1 + dw) log2(1 + dv) + (1 - dw) log2(1 - dv)) / 2, with 0 log 0 = 0;
    // log2(1 ± dv) = 1 - softplus(∓lv) / ln 2 stays exact where dv saturates
    let lv = s.lv_or_tie();
    let term = |w: f64, x: f64| if w == 0.0 { 0.0 } else { w * (1.0 - softplus(x) / LN_2) };
    term(s.w_up(), -lv) + term(s.w_down(), lv)
}

/// Mismatched mutual information `I(W, V)` in bits.
pub fn mmi(p: &ChannelPair) -> ExtReal {
    if p.v_has_null_support {
        return ExtReal::NegInfinity;
    }
    let mut acc = CompensatedSum::new();
    for s in p.live() {
        acc.add(s.q * ln1p_terms(s));
    }
    ExtReal::Finite(acc.value())
}

/// `D(W, V) = E sqrt|Δ_V|`.
pub fn d_param(p: &ChannelPair) -> f64 {
    csum(p.live().map(|s| s.q * s.dv_or_tie().abs().sqrt()))
}

/// `T_k(W, V) = E|Δ_V|^k`; `k = 1` is the mismatched variational distance.
pub fn t_param(p: &ChannelPair, k: u32) -> f64 {
    let k = k.max(1) as i32;
    csum(p.live().map(|s| s.q * s.dv_or_tie().abs().powi(k)))
}

/// Mismatched Bhattacharyya parameter `Z(W, V)`.
pub fn z_mismatch(p: &ChannelPair) -> ExtReal {
    let mut acc = CompensatedSum::new();
    for s in p.live() {
        let Some(lv) = s.lv else {
            return ExtReal::PosInfinity;
        };
        if lv.is_infinite() {
            if s.lw != lv {
                return ExtReal::PosInfinity;
            }
            continue;
        }
        // (1 - dw dv) / sqrt(1 - dv²) = w_down e^{lv/2} + w_up e^{-lv/2};
        // fold onto lv ≥ 0 so a joint sign flip gives bit-identical terms
        let (lw, lv) = if lv < 0.0 { (-s.lw, -lv) } else { (s.lw, lv) };
        let far = (lv / 2.0 - softplus(lw)).exp();
        let near = (-lv / 2.0 - softplus(-lw)).exp();
        acc.add(s.q * (far + near));
    }
    let z = acc.value();
    if z.is_finite() {
        ExtReal::Finite(z)
    } else {
        ExtReal::PosInfinity
    }
}

/// Single-use error probability of ML decoding with respect to `V` over
/// `W`, ties broken by a fair coin.
pub fn pe_ml(p: &ChannelPair) -> f64 {
    csum(p.live().map(|s| {
        let lv = s.lv_or_tie();
        if lv > 0.0 {
            s.q * s.w_down()
        } else if lv < 0.0 {
            s.q * s.w_up()
        } else {
            s.q / 2.0
        }
    }))
}

/// `q_W` mass of letters on which the metric decoder ties.
pub fn tie_mass(p: &ChannelPair) -> f64 {
    csum(p.live().filter(|s| s.is_tie()).map(|s| s.q))
}
