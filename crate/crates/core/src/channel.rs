//! Binary-input discrete memoryless channels in `(q, Δ)` form.
//!
//! Every output symbol `y` is stored as its mass under uniform inputs,
//! `q(y) = (W(y|0) + W(y|1)) / 2`, together with the normalized likelihood
//! difference `Δ(y) = (W(y|0) - W(y|1)) / (W(y|0) + W(y|1))`. The transition
//! probabilities are recovered as `W(y|0) = q(1 + Δ)` and `W(y|1) = q(1 - Δ)`.
//!
//! A freshly built [`Bdmc`] keeps one symbol per output letter, in alphabet
//! order, so two channels declared on the same alphabet can be paired
//! position by position. [`Bdmc::canonicalize`] merges and sorts.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;
use thiserror::Error;

use crate::numeric::{csum, xlog2y};

/// Default merge tolerance: exact duplicates only, up to rounding.
pub const DEFAULT_MERGE_TOL: f64 = 1e-12;

const ROW_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("row {row} of the transition matrix sums to {sum}, expected 1")]
    NonStochastic { row: usize, sum: f64 },
    #[error("{what} = {value} is outside its valid range")]
    OutOfRange { what: &'static str, value: f64 },
    #[error("channel has an empty output alphabet")]
    EmptyAlphabet,
    #[error("transition rows have different lengths ({0} vs {1})")]
    RaggedRows(usize, usize),
    #[error("cannot parse channel spec `{0}`: expected bsc:<p>, bec:<e> or file:<path>")]
    BadSpec(String),
    #[error("cannot read channel file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed channel file {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

/// One output letter of a [`Bdmc`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputSymbol {
    /// Output probability under uniformly distributed inputs.
    pub q: f64,
    /// Normalized likelihood difference; 0 by convention when `q == 0`.
    pub delta: f64,
}

impl OutputSymbol {
    /// `(W(y|0), W(y|1))`.
    pub fn transition(&self) -> (f64, f64) {
        (self.q * (1.0 + self.delta), self.q * (1.0 - self.delta))
    }
}

/// A binary-input discrete memoryless channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Bdmc {
    symbols: Vec<OutputSymbol>,
}

/// Parameters of a single channel decoded with its own law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchedParams {
    /// Symmetric capacity `I(W)` in bits.
    pub capacity: f64,
    /// Bhattacharyya parameter `Z(W)`.
    pub bhattacharyya: f64,
    /// Variational distance `T(W) = E|Δ|`.
    pub variational: f64,
    /// `D(W) = E sqrt|Δ|`.
    pub sqrt_distance: f64,
}

impl Bdmc {
    /// Builds a channel from its two transition rows `W(.|0)` and `W(.|1)`.
    ///
    /// Rows must be nonnegative and sum to one within `1e-9`; they are
    /// renormalized exactly after validation.
    pub fn from_rows(w0: &[f64], w1: &[f64]) -> Result<Self, ChannelError> {
        if w0.len() != w1.len() {
            return Err(ChannelError::RaggedRows(w0.len(), w1.len()));
        }
        if w0.is_empty() {
            return Err(ChannelError::EmptyAlphabet);
        }
        for &x in w0.iter().chain(w1) {
            if !(x >= 0.0) || !x.is_finite() {
                return Err(ChannelError::OutOfRange {
                    what: "transition probability",
                    value: x,
                });
            }
        }
        let s0 = csum(w0.iter().copied());
        let s1 = csum(w1.iter().copied());
        for (row, sum) in [(0, s0), (1, s1)] {
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(ChannelError::NonStochastic { row, sum });
            }
        }
        let symbols = w0
            .iter()
            .zip(w1)
            .map(|(&a, &b)| {
                let (a, b) = (a / s0, b / s1);
                let total = a + b;
                if total == 0.0 {
                    OutputSymbol { q: 0.0, delta: 0.0 }
                } else {
                    OutputSymbol {
                        q: total / 2.0,
                        delta: ((a - b) / total).clamp(-1.0, 1.0),
                    }
                }
            })
            .collect();
        Ok(Self { symbols })
    }

    /// Binary symmetric channel with crossover probability `p`.
    /// Outputs are ordered `(0, 1)`.
    pub fn bsc(p: f64) -> Result<Self, ChannelError> {
        check_probability("crossover probability", p)?;
        Self::from_rows(&[1.0 - p, p], &[p, 1.0 - p])
    }

    /// Binary erasure channel with erasure probability `e`.
    /// Outputs are ordered `(0, 1, erasure)`.
    pub fn bec(e: f64) -> Result<Self, ChannelError> {
        check_probability("erasure probability", e)?;
        Self::from_rows(&[1.0 - e, 0.0, e], &[0.0, 1.0 - e, e])
    }

    /// Builds a channel directly from `(q, Δ)` symbols.
    pub fn from_symbols(symbols: Vec<OutputSymbol>) -> Result<Self, ChannelError> {
        if symbols.is_empty() {
            return Err(ChannelError::EmptyAlphabet);
        }
        for s in &symbols {
            if !(0.0..=1.0).contains(&s.q) {
                return Err(ChannelError::OutOfRange { what: "q", value: s.q });
            }
            if !(-1.0..=1.0).contains(&s.delta) {
                return Err(ChannelError::OutOfRange {
                    what: "delta",
                    value: s.delta,
                });
            }
        }
        let total = csum(symbols.iter().map(|s| s.q));
        if (total - 1.0).abs() > 1e-12 {
            return Err(ChannelError::NonStochastic { row: 0, sum: total });
        }
        Ok(Self { symbols })
    }

    pub(crate) fn from_symbols_unchecked(symbols: Vec<OutputSymbol>) -> Self {
        Self { symbols }
    }

    pub fn symbols(&self) -> &[OutputSymbol] {
        &self.symbols
    }

    /// Alphabet size, counting zero-mass letters.
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// The two transition rows `(W(.|0), W(.|1))`.
    pub fn rows(&self) -> (Vec<f64>, Vec<f64>) {
        self.symbols.iter().map(OutputSymbol::transition).unzip()
    }

    pub fn matched_params(&self) -> MatchedParams {
        let live = || self.symbols.iter().filter(|s| s.q > 0.0);
        MatchedParams {
            capacity: csum(live().map(|s| {
                let (a, b) = (1.0 + s.delta, 1.0 - s.delta);
                s.q * (xlog2y(a, a) + xlog2y(b, b)) / 2.0
            })),
            bhattacharyya: csum(live().map(|s| s.q * (1.0 - s.delta * s.delta).max(0.0).sqrt())),
            variational: self.t_k(1),
            sqrt_distance: csum(live().map(|s| s.q * s.delta.abs().sqrt())),
        }
    }

    /// `T_k(W) = E|Δ|^k`.
    pub fn t_k(&self, k: u32) -> f64 {
        let k = k.max(1) as i32;
        csum(self.symbols.iter().map(|s| s.q * s.delta.abs().powi(k)))
    }

    /// Merges letters whose `Δ` values lie within `tol` of each other.
    ///
    /// Merging is single-linkage on sorted `Δ`, so any two letters within
    /// `tol` end up together. Merged letters carry the `q`-weighted mean of
    /// `Δ`, which keeps both transition rows' totals. Zero-mass letters are
    /// dropped and the result is sorted by `Δ` ascending, ties by `q`
    /// descending.
    pub fn canonicalize(&self, tol: f64) -> Bdmc {
        let tol = tol.max(0.0);
        let mut live: Vec<OutputSymbol> =
            self.symbols.iter().copied().filter(|s| s.q > 0.0).collect();
        live.sort_by(|a, b| a.delta.total_cmp(&b.delta).then(b.q.total_cmp(&a.q)));
        let mut merged: Vec<OutputSymbol> = Vec::with_capacity(live.len());
        for range in linkage_groups(&live, tol, |s| s.delta) {
            let group = &live[range];
            if group.len() == 1 {
                merged.push(group[0]);
                continue;
            }
            let q = csum(group.iter().map(|s| s.q));
            let delta = csum(group.iter().map(|s| s.q * s.delta)) / q;
            merged.push(OutputSymbol {
                q,
                delta: delta.clamp(-1.0, 1.0),
            });
        }
        merged.sort_by(|a, b| a.delta.total_cmp(&b.delta).then(b.q.total_cmp(&a.q)));
        Bdmc { symbols: merged }
    }
}

fn check_probability(what: &'static str, p: f64) -> Result<(), ChannelError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(ChannelError::OutOfRange { what, value: p })
    }
}

/// Splits an already sorted slice into maximal runs whose consecutive keys
/// differ by at most `tol`.
pub(crate) fn linkage_groups<T>(
    sorted: &[T],
    tol: f64,
    key: impl Fn(&T) -> f64,
) -> Vec<std::ops::Range<usize>> {
    let mut groups = Vec::new();
    let mut start = 0;
    for i in 1..=sorted.len() {
        if i == sorted.len() || key(&sorted[i]) - key(&sorted[i - 1]) > tol {
            if start < i {
                groups.push(start..i);
            }
            start = i;
        }
    }
    groups
}

/// A parsed channel spec string.
#[derive(Debug, Clone, PartialEq)]
pub enum ChannelSpec {
    Bsc(f64),
    Bec(f64),
    File(PathBuf),
}

impl FromStr for ChannelSpec {
    type Err = ChannelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ChannelError::BadSpec(s.to_string());
        let (kind, arg) = s.split_once(':').ok_or_else(bad)?;
        let number = || arg.trim().parse::<f64>().map_err(|_| bad());
        match kind.trim().to_ascii_lowercase().as_str() {
            "bsc" => Ok(ChannelSpec::Bsc(number()?)),
            "bec" => Ok(ChannelSpec::Bec(number()?)),
            "file" if !arg.is_empty() => Ok(ChannelSpec::File(PathBuf::from(arg))),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for ChannelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChannelSpec::Bsc(p) => write!(f, "bsc:{p}"),
            ChannelSpec::Bec(e) => write!(f, "bec:{e}"),
            ChannelSpec::File(path) => write!(f, "file:{}", path.display()),
        }
    }
}

#[derive(Deserialize)]
struct MatrixFile {
    w: Vec<Vec<f64>>,
}

impl ChannelSpec {
    pub fn build(&self) -> Result<Bdmc, ChannelError> {
        match self {
            ChannelSpec::Bsc(p) => Bdmc::bsc(*p),
            ChannelSpec::Bec(e) => Bdmc::bec(*e),
            ChannelSpec::File(path) => load_matrix(path),
        }
    }
}

/// Parses and builds a channel from `bsc:<p>`, `bec:<e>` or `file:<path>`.
pub fn make_channel(spec: &str) -> Result<Bdmc, ChannelError> {
    spec.parse::<ChannelSpec>()?.build()
}

/// Loads a `{"w": [[...], [...]]}` transition matrix.
pub fn load_matrix(path: &Path) -> Result<Bdmc, ChannelError> {
    let text = std::fs::read_to_string(path).map_err(|source| ChannelError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let file: MatrixFile = serde_json::from_str(&text).map_err(|source| ChannelError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    match file.w.as_slice() {
        [w0, w1] => Bdmc::from_rows(w0, w1),
        rows => Err(ChannelError::BadSpec(format!(
            "{}: expected 2 rows, found {}",
            path.display(),
            rows.len()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::binary_entropy;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    /// Direct summation over the transition matrix, independent of the
    /// `(q, Δ)` storage.
    fn brute_params(w0: &[f64], w1: &[f64]) -> (f64, f64, f64) {
        let mut i = 0.0;
        let mut z = 0.0;
        let mut t = 0.0;
        for (&a, &b) in w0.iter().zip(w1) {
            let qy = (a + b) / 2.0;
            if a > 0.0 {
                i += 0.5 * a * (a / qy).log2();
            }
            if b > 0.0 {
                i += 0.5 * b * (b / qy).log2();
            }
            z += (a * b).sqrt();
            t += 0.5 * (a - b).abs();
        }
        (i, z, t)
    }

    #[test]
    fn noiseless_bsc() {
        let w = make_channel("bsc:0").unwrap();
        let deltas: Vec<f64> = w.symbols().iter().map(|s| s.delta).collect();
        let qs: Vec<f64> = w.symbols().iter().map(|s| s.q).collect();
        assert_eq!(deltas, vec![1.0, -1.0]);
        assert_eq!(qs, vec![0.5, 0.5]);
    }

    #[test]
    fn bec_symbols() {
        let w = make_channel("bec:0.3").unwrap();
        let s = w.symbols();
        assert_eq!(s.len(), 3);
        assert!(close(s[0].q, 0.35, 1e-15) && s[0].delta == 1.0);
        assert!(close(s[1].q, 0.35, 1e-15) && s[1].delta == -1.0);
        assert!(close(s[2].q, 0.30, 1e-15) && s[2].delta == 0.0);
    }

    #[test]
    fn pure_noise_bsc_has_zero_deltas() {
        let w = make_channel("bsc:0.5").unwrap();
        assert!(w.symbols().iter().all(|s| s.delta == 0.0));
        let p = w.matched_params();
        assert_eq!(p.capacity, 0.0);
        assert!(close(p.bhattacharyya, 1.0, 1e-15));
        assert_eq!(p.variational, 0.0);
        assert_eq!(p.sqrt_distance, 0.0);
    }

    #[test]
    fn bec_closed_forms() {
        let w = Bdmc::bec(0.3).unwrap();
        let p = w.matched_params();
        assert!(close(p.capacity, 0.7, 1e-15));
        assert!(close(p.bhattacharyya, 0.3, 1e-15));
        let (i, z, t) = brute_params(&[0.7, 0.0, 0.3], &[0.0, 0.7, 0.3]);
        assert!(close(p.capacity, i, 1e-14));
        assert!(close(p.bhattacharyya, z, 1e-14));
        assert!(close(p.variational, t, 1e-14));
    }

    #[test]
    fn bsc_closed_forms() {
        let w = Bdmc::bsc(0.11).unwrap();
        let p = w.matched_params();
        assert!(close(p.capacity, 1.0 - binary_entropy(0.11), 1e-14));
        assert!(close(p.bhattacharyya, 2.0 * (0.11f64 * 0.89).sqrt(), 1e-14));
        assert!(close(p.variational, 0.78, 1e-14));
        let (i, z, t) = brute_params(&[0.89, 0.11], &[0.11, 0.89]);
        assert!(close(p.capacity, i, 1e-14));
        assert!(close(p.bhattacharyya, z, 1e-14));
        assert!(close(p.variational, t, 1e-14));
    }

    #[test]
    fn matrix_errors() {
        assert!(matches!(
            Bdmc::from_rows(&[0.5, 0.4], &[0.5, 0.5]),
            Err(ChannelError::NonStochastic { row: 0, .. })
        ));
        assert!(matches!(Bdmc::from_rows(&[], &[]), Err(ChannelError::EmptyAlphabet)));
        assert!(matches!(
            Bdmc::from_rows(&[1.0], &[0.5, 0.5]),
            Err(ChannelError::RaggedRows(1, 2))
        ));
        assert!(matches!(
            Bdmc::from_rows(&[1.5, -0.5], &[0.5, 0.5]),
            Err(ChannelError::OutOfRange { .. })
        ));
        assert!(matches!(make_channel("bsc:1.2"), Err(ChannelError::OutOfRange { .. })));
        assert!(matches!(make_channel("bec:-0.1"), Err(ChannelError::OutOfRange { .. })));
        assert!(matches!(make_channel("awgn:1"), Err(ChannelError::BadSpec(_))));
        assert!(matches!(make_channel("bsc"), Err(ChannelError::BadSpec(_))));
        assert!(matches!(make_channel("bsc:x"), Err(ChannelError::BadSpec(_))));
    }

    #[test]
    fn rows_are_renormalized() {
        let w = Bdmc::from_rows(&[0.6, 0.4 + 5e-10], &[0.2, 0.8]).unwrap();
        let total: f64 = w.symbols().iter().map(|s| s.q).sum();
        assert!(close(total, 1.0, 1e-15));
    }

    #[test]
    fn single_letter_channel() {
        let w = Bdmc::from_rows(&[1.0], &[1.0]).unwrap();
        assert_eq!(w.symbols(), &[OutputSymbol { q: 1.0, delta: 0.0 }]);
    }

    #[test]
    fn canonicalize_merges_exact_duplicates() {
        let w = Bdmc::from_symbols(vec![
            OutputSymbol { q: 0.2, delta: 0.5 },
            OutputSymbol { q: 0.3, delta: 0.5 },
            OutputSymbol { q: 0.5, delta: -0.5 },
        ])
        .unwrap();
        let c = w.canonicalize(0.0);
        assert_eq!(c.len(), 2);
        assert_eq!(c.symbols()[1], OutputSymbol { q: 0.5, delta: 0.5 });
    }

    #[test]
    fn canonicalize_drops_null_symbols() {
        let w = Bdmc::from_rows(&[0.7, 0.0, 0.3, 0.0], &[0.0, 0.7, 0.3, 0.0]).unwrap();
        let c = w.canonicalize(0.0);
        assert_eq!(c.len(), 3);
        assert_eq!(c.matched_params(), w.matched_params());
    }

    #[test]
    fn canonicalize_sorts_by_delta() {
        let c = Bdmc::bec(0.3).unwrap().canonicalize(DEFAULT_MERGE_TOL);
        let deltas: Vec<f64> = c.symbols().iter().map(|s| s.delta).collect();
        assert_eq!(deltas, vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn canonicalize_single_linkage_chains() {
        let w = Bdmc::from_symbols(vec![
            OutputSymbol { q: 0.25, delta: 0.1 },
            OutputSymbol { q: 0.25, delta: 0.1 + 0.8e-3 },
            OutputSymbol { q: 0.25, delta: 0.1 + 1.6e-3 },
            OutputSymbol { q: 0.25, delta: 0.5 },
        ])
        .unwrap();
        let c = w.canonicalize(1e-3);
        assert_eq!(c.len(), 2);
        assert!(close(c.symbols()[0].q, 0.75, 1e-15));
        assert_eq!(c.canonicalize(1e-3), c);
    }

    #[test]
    fn spec_round_trip() {
        for s in ["bsc:0.11", "bec:0.5", "file:/tmp/x.json"] {
            let spec: ChannelSpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
        }
    }

    #[test]
    fn matrix_file() {
        let dir = std::env::temp_dir().join(format!("polar-mm-chan-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bsc3.json");
        std::fs::write(&path, r#"{"w": [[0.9, 0.1, 0.0], [0.1, 0.9, 0.0]]}"#).unwrap();
        let w = make_channel(&format!("file:{}", path.display())).unwrap();
        assert_eq!(w.len(), 3);
        assert_eq!(w.symbols()[2].q, 0.0);
        std::fs::write(&path, r#"{"w": [[1.0]]}"#).unwrap();
        assert!(make_channel(&format!("file:{}", path.display())).is_err());
        std::fs::remove_dir_all(&dir).ok();
    }
}
