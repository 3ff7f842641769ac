//! Information-set construction and the lower-bound ledger.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::Bdmc;
use crate::mismatch::{ChannelPair, ExtReal};
use crate::polarize::{depth_sums, map_level, PolarizeError, SynthesisBudget};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstructError {
    #[error(transparent)]
    Budget(#[from] PolarizeError),
    #[error("requested {k} information bits but the blocklength is {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("threshold {value} is outside {range}")]
    BadThreshold { value: f64, range: &'static str },
}

/// How the information set was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Rule {
    /// `I(W_N^(i)) ≥ 1 − γ`.
    MatchedI,
    /// `K` smallest `Z(W_N^(i))`.
    MatchedZ,
    /// `P_e,ML(W_N^(i), V_N^(i)) ≤ γ`, or the `K` smallest.
    MismatchedPe,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selector {
    /// Threshold form with parameter `γ`.
    Gamma(f64),
    /// Size form: exactly `K` indices.
    K(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetRecord {
    pub max_symbols: usize,
    pub merge_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub llr_step: Option<f64>,
}

impl From<&SynthesisBudget> for BudgetRecord {
    fn from(b: &SynthesisBudget) -> Self {
        Self {
            max_symbols: b.max_symbols,
            merge_tol: b.merge_tol,
            llr_step: b.llr_step,
        }
    }
}

/// Where a code came from. Channel specs are filled in by front ends that
/// know them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<String>,
    pub selector: Selector,
    pub budget: BudgetRecord,
    /// `Σ_{i∈A} P_e,ML(W_N^(i), V_N^(i))`, the union bound on block error
    /// under genie-aided decoding.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub genie_bound: Option<f64>,
}

/// An `(N, K)` polar coset code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarCode {
    pub n: usize,
    /// Sorted 1-based indices carrying information.
    pub info_set: Vec<u64>,
    /// Frozen index → bit.
    pub frozen: BTreeMap<u64, u8>,
    pub rule: Rule,
    pub provenance: Provenance,
}

impl PolarCode {
    /// Builds a code with all-zero frozen bits.
    pub fn new(n: usize, mut info_set: Vec<u64>, rule: Rule, provenance: Provenance) -> Self {
        info_set.sort_unstable();
        info_set.dedup();
        let mut frozen = BTreeMap::new();
        let mut next = info_set.iter().peekable();
        for i in 1..=(1u64 << n) {
            if next.peek() == Some(&&i) {
                next.next();
            } else {
                frozen.insert(i, 0);
            }
        }
        Self {
            n,
            info_set,
            frozen,
            rule,
            provenance,
        }
    }

    pub fn blocklength(&self) -> usize {
        1 << self.n
    }

    pub fn k(&self) -> usize {
        self.info_set.len()
    }

    /// Per-position mask, `true` on information positions, 0-based.
    pub fn info_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.blocklength()];
        for &i in &self.info_set {
            mask[(i - 1) as usize] = true;
        }
        mask
    }

    /// Frozen values by 0-based position; zero on information positions.
    pub fn frozen_bits(&self) -> Vec<u8> {
        let mut bits = vec![0u8; self.blocklength()];
        for (&i, &b) in &self.frozen {
            bits[(i - 1) as usize] = b & 1;
        }
        bits
    }

    /// Whether the information and frozen sets partition `1..=N`.
    pub fn is_consistent(&self) -> bool {
        let n = self.blocklength() as u64;
        self.info_set.len() + self.frozen.len() == n as usize
            && self.info_set.windows(2).all(|w| w[0] < w[1])
            && self.info_set.iter().all(|&i| (1..=n).contains(&i) && !self.frozen.contains_key(&i))
            && self.frozen.keys().all(|&i| (1..=n).contains(&i))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("code serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// Every parameter of one synthesized pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IndexStats {
    pub index: u64,
    pub i_w: f64,
    pub z_w: f64,
    pub i_wv: ExtReal,
    pub d_wv: f64,
    pub z_wv: ExtReal,
    pub t_wv: f64,
    pub pe_ml: f64,
    pub symbols: usize,
}

impl IndexStats {
    pub fn of(index: u64, p: &ChannelPair) -> Self {
        let m = p.true_params();
        let mm = p.params();
        Self {
            index,
            i_w: m.capacity,
            z_w: m.bhattacharyya,
            i_wv: mm.mmi,
            d_wv: mm.d,
            z_wv: mm.z,
            t_wv: mm.t,
            pe_ml: mm.pe_ml,
            symbols: p.len(),
        }
    }
}

/// Statistics of all `2^n` synthesized pairs, by index.
pub fn level_stats(
    p: &ChannelPair,
    n: usize,
    budget: &SynthesisBudget,
) -> Result<Vec<IndexStats>, PolarizeError> {
    map_level(p, n, budget, IndexStats::of)
}

fn provenance(selector: Selector, budget: &SynthesisBudget, genie: Option<f64>) -> Provenance {
    Provenance {
        w: None,
        v: None,
        selector,
        budget: budget.into(),
        genie_bound: genie,
    }
}

fn check_k(k: usize, n: usize) -> Result<(), ConstructError> {
    if k > 1 << n {
        Err(ConstructError::KTooLarge { k, n: 1 << n })
    } else {
        Ok(())
    }
}

/// Indices of the `k` smallest keys; ties go to the earlier entry in
/// `order`'s secondary keys and finally to the smaller index.
fn smallest_k<F>(stats: &[IndexStats], k: usize, key: F) -> Vec<u64>
where
    F: Fn(&IndexStats) -> (f64, f64),
{
    let mut order: Vec<&IndexStats> = stats.iter().collect();
    order.sort_by(|a, b| {
        let (a1, a2) = key(a);
        let (b1, b2) = key(b);
        a1.total_cmp(&b1)
            .then(a2.total_cmp(&b2))
            .then(a.index.cmp(&b.index))
    });
    order[..k].iter().map(|s| s.index).collect()
}

/// Matched construction from the stats of `(W, W)`.
pub fn select_matched(
    stats: &[IndexStats],
    n: usize,
    selector: Selector,
    budget: &SynthesisBudget,
) -> Result<PolarCode, ConstructError> {
    let (set, rule) = match selector {
        Selector::Gamma(g) => {
            if !(g > 0.0 && g < 1.0) {
                return Err(ConstructError::BadThreshold {
                    value: g,
                    range: "(0, 1)",
                });
            }
            let set = stats
                .iter()
                .filter(|s| s.i_w >= 1.0 - g)
                .map(|s| s.index)
                .collect();
            (set, Rule::MatchedI)
        }
        Selector::K(k) => {
            check_k(k, n)?;
            (smallest_k(stats, k, |s| (s.z_w, 0.0)), Rule::MatchedZ)
        }
    };
    Ok(PolarCode::new(n, set, rule, provenance(selector, budget, None)))
}

/// Mismatched construction from the stats of `(W, V)`.
pub fn select_mismatched(
    stats: &[IndexStats],
    n: usize,
    selector: Selector,
    budget: &SynthesisBudget,
) -> Result<PolarCode, ConstructError> {
    let set: Vec<u64> = match selector {
        Selector::Gamma(g) => {
            if !(g > 0.0 && g < 0.5) {
                return Err(ConstructError::BadThreshold {
                    value: g,
                    range: "(0, 1/2)",
                });
            }
            stats
                .iter()
                .filter(|s| s.pe_ml <= g)
                .map(|s| s.index)
                .collect()
        }
        Selector::K(k) => {
            check_k(k, n)?;
            smallest_k(stats, k, |s| (s.pe_ml, s.z_wv.to_f64()))
        }
    };
    let genie = genie_bound(stats, &set);
    Ok(PolarCode::new(
        n,
        set,
        Rule::MismatchedPe,
        provenance(selector, budget, Some(genie)),
    ))
}

/// `Σ_{i∈A} P_e,ML` over the given indices.
pub fn genie_bound(stats: &[IndexStats], set: &[u64]) -> f64 {
    crate::numeric::csum(set.iter().map(|&i| stats[(i - 1) as usize].pe_ml))
}

/// Threshold form ranks by `I(W_N^(i))`; size form by `Z(W_N^(i))`.
pub fn info_set_matched(
    w: &Bdmc,
    n: usize,
    selector: Selector,
    budget: &SynthesisBudget,
) -> Result<PolarCode, ConstructError> {
    let stats = level_stats(&ChannelPair::matched(w), n, budget)?;
    select_matched(&stats, n, selector, budget)
}

/// Ranks by `P_e,ML(W_N^(i), V_N^(i))`; size-form ties go to the smaller
/// `Z(W_N^(i), V_N^(i))`, then to the smaller index. The genie bound is
/// recorded in the provenance.
pub fn info_set_mismatched(
    p: &ChannelPair,
    n: usize,
    selector: Selector,
    budget: &SynthesisBudget,
) -> Result<PolarCode, ConstructError> {
    let stats = level_stats(p, n, budget)?;
    select_mismatched(&stats, n, selector, budget)
}

/// `L_n = 2^{-n} Σ_i |I(W_N^(i), V_N^(i))|⁺` for `n = 0..=max_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundLedger {
    pub levels: Vec<(usize, f64)>,
    /// Set when synthesis ran out of budget; the ledger stops just before
    /// the failing depth.
    pub truncated: Option<PolarizeError>,
}

impl BoundLedger {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,L_n\n");
        for (n, l) in &self.levels {
            writeln!(out, "{n},{l}").unwrap();
        }
        out
    }

    pub fn last(&self) -> Option<f64> {
        self.levels.last().map(|&(_, l)| l)
    }
}

pub fn lower_bound_family(p: &ChannelPair, max_n: usize, budget: &SynthesisBudget) -> BoundLedger {
    if p.v_has_null_support() {
        // the −∞ condition survives both transforms, so every term is 0
        return BoundLedger {
            levels: (0..=max_n).map(|n| (n, 0.0)).collect(),
            truncated: None,
        };
    }
    let sums = depth_sums(p, max_n, budget, 1, |x| {
        vec![crate::mismatch::mmi(x).positive_part()]
    });
    BoundLedger {
        levels: sums
            .sums
            .iter()
            .enumerate()
            .map(|(n, s)| (n, (s[0] / (1u64 << n) as f64).min(1.0)))
            .collect(),
        truncated: sums.failure,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mismatch::pair;

    fn budget() -> SynthesisBudget {
        SynthesisBudget::default()
    }

    #[test]
    fn bec_rank_one() {
        let w = Bdmc::bec(0.5).unwrap();
        let code = info_set_matched(&w, 1, Selector::K(1), &budget()).unwrap();
        assert_eq!(code.info_set, vec![2]);
        assert_eq!(code.frozen.keys().copied().collect::<Vec<_>>(), vec![1]);
        assert_eq!(code.rule, Rule::MatchedZ);
        assert!(code.is_consistent());
    }

    #[test]
    fn bec_rank_two() {
        let w = Bdmc::bec(0.5).unwrap();
        let code = info_set_matched(&w, 2, Selector::K(2), &budget()).unwrap();
        // z = 0.9375, 0.5625, 0.4375, 0.0625
        assert_eq!(code.info_set, vec![3, 4]);
    }

    #[test]
    fn full_rate_and_too_large() {
        let w = Bdmc::bsc(0.2).unwrap();
        let code = info_set_matched(&w, 3, Selector::K(8), &budget()).unwrap();
        assert_eq!(code.info_set, (1..=8).collect::<Vec<_>>());
        assert!(code.frozen.is_empty());
        assert_eq!(
            info_set_matched(&w, 3, Selector::K(9), &budget()),
            Err(ConstructError::KTooLarge { k: 9, n: 8 })
        );
        assert!(matches!(
            info_set_mismatched(&ChannelPair::matched(&w), 3, Selector::Gamma(0.5), &budget()),
            Err(ConstructError::BadThreshold { .. })
        ));
    }

    #[test]
    fn pure_noise_metric_selects_nothing() {
        let p = pair(&Bdmc::bsc(0.05).unwrap(), &Bdmc::bsc(0.5).unwrap()).unwrap();
        for g in [0.1, 0.3, 0.49] {
            let code = info_set_mismatched(&p, 3, Selector::Gamma(g), &budget()).unwrap();
            assert!(code.info_set.is_empty());
            assert_eq!(code.provenance.genie_bound, Some(0.0));
        }
    }

    #[test]
    fn genie_bound_recomputed() {
        let p = pair(&Bdmc::bsc(0.06).unwrap(), &Bdmc::bsc(0.1).unwrap()).unwrap();
        let stats = level_stats(&p, 4, &budget()).unwrap();
        let code = select_mismatched(&stats, 4, Selector::K(6), &budget()).unwrap();
        let direct: f64 = code
            .info_set
            .iter()
            .map(|&i| stats[(i - 1) as usize].pe_ml)
            .sum();
        assert!((code.provenance.genie_bound.unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip() {
        let p = pair(&Bdmc::bsc(0.06).unwrap(), &Bdmc::bsc(0.1).unwrap()).unwrap();
        let mut code = info_set_mismatched(&p, 3, Selector::K(3), &budget()).unwrap();
        code.provenance.w = Some("bsc:0.06".into());
        code.frozen.insert(1, 1);
        let text = code.to_json();
        assert!(text.contains("\"MISMATCHED_PE\""));
        assert_eq!(PolarCode::from_json(&text).unwrap(), code);
    }

    #[test]
    fn ledger_bec_pair_is_flat() {
        let p = pair(&Bdmc::bec(0.3).unwrap(), &Bdmc::bec(0.6).unwrap()).unwrap();
        let ledger = lower_bound_family(&p, 6, &budget());
        assert_eq!(ledger.levels.len(), 7);
        for (_, l) in &ledger.levels {
            assert!((l - 0.7).abs() < 1e-12);
        }
        assert!(ledger.to_csv().starts_with("n,L_n\n0,"));
    }

    #[test]
    fn ledger_null_support_is_zero() {
        let w = Bdmc::from_rows(&[0.9, 0.1, 0.0], &[0.1, 0.9, 0.0]).unwrap();
        let p = pair(&w, &Bdmc::bec(0.3).unwrap()).unwrap();
        let ledger = lower_bound_family(&p, 5, &budget());
        assert!(ledger.levels.iter().all(|&(_, l)| l == 0.0));
    }
}
