//! Synthesis checked against channels built straight from their definition:
//! `W_N^(i)(y, u_1^{i-1} | u_i) = 2^{-(N-1)} Σ_{u_{i+1}^N} W^N(y | u B_N F^{⊗n})`
//! with an explicit generator matrix, and every parameter evaluated from its
//! transition-probability form rather than from `Δ`. Probabilities are exact
//! dyadic rationals, so ties and tiny `Δ` are decided exactly; only the final logs and
//! square roots round.

use polar_mismatch::codec::encode_raw;
use polar_mismatch::construct::lower_bound_family;
use polar_mismatch::mismatch::{d_param, mmi, pe_ml, t_param, z_mismatch};
use polar_mismatch::polarize::{signs_of, synthesize_level};
use polar_mismatch::{
    info_set_matched, info_set_mismatched, pair, sample_paths, simulate_block_error, Bdmc, ChannelPair, ExtReal,
    Selector, SynthesisBudget, TiePolicy, TraceThresholds,
};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use proptest::collection::vec;
use proptest::prelude::*;

/// `a / b`, rounded once.
fn ratio(a: &BigInt, b: &BigInt) -> f64 {
    BigRational::new_raw(a.clone(), b.clone()).to_f64().unwrap()
}

/// Rows `(W(y|0), W(y|1))` of a channel as integers over `2^shift`.
#[derive(Debug, Clone)]
struct Rows {
    w0: Vec<BigInt>,
    w1: Vec<BigInt>,
    shift: usize,
}

impl Rows {
    fn of(c: &Bdmc) -> Self {
        let (w0, w1) = c.rows();
        let parts = |x: f64| {
            let (mantissa, exp, _) = num_traits::float::FloatCore::integer_decode(x);
            (mantissa, exp)
        };
        let shift = w0
            .iter()
            .chain(&w1)
            .filter(|&&x| x > 0.0)
            .map(|&x| -parts(x).1)
            .max()
            .unwrap_or(0)
            .max(0) as usize;
        let int = |x: f64| {
            if x == 0.0 {
                return BigInt::zero();
            }
            let (mantissa, exp) = parts(x);
            BigInt::from(mantissa) << (exp + shift as i16) as usize
        };
        Self {
            w0: w0.into_iter().map(int).collect(),
            w1: w1.into_iter().map(int).collect(),
            shift,
        }
    }

    fn len(&self) -> usize {
        self.w0.len()
    }

    fn float(&self, x: &BigInt) -> f64 {
        ratio(x, &(BigInt::from(1) << self.shift))
    }
}

fn bitrev(k: usize, n: usize) -> usize {
    (0..n).fold(0, |acc, b| acc | ((k >> b) & 1) << (n - 1 - b))
}

/// `G = B_N F^{⊗n}` as a dense 0/1 matrix: row `k` of `F^{⊗n}` has ones at
/// the `j` whose bits are a subset of `k`, and `B_N` permutes rows by
/// bit reversal.
fn generator(n: usize) -> Vec<Vec<u8>> {
    let len = 1 << n;
    (0..len)
        .map(|k| {
            let r = bitrev(k, n);
            (0..len).map(|j| (j & r == j) as u8).collect()
        })
        .collect()
}

fn multiply(u: &[u8], g: &[Vec<u8>]) -> Vec<u8> {
    let len = u.len();
    (0..len)
        .map(|j| (0..len).fold(0, |acc, k| acc ^ (u[k] & g[k][j])))
        .collect()
}

/// Every synthetic channel of `W` at level `n`, as rows over the output
/// alphabet `(y_1^N, u_1^{i-1})`.
fn synthetic_channels(w: &Rows, n: usize) -> Vec<Rows> {
    let len = 1usize << n;
    let g = generator(n);
    let outputs = w.len().pow(len as u32);
    let mut out: Vec<Rows> = (0..len)
        .map(|i| Rows {
            w0: vec![BigInt::zero(); outputs << i],
            w1: vec![BigInt::zero(); outputs << i],
            // a product of N letters, times 2^{-(N-1)}
            shift: len * w.shift + len - 1,
        })
        .collect();
    let mut y = vec![0usize; len];
    for u_word in 0..1usize << len {
        // u_1 is the most significant bit of u_word
        let u: Vec<u8> = (0..len).map(|k| ((u_word >> (len - 1 - k)) & 1) as u8).collect();
        let x = multiply(&u, &g);
        for y_word in 0..outputs {
            let mut rest = y_word;
            for slot in y.iter_mut() {
                *slot = rest % w.len();
                rest /= w.len();
            }
            let prob = x.iter().zip(&y).fold(BigInt::from(1), |acc, (&xj, &yj)| {
                acc * if xj == 0 { &w.w0[yj] } else { &w.w1[yj] }
            });
            if prob.is_zero() {
                continue;
            }
            for (i, ch) in out.iter_mut().enumerate() {
                let prefix = u_word >> (len - i);
                let letter = y_word * (1 << i) + prefix;
                if u[i] == 0 {
                    ch.w0[letter] += &prob;
                } else {
                    ch.w1[letter] += &prob;
                }
            }
        }
    }
    out
}

/// Mismatched parameters from their transition-probability definitions.
struct Direct {
    i: f64,
    z: f64,
    pe: f64,
    d: f64,
    t: f64,
}

fn direct(w: &Rows, v: &Rows) -> Direct {
    let (mut i, mut z, mut pe, mut d, mut t) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for y in 0..w.len() {
        let (w0, w1, v0, v1) = (&w.w0[y], &w.w1[y], &v.w0[y], &v.w1[y]);
        let sv = v0 + v1;
        for (wx, vx) in [(w0, v0), (w1, v1)] {
            if !wx.is_zero() {
                // V(y|x) / q_V(y) with q_V(y) = (V(y|0) + V(y|1)) / 2
                let log = if vx.is_zero() { f64::NEG_INFINITY } else { ratio(&(vx * 2), &sv).log2() };
                i += 0.5 * w.float(wx) * log;
            }
        }
        // L_V(y) = V(y|1) / V(y|0); an undefined ratio counts as infinite
        let sqrt_ratio = |num: &BigInt, den: &BigInt| {
            if den.is_zero() {
                f64::INFINITY
            } else {
                ratio(num, den).sqrt()
            }
        };
        if !w0.is_zero() {
            z += 0.5 * w.float(w0) * sqrt_ratio(v1, v0);
        }
        if !w1.is_zero() {
            z += 0.5 * w.float(w1) * sqrt_ratio(v0, v1);
        }
        let q = 0.5 * w.float(&(w0 + w1));
        pe += if v0 == v1 {
            q / 2.0
        } else if v1 > v0 {
            0.5 * w.float(w0)
        } else {
            0.5 * w.float(w1)
        };
        let dv = if sv.is_zero() { 0.0 } else { ratio(&(v0 - v1), &sv) };
        d += q * dv.abs().sqrt();
        t += q * dv.abs();
    }
    Direct { i, z, pe, d, t }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

fn check_level(w: &Bdmc, v: &Bdmc, n: usize) -> Result<(), TestCaseError> {
    let p = pair(w, v).unwrap();
    let (rw, rv) = (Rows::of(w), Rows::of(v));
    let (sw, sv) = (synthetic_channels(&rw, n), synthetic_channels(&rv, n));
    let level = synthesize_level(&p, n, &SynthesisBudget::default()).unwrap();
    for (k, q) in level.iter().enumerate() {
        let want = direct(&sw[k], &sv[k]);
        let at = || format!("index {} ({})", k + 1, signs_of(k as u64 + 1, n).unwrap());
        prop_assert!(close(mmi(q).to_f64(), want.i, 1e-10), "{}: I {} vs {}", at(), mmi(q), want.i);
        prop_assert!(close(z_mismatch(q).to_f64(), want.z, 1e-10), "{}: Z {} vs {}", at(), z_mismatch(q), want.z);
        prop_assert!(close(pe_ml(q), want.pe, 1e-10), "{}: Pe {} vs {}", at(), pe_ml(q), want.pe);
        prop_assert!(close(d_param(q), want.d, 1e-10), "{}: D {} vs {}", at(), d_param(q), want.d);
        prop_assert!(close(t_param(q, 1), want.t, 1e-10), "{}: T {} vs {}", at(), t_param(q, 1), want.t);
    }
    Ok(())
}

fn row(len: usize) -> impl Strategy<Value = Vec<f64>> {
    vec(prop_oneof![1 => Just(0.0), 5 => 0.01f64..1.0], len).prop_map(|mut r| {
        if r.iter().all(|&x| x == 0.0) {
            r[0] = 1.0;
        }
        let s: f64 = r.iter().sum();
        r.iter_mut().for_each(|x| *x /= s);
        r
    })
}

fn channel(len: usize) -> impl Strategy<Value = Bdmc> {
    (row(len), row(len)).prop_map(|(a, b)| Bdmc::from_rows(&a, &b).unwrap())
}

#[test]
fn generator_matches_encoder() {
    for n in 0..=4 {
        let g = generator(n);
        for word in 0..1usize << (1 << n) {
            let u: Vec<u8> = (0..1 << n).map(|k| ((word >> k) & 1) as u8).collect();
            assert_eq!(encode_raw(&u, n), multiply(&u, &g));
        }
    }
}

#[test]
fn explicit_four_by_four_example() {
    assert_eq!(multiply(&[0, 1, 0, 0], &generator(2)), vec![1, 0, 1, 0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn binary_pairs_match_definition(w in channel(2), v in channel(2), n in 1usize..=3) {
        check_level(&w, &v, n)?;
    }

    #[test]
    fn ternary_pairs_match_definition(w in channel(3), v in channel(3), n in 1usize..=2) {
        check_level(&w, &v, n)?;
    }
}

#[test]
fn named_pairs_match_definition() {
    let bsc = |p| Bdmc::bsc(p).unwrap();
    let bec = |e| Bdmc::bec(e).unwrap();
    let cases = [
        (bsc(0.2), bsc(0.8)),
        (bsc(0.11), bsc(0.11)),
        (bsc(0.1), bsc(0.5)),
        (bec(0.3), bec(0.6)),
        (bec(0.5), bec(0.5)),
    ];
    for (w, v) in &cases {
        check_level(w, v, 3).unwrap();
    }
}

#[test]
fn bec_size_form_picks_the_plus_indices() {
    let w = Bdmc::bec(0.5).unwrap();
    let b = SynthesisBudget::default();
    assert_eq!(info_set_matched(&w, 1, Selector::K(1), &b).unwrap().info_set, vec![2]);
    assert_eq!(info_set_matched(&w, 2, Selector::K(2), &b).unwrap().info_set, vec![3, 4]);
}

#[test]
fn pure_noise_metric_selects_nothing() {
    let b = SynthesisBudget::default();
    for w in [Bdmc::bsc(0.05).unwrap(), Bdmc::bsc(0.3).unwrap()] {
        let p = pair(&w, &Bdmc::bsc(0.5).unwrap()).unwrap();
        for g in [0.01, 0.1, 0.4, 0.49] {
            assert!(info_set_mismatched(&p, 4, Selector::Gamma(g), &b).unwrap().info_set.is_empty());
        }
    }
}

#[test]
fn reflected_bsc_differs_only_on_the_all_plus_index() {
    let p = pair(&Bdmc::bsc(0.2).unwrap(), &Bdmc::bsc(0.8).unwrap()).unwrap();
    let level = synthesize_level(&p, 2, &SynthesisBudget::default()).unwrap();
    let mismatched: Vec<usize> = level
        .iter()
        .enumerate()
        .filter(|(_, q)| !q.is_matched(1e-12))
        .map(|(k, _)| k + 1)
        .collect();
    assert_eq!(mismatched, vec![4]);
}

#[test]
fn ledgers() {
    let b = SynthesisBudget::default();
    let bec = lower_bound_family(&pair(&Bdmc::bec(0.3).unwrap(), &Bdmc::bec(0.6).unwrap()).unwrap(), 8, &b);
    assert!(bec.levels.iter().all(|&(_, l)| (l - 0.7).abs() < 1e-12));

    let bsc = lower_bound_family(&ChannelPair::matched(&Bdmc::bsc(0.11).unwrap()), 6, &b);
    assert!(bsc.truncated.is_none());
    for x in bsc.levels.windows(2) {
        assert!(x[1].1 >= x[0].1 - 1e-12);
    }
    // matched: every I_N^(i) is nonnegative and averages to I(W), so the bound is flat
    let capacity = Bdmc::bsc(0.11).unwrap().matched_params().capacity;
    assert!((bsc.last().unwrap() - capacity).abs() < 1e-9);

    let w = Bdmc::from_rows(&[0.9, 0.1, 0.0], &[0.1, 0.9, 0.0]).unwrap();
    let null = lower_bound_family(&pair(&w, &Bdmc::bec(0.3).unwrap()).unwrap(), 6, &b);
    assert!(null.levels.iter().all(|&(_, l)| l == 0.0));
}

#[test]
fn bec_paths_keep_their_mean_and_polarize() {
    let p = ChannelPair::matched(&Bdmc::bec(0.5).unwrap());
    let t = sample_paths(&p, 12, 4096, 7, &SynthesisBudget::default(), TraceThresholds::default());
    for l in &t.levels {
        let ExtReal::Finite(mean) = l.i.mean else { panic!("{:?}", l.i.mean) };
        assert!((mean - 0.5).abs() < 4.0 * l.i.std_err.unwrap().max(1e-12), "depth {}: {mean}", l.depth);
    }
    assert!(t.levels[12].frac_i_mid < t.levels[6].frac_i_mid);
}

#[test]
fn simulation_respects_the_genie_bound() {
    let w = Bdmc::bec(0.5).unwrap();
    let code = info_set_matched(&w, 8, Selector::K(40), &SynthesisBudget::default()).unwrap();
    let p = ChannelPair::matched(&w);
    let bound = info_set_mismatched(&p, 8, Selector::K(40), &SynthesisBudget::default())
        .unwrap()
        .provenance
        .genie_bound
        .unwrap();
    let r = simulate_block_error(&code, &w, &w, 20_000, 3, TiePolicy::FairCoin).unwrap();
    assert!(r.p_hat <= bound + 3.0 * r.std_err(), "{} vs {bound}", r.p_hat);
}

#[test]
fn independent_seeds_agree() {
    let (w, v) = (Bdmc::bsc(0.06).unwrap(), Bdmc::bsc(0.1).unwrap());
    let code = info_set_mismatched(
        &pair(&w, &v).unwrap(),
        8,
        Selector::K(64),
        &SynthesisBudget::quantized(0.1),
    )
    .unwrap();
    let a = simulate_block_error(&code, &w, &v, 10_000, 42, TiePolicy::FairCoin).unwrap();
    let b = simulate_block_error(&code, &w, &v, 10_000, 43, TiePolicy::FairCoin).unwrap();
    assert!(a.ci95.0 <= b.ci95.1 && b.ci95.0 <= a.ci95.1, "{:?} vs {:?}", a.ci95, b.ci95);
}
