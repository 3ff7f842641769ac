//! Block-error simulation and sampling of the polarization process.
//!
//! Every trial and every path draws from its own ChaCha8 stream
//! (`seed`, stream = trial or path index), so results do not depend on the
//! number of worker threads.

use std::fmt::Write as _;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::channel::Bdmc;
use crate::codec::{
    encode, stream_rng, ChannelSampler, CodecError, DecoderMetric, ScDecoder, TiePolicy,
};
use crate::construct::PolarCode;
use crate::mismatch::{d_param, mmi, pe_ml, t_param, z_mismatch, ChannelPair, ExtReal};
use crate::polarize::{transform, Sign, SynthesisBudget};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let den = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / den;
    let half = z / den * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half).clamp(0.0, p), (center + half).clamp(p, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub trials: u64,
    pub block_errors: u64,
    pub p_hat: f64,
    pub ci95: (f64, f64),
    pub seed: u64,
    pub tie_policy: TiePolicy,
    /// Union bound `Σ_{i∈A} P_e,ML` carried by the code, when known.
    pub genie_bound: Option<f64>,
    pub runtime_s: f64,
}

impl SimReport {
    /// Binomial standard error of `p_hat`.
    pub fn std_err(&self) -> f64 {
        (self.p_hat * (1.0 - self.p_hat) / self.trials.max(1) as f64).sqrt()
    }
}

/// Sends uniformly random messages through `W` and decodes with metric `V`.
pub fn simulate_block_error(
    code: &PolarCode,
    w: &Bdmc,
    v: &Bdmc,
    trials: u64,
    seed: u64,
    policy: TiePolicy,
) -> Result<SimReport, CodecError> {
    if w.len() != v.len() {
        return Err(CodecError::ChannelAlphabets {
            w: w.len(),
            v: v.len(),
        });
    }
    let start = Instant::now();
    let metric = DecoderMetric::new(v);
    let sampler = ChannelSampler::new(w);
    const CHUNK: u64 = 64;
    let counts: Vec<u64> = (0..trials.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| -> Result<u64, CodecError> {
            let mut dec = ScDecoder::new(code.n);
            let mut y = Vec::with_capacity(code.blocklength());
            let mut errors = 0;
            for t in c * CHUNK..((c + 1) * CHUNK).min(trials) {
                let mut rng = stream_rng(seed, t);
                let msg: Vec<u8> = (0..code.k()).map(|_| rng.gen::<bool>() as u8).collect();
                sampler.transmit(&encode(code, &msg)?, &mut rng, &mut y);
                let out = dec.decode(code, &metric, &y, policy, &mut rng)?;
                errors += (out.message != msg) as u64;
            }
            Ok(errors)
        })
        .collect::<Result<_, _>>()?;
    let block_errors = counts.iter().sum();
    let p_hat = if trials == 0 {
        0.0
    } else {
        block_errors as f64 / trials as f64
    };
    Ok(SimReport {
        trials,
        block_errors,
        p_hat,
        ci95: wilson_interval(block_errors, trials, Z95),
        seed,
        tie_policy: policy,
        genie_bound: code.provenance.genie_bound,
        runtime_s: start.elapsed().as_secs_f64(),
    })
}

/// Thresholds used by the per-depth fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceThresholds {
    /// `γ` in the `P_e,ML` and `I` fractions.
    pub gamma: f64,
    /// `β` in `Z < 2^{−2^{βn}}`.
    pub beta: f64,
}

impl Default for TraceThresholds {
    fn default() -> Self {
        Self {
            gamma: 0.1,
            beta: 0.4,
        }
    }
}

/// Sample mean, its standard error and quantiles.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub mean: ExtReal,
    /// `None` when some sample is infinite.
    pub std_err: Option<f64>,
    /// At probabilities 0.1, 0.25, 0.5, 0.75, 0.9 (nearest rank).
    pub quantiles: [ExtReal; 5],
}

const QUANTILE_PROBS: [f64; 5] = [0.1, 0.25, 0.5, 0.75, 0.9];

impl Summary {
    fn of(samples: &[f64]) -> Self {
        let n = samples.len();
        if n == 0 {
            return Self {
                mean: ExtReal::Finite(f64::NAN),
                std_err: None,
                quantiles: [ExtReal::Finite(f64::NAN); 5],
            };
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let std_err = mean.is_finite().then(|| {
            if n < 2 {
                0.0
            } else {
                let ss: f64 = samples.iter().map(|x| (x - mean).powi(2)).sum();
                (ss / (n - 1) as f64 / n as f64).sqrt()
            }
        });
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let quantiles = QUANTILE_PROBS.map(|p| {
            let rank = ((p * n as f64).ceil() as usize).clamp(1, n);
            ExtReal::from(sorted[rank - 1])
        });
        Self {
            mean: ExtReal::from(mean),
            std_err,
            quantiles,
        }
    }
}

/// Parameters of one sampled node.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Sample {
    i: f64,
    d: f64,
    z: f64,
    t: f64,
    pe: f64,
}

impl Sample {
    fn of(p: &ChannelPair) -> Self {
        Self {
            i: mmi(p).to_f64(),
            d: d_param(p),
            z: z_mismatch(p).to_f64(),
            t: t_param(p, 1),
            pe: pe_ml(p),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DepthSummary {
    pub depth: usize,
    /// Paths that reached this depth.
    pub alive: u64,
    /// Paths that stopped here because the budget was exceeded.
    pub truncated: u64,
    pub i: Summary,
    pub d: Summary,
    pub z: Summary,
    pub t: Summary,
    pub pe_ml: Summary,
    /// `P_e,ML ∈ (γ, ½ − γ)`.
    pub frac_mid: f64,
    /// `P_e,ML ≤ γ`.
    pub frac_pe_low: f64,
    /// `P_e,ML ≥ ½ − γ`.
    pub frac_pe_high: f64,
    /// `I ∈ (γ, 1 − γ)`.
    pub frac_i_mid: f64,
    /// `Z < 2^{−2^{βn}}`.
    pub frac_z_fast: f64,
    /// `Z > 1 − 2^{−2^{βn}}`.
    pub frac_z_slow: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolarizationTrace {
    pub depth: usize,
    pub paths: u64,
    pub seed: u64,
    pub thresholds: TraceThresholds,
    pub levels: Vec<DepthSummary>,
}

impl PolarizationTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("depth,mean_I,mean_D,mean_Z,frac_mid,frac_pe_low,frac_pe_high\n");
        for l in &self.levels {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                l.depth, l.i.mean, l.d.mean, l.z.mean, l.frac_mid, l.frac_pe_low, l.frac_pe_high
            )
            .unwrap();
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }
}

/// Follows `paths` uniformly random sign sequences of length `depth`.
///
/// A path whose next transform exceeds the budget stops there and is
/// counted as truncated at that depth.
pub fn sample_paths(
    p: &ChannelPair,
    depth: usize,
    paths: u64,
    seed: u64,
    budget: &SynthesisBudget,
    thresholds: TraceThresholds,
) -> PolarizationTrace {
    let runs: Vec<(Vec<Sample>, bool)> = (0..paths)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(seed, k);
            let mut node = budget.tidy(p);
            let mut out = Vec::with_capacity(depth + 1);
            out.push(Sample::of(&node));
            for _ in 0..depth {
                let sign = if rng.gen::<bool>() { Sign::Plus } else { Sign::Minus };
                match transform(&node, sign, budget) {
                    Ok(next) => node = next,
                    Err(_) => return (out, true),
                }
                out.push(Sample::of(&node));
            }
            (out, false)
        })
        .collect();

    let levels = (0..=depth)
        .map(|d| {
            let at: Vec<Sample> = runs.iter().filter_map(|(s, _)| s.get(d).copied()).collect();
            let truncated = runs
                .iter()
                .filter(|(s, cut)| *cut && s.len() == d)
                .count() as u64;
            let column = |f: fn(&Sample) -> f64| at.iter().map(f).collect::<Vec<_>>();
            let frac = |pred: &dyn Fn(&Sample) -> bool| {
                if at.is_empty() {
                    f64::NAN
                } else {
                    at.iter().filter(|s| pred(s)).count() as f64 / at.len() as f64
                }
            };
            let g = thresholds.gamma;
            let fast = (-(2f64.powf(thresholds.beta * d as f64))).exp2();
            DepthSummary {
                depth: d,
                alive: at.len() as u64,
                truncated,
                i: Summary::of(&column(|s| s.i)),
                d: Summary::of(&column(|s| s.d)),
                z: Summary::of(&column(|s| s.z)),
                t: Summary::of(&column(|s| s.t)),
                pe_ml: Summary::of(&column(|s| s.pe)),
                frac_mid: frac(&|s| s.pe > g && s.pe < 0.5 - g),
                frac_pe_low: frac(&|s| s.pe <= g),
                frac_pe_high: frac(&|s| s.pe >= 0.5 - g),
                frac_i_mid: frac(&|s| s.i > g && s.i < 1.0 - g),
                frac_z_fast: frac(&|s| s.z < fast),
                frac_z_slow: frac(&|s| s.z > 1.0 - fast),
            }
        })
        .collect();

    PolarizationTrace {
        depth,
        paths,
        seed,
        thresholds,
        levels,
    }
}
