//! Small numeric helpers shared by the parameter computations.

/// Neumaier-compensated running sum.
///
/// Synthesized channels carry many tiny masses; plain summation loses
/// digits once alphabets reach tens of thousands of symbols.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub(crate) fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

pub(crate) fn csum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

/// `x * log2(y)` with the convention `0 * log2(0) = 0`.
#[inline]
pub(crate) fn xlog2y(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.log2()
    }
}

/// Relative size below which a sum of two opposite-signed terms is read as
/// an exact cancellation.
pub(crate) const TIE_REL: f64 = 1e-10;

/// `a + b`, or exactly 0 when the terms cancel to within [`TIE_REL`].
///
/// Algebraically equal likelihood ratios reached through different
/// rounding paths would otherwise decide a tie by rounding noise.
#[inline]
pub(crate) fn snapped_sum(a: f64, b: f64) -> f64 {
    let s = a + b;
    if s.is_finite() && s.abs() <= TIE_REL * (a.abs() + b.abs()) {
        0.0
    } else {
        s
    }
}

/// LLR `ln((1 + Δ) / (1 − Δ))` of a letter with parameter `Δ`.
#[inline]
pub(crate) fn llr_of(delta: f64) -> f64 {
    delta.ln_1p() - (-delta).ln_1p()
}

/// `Δ = tanh(λ / 2)` of a letter with LLR `λ`.
#[inline]
pub(crate) fn delta_of(llr: f64) -> f64 {
    (llr / 2.0).tanh()
}

/// Running `ln Σ e^{x_i}`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LogSum {
    max: f64,
    scaled: f64,
}

impl LogSum {
    pub(crate) const EMPTY: LogSum = LogSum {
        max: f64::NEG_INFINITY,
        scaled: 0.0,
    };

    #[inline]
    pub(crate) fn add(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x > self.max {
            self.scaled = self.scaled * (self.max - x).exp() + 1.0;
            self.max = x;
        } else {
            self.scaled += (x - self.max).exp();
        }
    }

    pub(crate) fn value(&self) -> f64 {
        self.max + self.scaled.ln()
    }
}

/// Accumulates the `q`-weighted mean of `Δ = tanh(λ/2)` over letters given
/// by their LLRs and returns it as an LLR. The two likelihoods
/// `(1 ± Δ) / 2` are summed separately in the log domain, so letters near
/// `Δ = ±1` keep their precision. Small means come from a plain sum of `qΔ`
/// instead, where the difference of two nearly equal logs would lose them.
#[derive(Debug, Clone, Copy)]
pub(crate) struct MeanLlr {
    up: LogSum,
    down: LogSum,
    mass: f64,
    bias: f64,
}

impl MeanLlr {
    pub(crate) const EMPTY: MeanLlr = MeanLlr {
        up: LogSum::EMPTY,
        down: LogSum::EMPTY,
        mass: 0.0,
        bias: 0.0,
    };

    #[inline]
    pub(crate) fn add(&mut self, q: f64, llr: f64) {
        let lq = q.ln();
        self.up.add(lq - softplus(-llr));
        self.down.add(lq - softplus(llr));
        self.mass += q;
        self.bias += q * (llr / 2.0).tanh();
    }

    pub(crate) fn value(&self) -> f64 {
        let mean = self.bias / self.mass;
        if mean.abs() < 0.5 {
            2.0 * mean.atanh()
        } else {
            self.up.value() - self.down.value()
        }
    }
}

/// Logistic `1 / (1 + e^{−x})`, accurate in both tails.
#[inline]
pub(crate) fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Check-node combination `2 atanh(tanh(a/2) tanh(b/2))`.
///
/// Zero if either side is zero, NaN if either is NaN, and an infinite side
/// passes the other through with the product sign.
pub fn boxplus(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        return f64::NAN;
    }
    if a == 0.0 || b == 0.0 {
        return 0.0;
    }
    let sign = if (a < 0.0) != (b < 0.0) { -1.0 } else { 1.0 };
    let (x, y) = (a.abs(), b.abs());
    let m = if x.is_infinite() {
        y
    } else if y.is_infinite() {
        x
    } else if x.min(y) < 1.0 {
        2.0 * ((x / 2.0).tanh() * (y / 2.0).tanh()).atanh()
    } else {
        x.min(y) + (-(x + y)).exp().ln_1p() - (-(x - y).abs()).exp().ln_1p()
    };
    sign * m
}

/// Binary entropy in bits.
pub fn binary_entropy(p: f64) -> f64 {
    -xlog2y(p, p) - xlog2y(1.0 - p, 1.0 - p)
}

/// Binary KL divergence `D(p || q)` in bits.
pub fn binary_divergence(p: f64, q: f64) -> f64 {
    let term = |a: f64, b: f64| if a == 0.0 { 0.0 } else { a * (a / b).log2() };
    term(p, q) + term(1.0 - p, 1.0 - q)
}
