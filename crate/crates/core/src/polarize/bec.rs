//! Closed-form recursion for matched erasure channels.
//!
//! A matched BEC stays a BEC under both transforms, so a synthetic channel
//! is described by its Bhattacharyya parameter `z` (the erasure
//! probability) alone. Both `z` and `1 − z` are carried so that values
//! within `2^-53` of one are not lost to rounding:
//!
//! * minus: `z' = z(2 − z)`, `1 − z' = (1 − z)²`
//! * plus:  `z' = z²`,       `1 − z' = (1 − z)(1 + z)`

use super::Sign;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BecState {
    /// Erasure probability, equal to `Z`.
    pub z: f64,
    /// `1 − z`, held separately; equal to `I`.
    pub fz: f64,
}

impl BecState {
    pub fn new(e: f64) -> Self {
        Self { z: e, fz: 1.0 - e }
    }

    pub fn minus(self) -> Self {
        Self {
            z: self.z * (1.0 + self.fz),
            fz: self.fz * self.fz,
        }
    }

    pub fn plus(self) -> Self {
        Self {
            z: self.z * self.z,
            fz: self.fz * (1.0 + self.z),
        }
    }

    pub fn step(self, sign: Sign) -> Self {
        match sign {
            Sign::Minus => self.minus(),
            Sign::Plus => self.plus(),
        }
    }
}

/// States of all `2^n` synthetic channels of `BEC(e)`, in index order.
pub fn level(e: f64, n: usize) -> Vec<BecState> {
    let mut cur = vec![BecState::new(e)];
    for _ in 0..n {
        // the first transform is the most significant index bit, so the
        // children of entry m land at 2m and 2m + 1
        let mut next = Vec::with_capacity(cur.len() * 2);
        for s in &cur {
            next.push(s.minus());
            next.push(s.plus());
        }
        cur = next;
    }
    cur
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::Bdmc;
    use crate::mismatch::{tie_mass, ChannelPair};
    use crate::polarize::{signs_of, synthesize, SynthesisBudget};

    #[test]
    fn agrees_with_generic_synthesis() {
        let n = 4;
        let states = level(0.3, n);
        let p = ChannelPair::matched(&Bdmc::bec(0.3).unwrap());
        for (k, st) in states.iter().enumerate() {
            let s = signs_of(k as u64 + 1, n).unwrap();
            let q = synthesize(&p, &s, &SynthesisBudget::default()).unwrap();
            assert!((tie_mass(&q) - st.z).abs() < 1e-14);
            assert!((st.z + st.fz - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn keeps_tiny_complements() {
        let mut s = BecState::new(0.5);
        for _ in 0..8 {
            s = s.minus();
        }
        assert_eq!(s.z, 1.0);
        assert!(s.fz > 0.0 && s.fz == 0.5f64.powi(256));
    }
}
