//! Continued fractions and denominator combination: turning a measured
//! `x/N` into a candidate `k/r` and candidate periods into a verified one.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::arith::lcm;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Fraction {
    pub num: u64,
    pub den: u64,
}

impl Fraction {
    pub fn new(num: u64, den: u64) -> Self {
        Self { num, den }
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

/// Convergents of `x/N`, denominators strictly increasing, each in lowest
/// terms, the last equal to `x/N`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvergentList {
    pub x: u64,
    #[serde(rename = "N")]
    pub n: u64,
    pub convergents: Vec<Fraction>,
}

impl ConvergentList {
    pub fn last(&self) -> Fraction {
        *self.convergents.last().expect("at least one convergent")
    }
}

/// Euclidean expansion of `x/N` for `0 <= x < N`.
///
/// When the first partial quotient is 1 the convergents `0/1` and `1/1`
/// share a denominator; only `1/1`, the closer one, is kept.
pub fn continued_fractions(x: u64, n: u64) -> Result<ConvergentList> {
    if n == 0 || x >= n {
        return Err(Error::InvalidParameter(format!("need 0 <= x < N, got {x}/{n}")));
    }
    // x/N = [0; a_1, a_2, ...], so expand N/x after the leading 0/1.
    let mut convergents = vec![Fraction::new(0, 1)];
    let (mut h_prev, mut h) = (1u128, 0u128);
    let (mut k_prev, mut k) = (0u128, 1u128);
    let (mut num, mut den) = (n as u128, x as u128);
    while den != 0 {
        let q = num / den;
        (h_prev, h) = (h, q * h + h_prev);
        (k_prev, k) = (k, q * k + k_prev);
        let f = Fraction::new(h as u64, k as u64);
        if convergents.last().is_some_and(|l| l.den == f.den) {
            convergents.pop();
        }
        convergents.push(f);
        (num, den) = (den, num % den);
    }
    Ok(ConvergentList { x, n, convergents })
}

/// The convergent of `x/N` with the largest denominator not exceeding
/// `bound`. If some `k/r` with `r <= bound` lies within `1/(2 bound^2)` of
/// `x/N`, this is it.
pub fn best_denominator_bounded(x: u64, n: u64, bound: u64) -> Result<Fraction> {
    if bound == 0 {
        return Err(Error::InvalidParameter("denominator bound must be >= 1".into()));
    }
    let list = continued_fractions(x, n)?;
    Ok(list.convergents.iter().rev().find(|f| f.den <= bound).copied().unwrap_or(Fraction::new(0, 1)))
}

/// Running lcm of candidate denominators, each of which divides the true
/// period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenominatorCombiner {
    current: u64,
}

impl Default for DenominatorCombiner {
    fn default() -> Self {
        Self { current: 1 }
    }
}

impl DenominatorCombiner {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn current(&self) -> u64 {
        self.current
    }

    pub fn push(&mut self, denominator: u64) -> u64 {
        self.current = lcm(self.current, denominator.max(1));
        self.current
    }
}

/// Folds `candidates` into a running lcm and returns it at the first value
/// the verifier accepts.
pub fn combine_denominators(candidates: &[u64], mut verifier: impl FnMut(u64) -> bool) -> Result<u64> {
    let mut acc = DenominatorCombiner::new();
    for &c in candidates {
        let r = acc.push(c);
        if verifier(r) {
            return Ok(r);
        }
    }
    Err(Error::NoVerifiedCandidate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::{gcd, pow_mod};
    use proptest::prelude::*;

    fn fr(p: u64, q: u64) -> Fraction {
        Fraction::new(p, q)
    }

    /// Best approximations of the second kind by exhaustive search: `p/q`
    /// such that `|q x - p N|` is strictly smaller than for every smaller
    /// denominator. `p` rounds half down.
    fn brute_best_approximations(x: u64, n: u64) -> Vec<Fraction> {
        let mut out = Vec::new();
        let mut best = u64::MAX;
        for q in 1..=n {
            let qx = q * x;
            let p = (qx + (n - 1) / 2) / n;
            let err = qx.abs_diff(p * n);
            if err < best {
                best = err;
                out.push(fr(p, q));
            }
            if err == 0 {
                break;
            }
        }
        out
    }

    fn brute_closest_bounded(x: u64, n: u64, bound: u64) -> Fraction {
        let mut best = fr(0, 1);
        let mut best_err = (x as f64 / n as f64).abs();
        for q in 1..=bound {
            for p in 0..=q {
                let err = (p as f64 / q as f64 - x as f64 / n as f64).abs();
                if err < best_err - 1e-15 {
                    best = fr(p, q);
                    best_err = err;
                }
            }
        }
        let g = gcd(best.num, best.den);
        fr(best.num / g, best.den / g)
    }

    #[test]
    fn zero_is_zero_over_one() {
        assert_eq!(continued_fractions(0, 8).unwrap().convergents, vec![fr(0, 1)]);
        assert_eq!(continued_fractions(0, 1).unwrap().convergents, vec![fr(0, 1)]);
    }

    #[test]
    fn one_half() {
        assert_eq!(continued_fractions(1, 2).unwrap().convergents, vec![fr(0, 1), fr(1, 2)]);
    }

    #[test]
    fn three_eighths() {
        assert_eq!(continued_fractions(3, 8).unwrap().convergents, vec![fr(0, 1), fr(1, 2), fr(1, 3), fr(3, 8)]);
    }

    #[test]
    fn leading_one_drops_zero() {
        assert_eq!(continued_fractions(5, 8).unwrap().convergents, vec![fr(1, 1), fr(1, 2), fr(2, 3), fr(5, 8)]);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(continued_fractions(8, 8).is_err());
        assert!(continued_fractions(0, 0).is_err());
    }

    #[test]
    fn convergents_match_best_approximations_exhaustively() {
        for n in 1..=512u64 {
            for x in 0..n {
                let list = continued_fractions(x, n).unwrap();
                assert_eq!(list.convergents, brute_best_approximations(x, n), "{x}/{n}");
                let last = list.last();
                assert_eq!(last.num as u128 * n as u128, x as u128 * last.den as u128);
                for w in list.convergents.windows(2) {
                    assert!(w[0].den < w[1].den);
                }
                for f in &list.convergents {
                    assert_eq!(gcd(f.num, f.den), 1);
                }
            }
        }
    }

    #[test]
    fn bounded_examples() {
        assert_eq!(best_denominator_bounded(3, 8, 4).unwrap(), fr(1, 3));
        assert_eq!(brute_closest_bounded(3, 8, 4), fr(1, 3));
        assert_eq!(best_denominator_bounded(5, 8, 8).unwrap(), fr(5, 8));
        assert_eq!(best_denominator_bounded(0, 8, 3).unwrap(), fr(0, 1));
    }

    #[test]
    fn register_precision_makes_recovery_unique() {
        for r in 1..=32u64 {
            let l = (2.0 * (r as f64).log2()).ceil() as u32 + 1;
            let n = 1u64 << l;
            for k in 0..r {
                let x = ((n * k) as f64 / r as f64).round() as u64 % n;
                let g = gcd(k, r);
                let got = best_denominator_bounded(x, n, r).unwrap();
                let expect = if k == 0 { fr(0, 1) } else { fr(k / g, r / g) };
                assert_eq!(got, expect, "r={r} k={k} x={x} N={n}");
            }
        }
    }

    #[test]
    fn combine_examples() {
        assert_eq!(combine_denominators(&[4], |r| pow_mod(2, r, 15) == 1).unwrap(), 4);
        assert_eq!(combine_denominators(&[2, 3], |r| r % 6 == 0).unwrap(), 6);
        assert_eq!(combine_denominators(&[1], |_| true).unwrap(), 1);
        assert_eq!(combine_denominators(&[2, 2], |r| r % 3 == 0), Err(Error::NoVerifiedCandidate));
    }

    proptest! {
        #[test]
        fn intermediates_divide_the_result(ds in proptest::collection::vec(1u64..40, 1..8)) {
            let mut seen = Vec::new();
            let r = combine_denominators(&ds, |r| { seen.push(r); false }).err();
            prop_assert_eq!(r, Some(Error::NoVerifiedCandidate));
            let last = *seen.last().unwrap();
            for s in &seen {
                prop_assert_eq!(last % s, 0);
            }
        }

        #[test]
        fn bounded_is_closest_within_half_over_b_squared(r in 1u64..40, k in 0u64..40, l in 1u32..16) {
            let k = k % r;
            let n = 1u64 << l;
            let x = ((n * k) as f64 / r as f64).round() as u64 % n;
            let err = (x as f64 / n as f64 - k as f64 / r as f64).abs();
            let got = best_denominator_bounded(x, n, r).unwrap();
            if err < 1.0 / (2.0 * (r * r) as f64) {
                let g = gcd(k, r).max(1);
                let expect = if k == 0 { fr(0, 1) } else { fr(k / g, r / g) };
                prop_assert_eq!(got, expect);
                prop_assert_eq!(got, brute_closest_bounded(x, n, r));
            }
        }
    }
}
