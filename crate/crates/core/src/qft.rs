//! Fourier transform over `Z_N` for arbitrary `N`, the estimator
//! distribution it produces on a phase state, and control-register sizing.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::amplitudes::{DenseUnitary, RegisterOperator, DEFAULT_DIM_CAP};
use crate::error::{Error, Result};

/// `F_N |a> = N^{-1/2} sum_x e^{2 pi i a x / N} |x>`, or its inverse.
///
/// Power-of-two sizes use an iterative radix-2 transform; every other size
/// is applied directly at `O(N^2)` from a table of roots of unity.
#[derive(Debug, Clone)]
pub struct FourierTransform {
    n: usize,
    inverse: bool,
    roots: Vec<Complex64>,
}

impl FourierTransform {
    pub fn new(n: usize, inverse: bool) -> Result<Self> {
        Self::with_cap(n, inverse, DEFAULT_DIM_CAP)
    }

    pub fn with_cap(n: usize, inverse: bool, cap: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("Fourier transform of size 0".into()));
        }
        if n > cap {
            return Err(Error::DimensionCap { requested: n as u128, cap });
        }
        let sign = if inverse { -1.0 } else { 1.0 };
        let roots = (0..n).map(|k| Complex64::from_polar(1.0, sign * 2.0 * PI * k as f64 / n as f64)).collect();
        Ok(Self { n, inverse, roots })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn is_inverse(&self) -> bool {
        self.inverse
    }

    pub fn to_dense(&self) -> DenseUnitary {
        let n = self.n;
        let scale = 1.0 / (n as f64).sqrt();
        let entries = (0..n * n).map(|i| self.roots[((i / n) * (i % n)) % n] * scale).collect();
        DenseUnitary::from_entries_unchecked(n, entries)
    }

    fn radix2(&self, data: &mut [Complex64]) {
        let n = self.n;
        let bits = n.trailing_zeros();
        if bits == 0 {
            return;
        }
        for i in 0..n {
            let j = i.reverse_bits() >> (usize::BITS - bits);
            if i < j {
                data.swap(i, j);
            }
        }
        let mut twiddles = Vec::with_capacity(n / 2);
        let mut len = 2;
        while len <= n {
            let half = len / 2;
            let step = n / len;
            twiddles.clear();
            twiddles.extend((0..half).map(|k| self.roots[k * step]));
            for block in data.chunks_exact_mut(len) {
                let (lo, hi) = block.split_at_mut(half);
                for ((a, b), w) in lo.iter_mut().zip(hi.iter_mut()).zip(&twiddles) {
                    let t = *b * w;
                    *b = *a - t;
                    *a += t;
                }
            }
            len <<= 1;
        }
    }
}

impl RegisterOperator for FourierTransform {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply_fiber(&self, input: &[Complex64], output: &mut [Complex64]) {
        let n = self.n;
        let scale = 1.0 / (n as f64).sqrt();
        if n.is_power_of_two() {
            output.copy_from_slice(input);
            self.radix2(output);
            output.iter_mut().for_each(|v| *v *= scale);
            return;
        }
        for (x, out) in output.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            let mut idx = 0usize;
            for a in input {
                acc += a * self.roots[idx];
                idx += x;
                if idx >= n {
                    idx -= n;
                }
            }
            *out = acc * scale;
        }
    }
}

pub fn fourier(n: usize) -> Result<FourierTransform> {
    FourierTransform::new(n, false)
}

pub fn inverse_fourier(n: usize) -> Result<FourierTransform> {
    FourierTransform::new(n, true)
}

/// Outcome law of measuring `F_N^{-1}` applied to the phase state
/// `N^{-1/2} sum_y e^{2 pi i phi y} |y>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorDistribution {
    #[serde(rename = "N")]
    pub n: usize,
    pub phi: f64,
    pub probs: Vec<f64>,
}

impl EstimatorDistribution {
    /// The `x` minimising `circular_distance(x)`, smaller `x` on ties.
    pub fn closest_outcome(&self) -> usize {
        let lo = (self.phi * self.n as f64).floor() as usize % self.n;
        let hi = (lo + 1) % self.n;
        let (dl, dh) = (self.circular_distance(lo), self.circular_distance(hi));
        if dl < dh || (dl == dh && lo < hi) {
            lo
        } else {
            hi
        }
    }

    /// `|x/N - phi|` measured around the unit circle.
    pub fn circular_distance(&self, x: usize) -> f64 {
        circular_distance(x as f64 / self.n as f64, self.phi)
    }

    /// Probability that the outcome lies within `k/N` of `phi`.
    pub fn mass_within(&self, k: usize) -> f64 {
        let bound = k as f64 / self.n as f64 + 1e-15;
        self.probs.iter().enumerate().filter(|&(x, _)| self.circular_distance(x) <= bound).map(|(_, p)| p).sum()
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }
}

/// Distance between two points of `[0, 1)` on the circle.
pub fn circular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

/// `probs[x] = |sin(pi u) / (N sin(pi u / N))|^2` with `u = N phi - x`,
/// the closed form of the geometric sum; `1` where `u` is a multiple of `N`.
///
/// `N phi` is rounded once and both sines take exactly reduced arguments,
/// so the result is the exact law of a phase within one ulp of `phi` and
/// sums to 1 to about `1e-13`.
pub fn estimator_distribution(phi: f64, n: usize) -> Result<EstimatorDistribution> {
    if !(0.0..1.0).contains(&phi) {
        return Err(Error::InvalidParameter(format!("phase {phi} outside [0, 1)")));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("N = 0".into()));
    }
    let nf = n as f64;
    let t = phi * nf;
    let probs = (0..n)
        .map(|x| {
            let u = t - x as f64;
            let w = (u - nf * (u / nf).round()) / nf;
            let den = (PI * w).sin();
            if den == 0.0 {
                return 1.0;
            }
            let num = (PI * (u - 2.0 * (u / 2.0).round())).sin();
            let r = num / (nf * den);
            r * r
        })
        .collect();
    Ok(EstimatorDistribution { n, phi, probs })
}

/// Smallest `N >= M (1/eps + 1) / 2`, optionally rounded up to a power of
/// two. Estimating to within `1/M` with failure probability at most `eps`
/// needs this many control states.
pub fn choose_register_size(m: u64, epsilon: f64, prefer_power_of_two: bool) -> Result<u64> {
    if m == 0 {
        return Err(Error::InvalidParameter("precision M must be >= 1".into()));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!("epsilon {epsilon} outside (0, 1)")));
    }
    let bound = m as f64 * (1.0 / epsilon + 1.0) / 2.0;
    // Absorb representation error in 1/eps so exact products are not bumped.
    let n = (bound - 1e-9).ceil().max(1.0) as u64;
    Ok(if prefer_power_of_two { n.next_power_of_two() } else { n })
}
