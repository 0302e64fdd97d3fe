//! Dense complex state vectors over a tensor product of registers of
//! arbitrary dimension.
//!
//! Registers are laid out row-major: register 0 is the most significant
//! digit of the flat basis index, the last register the least significant.
//! With that convention `(a ⊗ b) ⊗ c` and `a ⊗ (b ⊗ c)` flatten to the same
//! vector, so tensor products need no relabelling.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default upper bound on the joint dimension of any state.
pub const DEFAULT_DIM_CAP: usize = 1 << 22;

/// Tolerance for unitarity and normalisation checks.
pub const TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterLayout {
    dims: Vec<usize>,
    labels: Vec<String>,
}

impl RegisterLayout {
    pub fn new<S: Into<String>>(registers: impl IntoIterator<Item = (S, usize)>) -> Result<Self> {
        Self::with_cap(registers, DEFAULT_DIM_CAP)
    }

    pub fn with_cap<S: Into<String>>(registers: impl IntoIterator<Item = (S, usize)>, cap: usize) -> Result<Self> {
        let (labels, dims): (Vec<String>, Vec<usize>) = registers.into_iter().map(|(l, d)| (l.into(), d)).unzip();
        if dims.is_empty() {
            return Err(Error::InvalidParameter("a layout needs at least one register".into()));
        }
        if dims.contains(&0) {
            return Err(Error::InvalidParameter("register dimensions must be >= 1".into()));
        }
        check_cap(&dims, cap)?;
        Ok(Self { dims, labels })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn dim(&self, register: usize) -> Result<usize> {
        self.dims.get(register).copied().ok_or(Error::NoSuchRegister(register))
    }

    /// Distance in the flat index between consecutive values of `register`.
    pub fn stride(&self, register: usize) -> usize {
        self.dims[register + 1..].iter().product()
    }

    pub fn index_of(&self, coords: &[usize]) -> Result<usize> {
        if coords.len() != self.dims.len() {
            return Err(Error::DimensionMismatch { expected: self.dims.len(), found: coords.len() });
        }
        let mut index = 0;
        for (&c, &d) in coords.iter().zip(&self.dims) {
            if c >= d {
                return Err(Error::DimensionMismatch { expected: d, found: c });
            }
            index = index * d + c;
        }
        Ok(index)
    }

    pub fn coords_of(&self, mut index: usize) -> Vec<usize> {
        let mut coords = vec![0; self.dims.len()];
        for (c, &d) in coords.iter_mut().zip(&self.dims).rev() {
            *c = index % d;
            index /= d;
        }
        coords
    }

    fn concat(&self, other: &Self, cap: usize) -> Result<Self> {
        let dims: Vec<usize> = self.dims.iter().chain(&other.dims).copied().collect();
        check_cap(&dims, cap)?;
        let labels = self.labels.iter().chain(&other.labels).cloned().collect();
        Ok(Self { dims, labels })
    }

    fn without(&self, register: usize) -> Self {
        let mut dims = self.dims.clone();
        let mut labels = self.labels.clone();
        dims.remove(register);
        labels.remove(register);
        Self { dims, labels }
    }
}

fn check_cap(dims: &[usize], cap: usize) -> Result<()> {
    let total = dims.iter().try_fold(1u128, |acc, &d| acc.checked_mul(d as u128));
    match total {
        Some(t) if t <= cap as u128 => Ok(()),
        Some(t) => Err(Error::DimensionCap { requested: t, cap }),
        None => Err(Error::DimensionCap { requested: u128::MAX, cap }),
    }
}

/// Draws an index from unnormalised weights with one ChaCha8 uniform.
/// Returns `None` if every weight is zero.
pub fn sample_index(weights: &[f64], seed: u64) -> Option<usize> {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u: f64 = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut flat = weights.len() - 1;
    for (j, &p) in weights.iter().enumerate() {
        acc += p;
        if u < acc && p > 0.0 {
            flat = j;
            break;
        }
    }
    // Rounding can leave `u` past the last positive weight.
    while weights[flat] == 0.0 {
        flat -= 1;
    }
    Some(flat)
}

/// A linear map on a single register, applied fibre by fibre.
pub trait RegisterOperator {
    fn dim(&self) -> usize;

    /// Writes `U * input` into `output`; both slices have length `dim()`.
    fn apply_fiber(&self, input: &[Complex64], output: &mut [Complex64]);
}

/// A dense unitary matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseUnitary {
    dim: usize,
    entries: Vec<Complex64>,
}

impl DenseUnitary {
    /// Verifies `U†U = I` to [`TOLERANCE`].
    pub fn new(dim: usize, entries: Vec<Complex64>) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim * dim, found: entries.len() });
        }
        let u = Self { dim, entries };
        let dev = u.unitarity_deviation();
        if dev > TOLERANCE {
            return Err(Error::NotUnitary(dev));
        }
        Ok(u)
    }

    pub fn identity(dim: usize) -> Self {
        let mut entries = vec![Complex64::new(0.0, 0.0); dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = Complex64::new(1.0, 0.0);
        }
        Self { dim, entries }
    }

    pub(crate) fn from_entries_unchecked(dim: usize, entries: Vec<Complex64>) -> Self {
        Self { dim, entries }
    }

    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        self.entries[row * self.dim + col]
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    /// Largest absolute entry of `U†U - I`.
    pub fn unitarity_deviation(&self) -> f64 {
        let n = self.dim;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..n {
                    acc += self.entries[k * n + i].conj() * self.entries[k * n + j];
                }
                if i == j {
                    acc -= 1.0;
                }
                worst = worst.max(acc.norm());
            }
        }
        worst
    }
}

impl RegisterOperator for DenseUnitary {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply_fiber(&self, input: &[Complex64], output: &mut [Complex64]) {
        for (row, out) in output.iter_mut().enumerate() {
            let r = &self.entries[row * self.dim..(row + 1) * self.dim];
            *out = r.iter().zip(input).map(|(a, b)| a * b).sum();
        }
    }
}

/// A basis permutation `|i> -> |map[i]>`, stored as an index map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    map: Vec<usize>,
}

impl Permutation {
    pub fn new(map: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; map.len()];
        for &m in &map {
            if m >= map.len() || std::mem::replace(&mut seen[m], true) {
                return Err(Error::NotPermutation);
            }
        }
        Ok(Self { map })
    }

    pub fn from_fn(dim: usize, f: impl Fn(usize) -> usize) -> Result<Self> {
        Self::new((0..dim).map(f).collect())
    }

    pub fn image(&self, i: usize) -> usize {
        self.map[i]
    }
}

impl RegisterOperator for Permutation {
    fn dim(&self) -> usize {
        self.map.len()
    }

    fn apply_fiber(&self, input: &[Complex64], output: &mut [Complex64]) {
        for (i, &m) in self.map.iter().enumerate() {
            output[m] = input[i];
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub register: usize,
    pub outcome: usize,
    pub probability: f64,
    pub seed: u64,
}

/// Outcome of measuring several registers at once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointMeasurement {
    pub registers: Vec<usize>,
    pub outcomes: Vec<usize>,
    pub probability: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    layout: RegisterLayout,
    amps: Vec<Complex64>,
}

impl QuantumState {
    /// The computational basis state with the given register values.
    pub fn basis(layout: RegisterLayout, coords: &[usize]) -> Result<Self> {
        let index = layout.index_of(coords)?;
        let mut amps = vec![Complex64::new(0.0, 0.0); layout.total_dim()];
        amps[index] = Complex64::new(1.0, 0.0);
        Ok(Self { layout, amps })
    }

    /// All registers in `|0>`.
    pub fn zero(layout: RegisterLayout) -> Self {
        let mut amps = vec![Complex64::new(0.0, 0.0); layout.total_dim()];
        amps[0] = Complex64::new(1.0, 0.0);
        Self { layout, amps }
    }

    pub fn uniform(layout: RegisterLayout) -> Self {
        let dim = layout.total_dim();
        let a = Complex64::new(1.0 / (dim as f64).sqrt(), 0.0);
        Self { layout, amps: vec![a; dim] }
    }

    /// Builds a state from raw amplitudes, normalising them.
    pub fn from_amplitudes(layout: RegisterLayout, amps: Vec<Complex64>) -> Result<Self> {
        if amps.len() != layout.total_dim() {
            return Err(Error::DimensionMismatch { expected: layout.total_dim(), found: amps.len() });
        }
        Self { layout, amps }.normalized()
    }

    pub fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amplitude(&self, coords: &[usize]) -> Result<Complex64> {
        Ok(self.amps[self.layout.index_of(coords)?])
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn normalized(mut self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::ZeroNorm);
        }
        let inv = 1.0 / n;
        self.amps.iter_mut().for_each(|a| *a *= inv);
        Ok(self)
    }

    pub fn tensor(&self, other: &Self) -> Result<Self> {
        self.tensor_with_cap(other, DEFAULT_DIM_CAP)
    }

    pub fn tensor_with_cap(&self, other: &Self, cap: usize) -> Result<Self> {
        let layout = self.layout.concat(&other.layout, cap)?;
        let mut amps = Vec::with_capacity(layout.total_dim());
        for a in &self.amps {
            amps.extend(other.amps.iter().map(|b| a * b));
        }
        Ok(Self { layout, amps })
    }

    /// Applies `op` to one tensor factor, identity elsewhere.
    pub fn apply_on_register<U: RegisterOperator + ?Sized>(mut self, register: usize, op: &U) -> Result<Self> {
        let d = self.layout.dim(register)?;
        if op.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, found: op.dim() });
        }
        let inner = self.layout.stride(register);
        let outer = self.amps.len() / (d * inner);
        let zero = Complex64::new(0.0, 0.0);
        let mut fin = vec![zero; d];
        let mut fout = vec![zero; d];
        for o in 0..outer {
            let base = o * d * inner;
            for i in 0..inner {
                let mut nonzero = false;
                for (k, slot) in fin.iter_mut().enumerate() {
                    *slot = self.amps[base + k * inner + i];
                    nonzero |= *slot != zero;
                }
                if !nonzero {
                    continue;
                }
                op.apply_fiber(&fin, &mut fout);
                for (k, v) in fout.iter().enumerate() {
                    self.amps[base + k * inner + i] = *v;
                }
            }
        }
        Ok(self)
    }

    /// Applies `|c>|y> -> |c>|map(c, y)>` where `c` is the flat index over
    /// `controls` (mixed radix, first control most significant) and `y` the
    /// value of `target`. For each `c`, `map(c, ·)` must be a permutation of
    /// the target register; this is checked.
    pub fn apply_controlled_map(
        self,
        controls: &[usize],
        target: usize,
        map: impl Fn(usize, usize) -> usize,
    ) -> Result<Self> {
        let layout = &self.layout;
        let td = layout.dim(target)?;
        for &c in controls {
            layout.dim(c)?;
            if c == target {
                return Err(Error::InvalidParameter("control register equals target".into()));
            }
        }
        let n = layout.len();
        let dims = layout.dims().to_vec();
        let tstride = layout.stride(target);
        let zero = Complex64::new(0.0, 0.0);
        let mut out = vec![zero; self.amps.len()];
        let mut seen = vec![false; self.amps.len()];
        let mut coords = vec![0usize; n];
        for (index, amp) in self.amps.iter().enumerate() {
            // Odometer over the row-major coordinates.
            if index > 0 {
                let mut r = n;
                while r > 0 {
                    r -= 1;
                    coords[r] += 1;
                    if coords[r] < dims[r] {
                        break;
                    }
                    coords[r] = 0;
                }
            }
            let c = controls.iter().fold(0usize, |acc, &r| acc * dims[r] + coords[r]);
            let y = coords[target];
            let y2 = map(c, y);
            if y2 >= td {
                return Err(Error::NotPermutation);
            }
            let dest = index - y * tstride + y2 * tstride;
            if std::mem::replace(&mut seen[dest], true) {
                return Err(Error::NotPermutation);
            }
            out[dest] = *amp;
        }
        Ok(Self { layout: self.layout, amps: out })
    }

    /// Marginal distribution of one register.
    pub fn marginal(&self, register: usize) -> Result<Vec<f64>> {
        self.joint_marginal(&[register])
    }

    /// Joint marginal of several registers, indexed mixed-radix in the
    /// order given (first register most significant).
    pub fn joint_marginal(&self, registers: &[usize]) -> Result<Vec<f64>> {
        let dims = self.layout.dims();
        let mut size = 1usize;
        for &r in registers {
            size *= self.layout.dim(r)?;
        }
        let strides: Vec<usize> = registers.iter().map(|&r| self.layout.stride(r)).collect();
        let mut probs = vec![0.0; size];
        for (index, amp) in self.amps.iter().enumerate() {
            let p = amp.norm_sqr();
            if p == 0.0 {
                continue;
            }
            let mut j = 0;
            for (&r, &s) in registers.iter().zip(&strides) {
                j = j * dims[r] + (index / s) % dims[r];
            }
            probs[j] += p;
        }
        Ok(probs)
    }

    pub fn measure_register(&self, register: usize, seed: u64) -> Result<(MeasurementRecord, Self)> {
        let (joint, state) = self.measure_registers(&[register], seed)?;
        let record = MeasurementRecord { register, outcome: joint.outcomes[0], probability: joint.probability, seed };
        Ok((record, state))
    }

    /// Samples the joint outcome of `registers` and returns the renormalised
    /// collapsed state. Deterministic for a fixed seed.
    pub fn measure_registers(&self, registers: &[usize], seed: u64) -> Result<(JointMeasurement, Self)> {
        let probs = self.joint_marginal(registers)?;
        let total: f64 = probs.iter().sum();
        if total <= 0.0 {
            return Err(Error::ZeroNorm);
        }
        let flat = sample_index(&probs, seed).ok_or(Error::ZeroNorm)?;
        let dims = self.layout.dims();
        let mut outcomes = vec![0; registers.len()];
        let mut rest = flat;
        for (o, &r) in outcomes.iter_mut().zip(registers).rev() {
            *o = rest % dims[r];
            rest /= dims[r];
        }
        let strides: Vec<usize> = registers.iter().map(|&r| self.layout.stride(r)).collect();
        let scale = 1.0 / probs[flat].sqrt();
        let amps = self
            .amps
            .iter()
            .enumerate()
            .map(|(index, a)| {
                let keep =
                    registers.iter().zip(&strides).zip(&outcomes).all(|((&r, &s), &o)| (index / s) % dims[r] == o);
                if keep {
                    a * scale
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect();
        let record =
            JointMeasurement { registers: registers.to_vec(), outcomes, probability: probs[flat] / total, seed };
        Ok((record, Self { layout: self.layout.clone(), amps }))
    }

    /// Conditional state of the remaining registers given `register = value`,
    /// renormalised. After measuring `register` this drops the now-classical
    /// factor.
    pub fn condition_on(&self, register: usize, value: usize) -> Result<Self> {
        let d = self.layout.dim(register)?;
        if value >= d {
            return Err(Error::DimensionMismatch { expected: d, found: value });
        }
        if self.layout.len() == 1 {
            return Err(Error::InvalidParameter("cannot drop the only register".into()));
        }
        let inner = self.layout.stride(register);
        let outer = self.amps.len() / (d * inner);
        let mut amps = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            let base = o * d * inner + value * inner;
            amps.extend_from_slice(&self.amps[base..base + inner]);
        }
        Self { layout: self.layout.without(register), amps }.normalized()
    }

    pub fn inner_product(&self, other: &Self) -> Result<Complex64> {
        if self.layout.dims() != other.layout.dims() {
            return Err(Error::LayoutMismatch);
        }
        Ok(self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum())
    }

    pub fn l2_distance(&self, other: &Self) -> Result<f64> {
        if self.layout.dims() != other.layout.dims() {
            return Err(Error::LayoutMismatch);
        }
        Ok(self.amps.iter().zip(&other.amps).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt())
    }
}
