//! Phase estimation with a full control register and with a single
//! recycled control qubit, plus eigenbasis tools used to check both.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::amplitudes::{DenseUnitary, QuantumState, RegisterLayout, RegisterOperator};
use crate::arith::{derive_seed, gcd};
use crate::error::{Error, Result};
use crate::oracles::{apply_oracle, apply_shift, BlackBox, Factor, OracleInstance};
use crate::postprocess::Fraction;
use crate::qft::{fourier, inverse_fourier, FourierTransform};

/// One measured control value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseSample {
    pub x: u64,
    #[serde(rename = "N")]
    pub n: u64,
    pub seed: u64,
}

impl PhaseSample {
    pub fn estimate(&self) -> f64 {
        self.x as f64 / self.n as f64
    }

    /// `x/N` in lowest terms.
    pub fn fraction(&self) -> Fraction {
        let g = gcd(self.x, self.n);
        Fraction::new(self.x / g, self.n / g)
    }
}

/// How the controlled evolution is realised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimationMode {
    /// `U_f` on `|x>|0>`; needs nothing beyond the oracle.
    Oracle,
    /// Controlled shifts on a target prepared in `|f(0)>`.
    Shift,
}

/// An eigenvector of every shift, labelled by a character `t` of the
/// quotient, with phase `t_j / d_j` along generator `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigenvector {
    pub label: Vec<u64>,
    pub phases: Vec<f64>,
    /// Amplitudes over the target labels `[0, |X|)`.
    pub amplitudes: Vec<Complex64>,
}

/// `Psi_t = |T|^{-1} sum_g conj(chi_t(g)) |f(g)>` over coset representatives,
/// scaled so that the vectors sum to `|f(0)>`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenbasisDecomposition {
    pub moduli: Vec<u64>,
    pub vectors: Vec<Eigenvector>,
}

impl EigenbasisDecomposition {
    pub fn sum(&self) -> Vec<Complex64> {
        let mut out = vec![Complex64::default(); self.vectors.first().map_or(0, |v| v.amplitudes.len())];
        for v in &self.vectors {
            for (o, a) in out.iter_mut().zip(&v.amplitudes) {
                *o += a;
            }
        }
        out
    }
}

/// Test-side: builds every `Psi_t` from the planted subgroup.
pub fn eigenbasis_decompose(instance: &OracleInstance, cap: usize) -> Result<EigenbasisDecomposition> {
    let q = &instance.truth.quotient;
    let k = &instance.truth.hidden;
    let h = k.hermite();
    let moduli = q.moduli().to_vec();
    let size = instance.black_box.codomain_size() as usize;
    let reps: Vec<Vec<u64>> = h.coset_reps().collect();
    let index = reps.len() as f64;
    let values: Vec<usize> = reps.iter().map(|g| instance.black_box.eval_raw(g) as usize).collect();
    let pairing = |t: &[u64], g: &[u64]| -> f64 {
        t.iter().zip(g).zip(&moduli).map(|((&a, &b), &d)| (a as f64 * b as f64) / d as f64).sum::<f64>()
    };
    let characters = q.elements(cap)?.into_iter().filter(|t| {
        k.gens.iter().all(|g| {
            // sum_j t_j g_j / d_j must be an integer.
            let lcm = moduli.iter().fold(1u128, |acc, &d| {
                let d = d as u128;
                acc / gcd_u128(acc, d) * d
            });
            let s: u128 =
                t.0.iter().zip(&g.0).zip(&moduli).map(|((&a, &b), &d)| a as u128 * b as u128 * (lcm / d as u128)).sum();
            s.is_multiple_of(lcm)
        })
    });
    let vectors = characters
        .map(|t| {
            let mut amplitudes = vec![Complex64::default(); size];
            for (g, &v) in reps.iter().zip(&values) {
                amplitudes[v] += Complex64::from_polar(1.0 / index, -2.0 * PI * pairing(&t.0, g));
            }
            let phases = t.0.iter().zip(&moduli).map(|(&a, &d)| a as f64 / d as f64).collect();
            Eigenvector { label: t.0, phases, amplitudes }
        })
        .collect();
    Ok(EigenbasisDecomposition { moduli, vectors })
}

fn gcd_u128(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Builds `sum_x |x>|f(x)>` once with the oracle and once as
/// `sum_x |x> sum_t chi_t(x) Psi_t`, and returns their L2 distance.
///
/// `control_dims[j]` is the control range for generator `j`; it must equal
/// `d_j` for finite factors and may be anything for `Z` factors.
pub fn verify_main_equality(instance: &OracleInstance, control_dims: &[usize], cap: usize) -> Result<f64> {
    let bb = &instance.black_box;
    let factors = bb.domain().factors();
    if control_dims.len() != factors.len() {
        return Err(Error::DimensionMismatch { expected: factors.len(), found: control_dims.len() });
    }
    for (f, &n) in factors.iter().zip(control_dims) {
        if let Factor::Cyclic(d) = f {
            if d != &(n as u64) {
                return Err(Error::InvalidParameter(format!("control range {n} for Z_{d}")));
            }
        }
    }
    let size = bb.codomain_size() as usize;
    let registers =
        control_dims.iter().enumerate().map(|(j, &d)| (format!("x{j}"), d)).chain([("y".to_string(), size)]);
    let layout = RegisterLayout::with_cap(registers, cap)?;
    let controls: Vec<usize> = (0..control_dims.len()).collect();
    let start = uniform_controls(&layout, control_dims.len())?;
    let lhs = apply_oracle(start, &controls, control_dims.len(), bb)?;

    let decomposition = eigenbasis_decompose(instance, cap)?;
    let total: usize = control_dims.iter().product();
    let scale = 1.0 / (total as f64).sqrt();
    let mut amps = vec![Complex64::default(); total * size];
    let mut x = vec![0u64; control_dims.len()];
    for flat in 0..total {
        let mut rest = flat;
        for (c, &d) in x.iter_mut().zip(control_dims).rev() {
            *c = (rest % d) as u64;
            rest /= d;
        }
        for v in &decomposition.vectors {
            let angle: f64 = v.phases.iter().zip(&x).map(|(p, &c)| p * c as f64).sum();
            let w = Complex64::from_polar(scale, 2.0 * PI * angle);
            for (y, a) in v.amplitudes.iter().enumerate() {
                amps[flat * size + y] += w * a;
            }
        }
    }
    let rhs = QuantumState::from_amplitudes(layout, amps)?;
    lhs.l2_distance(&rhs)
}

fn uniform_controls(layout: &RegisterLayout, controls: usize) -> Result<QuantumState> {
    let mut s = QuantumState::zero(layout.clone());
    for c in 0..controls {
        s = s.apply_on_register(c, &fourier(layout.dim(c)?)?)?;
    }
    Ok(s)
}

/// The control-plus-target state just before the control is measured.
/// Register 0 is the control (`n` states), register 1 the target.
pub fn prepare_register_state(
    bb: &BlackBox,
    j: usize,
    n: usize,
    mode: EstimationMode,
    cap: usize,
) -> Result<QuantumState> {
    let view = match bb.domain().factors() {
        [Factor::Integers] if j == 0 => bb.clone(),
        _ => bb.along_generator(j)?,
    };
    let size = view.codomain_size() as usize;
    let layout = RegisterLayout::with_cap([("x", n), ("y", size)], cap)?;
    let s = match mode {
        EstimationMode::Oracle => {
            let s = QuantumState::zero(layout).apply_on_register(0, &fourier(n)?)?;
            apply_oracle(s, &[0], 1, &view)?
        }
        EstimationMode::Shift => {
            let f0 = view.query(&[0]) as usize;
            let s = QuantumState::basis(layout, &[0, f0])?.apply_on_register(0, &fourier(n)?)?;
            apply_shift(s, 0, 1, &view, 0, 1)?
        }
    };
    s.apply_on_register(0, &inverse_fourier(n)?)
}

/// Exact outcome law of the control register.
pub fn register_distribution(bb: &BlackBox, j: usize, n: usize, mode: EstimationMode, cap: usize) -> Result<Vec<f64>> {
    match mode {
        EstimationMode::Oracle => oracle_register_law(bb, j, n, cap),
        EstimationMode::Shift => prepare_register_state(bb, j, n, mode, cap)?.marginal(0),
    }
}

/// The Oracle-mode control law without the joint state: after `U_f` the
/// target fibres are orthogonal, so the law is the sum over values `y` of
/// `|F^{-1} 1_{f = y}|^2 / N`, one `N`-vector at a time.
fn oracle_register_law(bb: &BlackBox, j: usize, n: usize, cap: usize) -> Result<Vec<f64>> {
    let view = match bb.domain().factors() {
        [Factor::Integers] if j == 0 => bb.clone(),
        _ => bb.along_generator(j)?,
    };
    let size = view.codomain_size() as usize;
    RegisterLayout::with_cap([("x", n), ("y", size)], cap)?;
    let values: Vec<usize> = (0..n as u64).map(|x| view.eval_raw(&[x]) as usize).collect();
    view.charge_quantum(1);
    let transform = inverse_fourier(n)?;
    let amp = Complex64::new(1.0 / (n as f64).sqrt(), 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let mut present = vec![false; size];
    values.iter().for_each(|&y| present[y] = true);
    let mut fiber = vec![zero; n];
    let mut out = vec![zero; n];
    let mut law = vec![0.0; n];
    for y in (0..size).filter(|&y| present[y]) {
        for (slot, &v) in fiber.iter_mut().zip(&values) {
            *slot = if v == y { amp } else { zero };
        }
        transform.apply_fiber(&fiber, &mut out);
        law.iter_mut().zip(&out).for_each(|(p, a)| *p += a.norm_sqr());
    }
    Ok(law)
}

/// A completed register run: the sample and the collapsed target.
#[derive(Debug, Clone)]
pub struct RegisterRun {
    pub sample: PhaseSample,
    pub probability: f64,
    target: QuantumState,
}

/// Estimates the phase along generator `j` with an `n`-state control
/// register and measures it.
pub fn phase_estimate_register(
    bb: &BlackBox,
    j: usize,
    n: usize,
    mode: EstimationMode,
    seed: u64,
    cap: usize,
) -> Result<RegisterRun> {
    let prepared = prepare_register_state(bb, j, n, mode, cap)?;
    measure_prepared(&prepared, seed)
}

/// Measures the control of a prepared state. Repeating this with fresh
/// seeds is equivalent to re-running the identical preparation.
pub fn measure_prepared(prepared: &QuantumState, seed: u64) -> Result<RegisterRun> {
    let (record, collapsed) = prepared.measure_register(0, seed)?;
    let n = prepared.layout().dim(0)? as u64;
    Ok(RegisterRun {
        sample: PhaseSample { x: record.outcome as u64, n, seed },
        probability: record.probability,
        target: collapsed.condition_on(0, record.outcome)?,
    })
}

/// The target after the control was measured: close to the eigenvector
/// whose phase was estimated, and reusable as input to a second estimation
/// sharing that eigenbasis.
pub fn keep_target_after_measurement(run: &RegisterRun) -> QuantumState {
    run.target.clone()
}

/// `|<Psi|target>|^2` with `Psi` normalised.
pub fn fidelity(target: &QuantumState, eigenvector: &[Complex64]) -> Result<f64> {
    let amps = target.amplitudes();
    if amps.len() != eigenvector.len() {
        return Err(Error::DimensionMismatch { expected: amps.len(), found: eigenvector.len() });
    }
    let norm: f64 = eigenvector.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let ip: Complex64 = eigenvector.iter().zip(amps).map(|(e, a)| e.conj() * a).sum();
    Ok((ip / norm).norm_sqr())
}

/// Continues estimation on a given target state (for example one kept from
/// an earlier run) using controlled shifts along generator `j`.
pub fn prepare_from_target(
    bb: &BlackBox,
    j: usize,
    n: usize,
    target: &QuantumState,
    cap: usize,
) -> Result<QuantumState> {
    let control = QuantumState::zero(RegisterLayout::new([("x", n)])?).apply_on_register(0, &fourier(n)?)?;
    let s = control.tensor_with_cap(target, cap)?;
    let s = apply_shift(s, 0, 1, bb, j, 1)?;
    s.apply_on_register(0, &inverse_fourier(n)?)
}

/// One step of the one-qubit procedure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemiclassicalStep {
    /// 1-based step number; step `k` uses the shift by `2^(n-k)`.
    pub qubit: usize,
    /// Phase applied to `|1>` before the final Hadamard.
    pub angle: f64,
    pub bit: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemiclassicalTranscript {
    pub steps: Vec<SemiclassicalStep>,
    /// `sum_k bit_k 2^(k-1)`: the first measured bit is the least
    /// significant.
    pub x: u64,
    pub bits: usize,
    pub seed: u64,
    /// Largest state dimension held at any point.
    pub max_live_dim: usize,
}

impl SemiclassicalTranscript {
    pub fn sample(&self) -> PhaseSample {
        PhaseSample { x: self.x, n: 1 << self.bits, seed: self.seed }
    }
}

/// Correction applied at step `k` (1-based) given the bits measured so far:
/// `-2 pi sum_{i<k} bit_i / 2^(k-i+1)`.
pub fn rotation_angle(previous: &[u8]) -> f64 {
    let k = previous.len() + 1;
    let frac: f64 = previous.iter().enumerate().map(|(i, &b)| b as f64 / 2f64.powi((k - i) as i32)).sum();
    -2.0 * PI * frac
}

fn hadamard() -> DenseUnitary {
    let h = FRAC_1_SQRT_2;
    DenseUnitary::new(2, vec![h.into(), h.into(), h.into(), (-h).into()]).expect("Hadamard is unitary")
}

fn phase_gate(angle: f64) -> DenseUnitary {
    DenseUnitary::new(2, vec![1.0.into(), 0.0.into(), 0.0.into(), Complex64::from_polar(1.0, angle)])
        .expect("diagonal phase is unitary")
}

/// Phase estimation with one control qubit that is prepared, used for one
/// controlled shift, rotated by the classical correction, measured and
/// recycled `n` times. The live state is never larger than `2 |X|`.
pub fn phase_estimate_semiclassical(
    bb: &BlackBox,
    j: usize,
    bits: usize,
    seed: u64,
) -> Result<SemiclassicalTranscript> {
    if !bb.has_shift() {
        return Err(Error::ShiftUnavailable);
    }
    if bits == 0 || bits > 62 {
        return Err(Error::InvalidParameter("bit count must be in 1..=62".into()));
    }
    let size = bb.codomain_size() as usize;
    let f0 = bb.query(&vec![0u64; bb.domain().rank()]) as usize;
    let mut target = QuantumState::basis(RegisterLayout::new([("y", size)])?, &[f0])?;
    let qubit = RegisterLayout::new([("q", 2)])?;
    let h = hadamard();
    let mut steps = Vec::with_capacity(bits);
    let mut measured = Vec::with_capacity(bits);
    let mut max_live_dim = target.amplitudes().len();
    for k in 1..=bits {
        let angle = rotation_angle(&measured);
        let s = QuantumState::zero(qubit.clone()).tensor(&target)?;
        max_live_dim = max_live_dim.max(s.amplitudes().len());
        let s = s.apply_on_register(0, &h)?;
        let s = apply_shift(s, 0, 1, bb, j, 1u64 << (bits - k))?;
        let s = s.apply_on_register(0, &phase_gate(angle))?.apply_on_register(0, &h)?;
        let (record, collapsed) = s.measure_register(0, derive_seed(seed, 0x5e31, k as u64))?;
        let bit = record.outcome as u8;
        target = collapsed.condition_on(0, record.outcome)?;
        measured.push(bit);
        steps.push(SemiclassicalStep { qubit: k, angle, bit });
    }
    let x = measured.iter().enumerate().map(|(i, &b)| (b as u64) << i).sum();
    Ok(SemiclassicalTranscript { steps, x, bits, seed, max_live_dim })
}

/// Exact outcome law of [`phase_estimate_semiclassical`], by following both
/// measurement branches of every step with unnormalised targets.
pub fn semiclassical_distribution(bb: &BlackBox, j: usize, bits: usize) -> Result<Vec<f64>> {
    semiclassical_distribution_from(bb, j, bits, None)
}

/// As [`semiclassical_distribution`], starting from an arbitrary target.
pub fn semiclassical_distribution_from(
    bb: &BlackBox,
    j: usize,
    bits: usize,
    start: Option<&[Complex64]>,
) -> Result<Vec<f64>> {
    if !bb.has_shift() {
        return Err(Error::ShiftUnavailable);
    }
    if bits == 0 || bits > 20 {
        return Err(Error::InvalidParameter("bit count must be in 1..=20".into()));
    }
    let size = bb.codomain_size() as usize;
    let initial = match start {
        Some(s) => s.to_vec(),
        None => {
            let mut v = vec![Complex64::default(); size];
            v[bb.eval_raw(&vec![0u64; bb.domain().rank()]) as usize] = Complex64::new(1.0, 0.0);
            v
        }
    };
    let tables: Vec<Vec<u64>> = (1..=bits).map(|k| bb.shift_table(j, 1u64 << (bits - k))).collect::<Result<_>>()?;
    let mut probs = vec![0.0; 1 << bits];
    let mut stack = vec![(initial, Vec::<u8>::new())];
    while let Some((target, measured)) = stack.pop() {
        let k = measured.len() + 1;
        if k > bits {
            let x = measured.iter().enumerate().map(|(i, &b)| (b as usize) << i).sum::<usize>();
            probs[x] += target.iter().map(|a| a.norm_sqr()).sum::<f64>();
            continue;
        }
        let w = Complex64::from_polar(1.0, rotation_angle(&measured));
        let mut shifted = vec![Complex64::default(); size];
        for (y, a) in target.iter().enumerate() {
            shifted[tables[k - 1][y] as usize] += a;
        }
        for bit in [0u8, 1] {
            let sign = if bit == 0 { 1.0 } else { -1.0 };
            let branch: Vec<Complex64> = target.iter().zip(&shifted).map(|(t, s)| (t + sign * w * s) * 0.5).collect();
            if branch.iter().any(|a| a.norm_sqr() > 1e-30) {
                let mut next = measured.clone();
                next.push(bit);
                stack.push((branch, next));
            }
        }
    }
    Ok(probs)
}

/// Register-based law with the control prepared against an arbitrary
/// target, for comparison with [`semiclassical_distribution_from`].
pub fn register_distribution_from(
    bb: &BlackBox,
    j: usize,
    n: usize,
    target: &[Complex64],
    cap: usize,
) -> Result<Vec<f64>> {
    let t = QuantumState::from_amplitudes(RegisterLayout::new([("y", target.len())])?, target.to_vec())?;
    prepare_from_target(bb, j, n, &t, cap)?.marginal(0)
}

/// Mixture of estimator distributions, one per phase, equally weighted.
pub fn estimator_mixture(phases: &[f64], n: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; n];
    for &phi in phases {
        let d = crate::qft::estimator_distribution(phi.rem_euclid(1.0), n)?;
        for (o, p) in out.iter_mut().zip(&d.probs) {
            *o += p / phases.len() as f64;
        }
    }
    Ok(out)
}

/// Prepares the all-controls state used for character sampling: each
/// control `j` gets `F_{d_j}`, then `U_f`, then `F_{d_j}^{-1}`.
pub fn prepare_character_state(bb: &BlackBox, cap: usize) -> Result<QuantumState> {
    let spec = bb
        .domain()
        .as_spec()
        .ok_or_else(|| Error::InvalidParameter("character sampling needs a finite domain".into()))?;
    let size = bb.codomain_size() as usize;
    let registers =
        spec.moduli().iter().enumerate().map(|(j, &d)| (format!("x{j}"), d as usize)).chain([("y".to_string(), size)]);
    let layout = RegisterLayout::with_cap(registers, cap)?;
    let l = spec.rank();
    let transforms: Vec<FourierTransform> =
        spec.moduli().iter().map(|&d| fourier(d as usize)).collect::<Result<_>>()?;
    let mut s = QuantumState::zero(layout);
    for (c, f) in transforms.iter().enumerate() {
        s = s.apply_on_register(c, f)?;
    }
    let controls: Vec<usize> = (0..l).collect();
    s = apply_oracle(s, &controls, l, bb)?;
    for (c, &d) in spec.moduli().iter().enumerate() {
        s = s.apply_on_register(c, &inverse_fourier(d as usize)?)?;
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amplitudes::DEFAULT_DIM_CAP;
    use crate::groups::GroupSpec;
    use crate::oracles::*;

    const CAP: usize = DEFAULT_DIM_CAP;

    fn l1(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
    }

    fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
        a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
    }

    #[test]
    fn fibrewise_law_matches_the_joint_state() {
        let mut cases = vec![
            make_period_instance(6, vec![3, 0, 4, 1, 2, 5]).unwrap(),
            make_order_instance(21, 2).unwrap(),
            make_simon_instance(3, &[1, 0, 1], false).unwrap(),
        ];
        cases.push(merge_preserving(&make_period_instance_seeded(12, 3).unwrap(), 3, 3).unwrap());
        for inst in &cases {
            for j in 0..inst.black_box.domain().rank() {
                for n in [7usize, 16, 30] {
                    let fast = register_distribution(&inst.black_box, j, n, EstimationMode::Oracle, CAP).unwrap();
                    let full = prepare_register_state(&inst.black_box, j, n, EstimationMode::Oracle, CAP)
                        .unwrap()
                        .marginal(0)
                        .unwrap();
                    assert!(fast.iter().zip(&full).all(|(a, b)| (a - b).abs() < 1e-12));
                }
            }
        }
    }

    #[test]
    fn trivial_period_has_one_eigenvector() {
        let inst = make_order_instance(15, 1).unwrap();
        let d = eigenbasis_decompose(&inst, CAP).unwrap();
        assert_eq!(d.vectors.len(), 1);
        assert_eq!(d.vectors[0].phases, vec![0.0]);
        assert!((d.vectors[0].amplitudes[1] - Complex64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn period_two_sign_pattern() {
        let inst = make_period_instance(2, vec![1, 0]).unwrap();
        let d = eigenbasis_decompose(&inst, CAP).unwrap();
        let (f0, f1) = (1, 0);
        let psi0 = &d.vectors[0].amplitudes;
        let psi1 = &d.vectors[1].amplitudes;
        assert!((psi0[f0] - psi0[f1]).norm() < 1e-12);
        assert!((psi1[f0] + psi1[f1]).norm() < 1e-12);
        assert!((psi0[f0].re - 0.5).abs() < 1e-12);
    }

    /// Every `Psi_t` is an eigenvector of each shift with the stated phase,
    /// the family sums to `|f(0)>`, and for 1-to-1 `f` it is orthogonal.
    fn check_eigenbasis(inst: &OracleInstance) {
        let d = eigenbasis_decompose(inst, CAP).unwrap();
        let bb = &inst.black_box;
        let mut f0 = vec![Complex64::default(); bb.codomain_size() as usize];
        f0[bb.eval_raw(&vec![0; bb.domain().rank()]) as usize] = Complex64::new(1.0, 0.0);
        let sum = d.sum();
        for (a, b) in sum.iter().zip(&f0) {
            assert!((a - b).norm() < 1e-9);
        }
        for v in &d.vectors {
            for j in 0..bb.domain().rank() {
                for x in 0..3u64 {
                    let t = bb.shift_table(j, x).unwrap();
                    let mut moved = vec![Complex64::default(); v.amplitudes.len()];
                    for (y, a) in v.amplitudes.iter().enumerate() {
                        moved[t[y] as usize] += a;
                    }
                    let w = Complex64::from_polar(1.0, 2.0 * PI * v.phases[j] * x as f64);
                    for (m, a) in moved.iter().zip(&v.amplitudes) {
                        assert!((m - w * a).norm() < 1e-9);
                    }
                }
            }
        }
        if inst.truth.multiplicity == 1 {
            for (i, a) in d.vectors.iter().enumerate() {
                for b in &d.vectors[i + 1..] {
                    assert!(dot(&a.amplitudes, &b.amplitudes).norm() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn eigenbases_of_the_battery() {
        check_eigenbasis(&make_order_instance(15, 2).unwrap());
        check_eigenbasis(&make_order_instance(21, 2).unwrap());
        check_eigenbasis(&make_simon_instance(3, &[1, 0, 1], false).unwrap());
        check_eigenbasis(&make_dlog_instance(7, 3, 4).unwrap());
        check_eigenbasis(&make_deutsch_instance(false, true).unwrap());
        check_eigenbasis(&make_deutsch_instance(true, true).unwrap());
        let z42 = GroupSpec::new(vec![4, 2]).unwrap();
        check_eigenbasis(
            &make_permutation_action_instance(&z42, vec![vec![1, 2, 3, 0, 4, 5], vec![0, 1, 2, 3, 5, 4]], 4).unwrap(),
        );
        assert_eq!(eigenbasis_decompose(&make_order_instance(15, 2).unwrap(), CAP).unwrap().vectors.len(), 4);
    }

    #[test]
    fn main_equality_examples() {
        let deutsch = make_deutsch_instance(true, true).unwrap();
        assert!(verify_main_equality(&deutsch, &[2], CAP).unwrap() < 1e-12);
        let order = make_order_instance(15, 2).unwrap();
        assert!(verify_main_equality(&order, &[64], CAP).unwrap() < 1e-9);
        let simon = make_simon_instance(2, &[1, 1], false).unwrap();
        assert!(verify_main_equality(&simon, &[2, 2], CAP).unwrap() < 1e-9);
        let period = make_period_instance(5, vec![3, 0, 4, 1, 2]).unwrap();
        assert!(verify_main_equality(&period, &[16], CAP).unwrap() < 1e-9);
        assert!(verify_main_equality(&simon, &[2, 4], CAP).is_err());
    }

    #[test]
    fn register_examples() {
        let trivial = make_order_instance(15, 1).unwrap();
        let p = register_distribution(&trivial.black_box, 0, 8, EstimationMode::Shift, CAP).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-12);

        let r2 = make_order_instance(15, 4).unwrap();
        let p = register_distribution(&r2.black_box, 0, 8, EstimationMode::Oracle, CAP).unwrap();
        for (x, &v) in p.iter().enumerate() {
            let expect = if x == 0 || x == 4 { 0.5 } else { 0.0 };
            assert!((v - expect).abs() < 1e-12);
        }

        let r4 = make_order_instance(15, 2).unwrap();
        let p = register_distribution(&r4.black_box, 0, 8, EstimationMode::Shift, CAP).unwrap();
        for (x, &v) in p.iter().enumerate() {
            let expect = if x % 2 == 0 { 0.25 } else { 0.0 };
            assert!((v - expect).abs() < 1e-12);
        }
        let run = phase_estimate_register(&r4.black_box, 0, 8, EstimationMode::Shift, 3, CAP).unwrap();
        assert_eq!(run.sample.x % 2, 0);
    }

    #[test]
    fn register_law_is_the_estimator_mixture() {
        for (inst, n) in [
            (make_order_instance(21, 2).unwrap(), 16),
            (make_period_instance(5, vec![3, 0, 4, 1, 2]).unwrap(), 12),
            (make_order_instance(33, 5).unwrap(), 64),
        ] {
            let r = inst.period().unwrap();
            let phases: Vec<f64> = (0..r).map(|k| k as f64 / r as f64).collect();
            let expect = estimator_mixture(&phases, n).unwrap();
            let got = register_distribution(&inst.black_box, 0, n, EstimationMode::Oracle, CAP).unwrap();
            assert!(l1(&expect, &got) < 1e-9);
        }
    }

    #[test]
    fn oracle_and_shift_modes_agree() {
        let inst = make_order_instance(21, 5).unwrap();
        let a = register_distribution(&inst.black_box, 0, 32, EstimationMode::Oracle, CAP).unwrap();
        let b = register_distribution(&inst.black_box, 0, 32, EstimationMode::Shift, CAP).unwrap();
        assert!(l1(&a, &b) < 1e-9);
    }

    #[test]
    fn sampler_matches_the_exact_law() {
        let inst = make_order_instance(21, 2).unwrap();
        let prepared = prepare_register_state(&inst.black_box, 0, 16, EstimationMode::Oracle, CAP).unwrap();
        let exact = prepared.marginal(0).unwrap();
        let mut counts = vec![0.0; 16];
        let trials = 10_000;
        for seed in 0..trials {
            counts[measure_prepared(&prepared, seed).unwrap().sample.x as usize] += 1.0 / trials as f64;
        }
        assert!(l1(&exact, &counts) / 2.0 < 0.03);
    }

    #[test]
    fn kept_target_is_the_estimated_eigenvector() {
        // Exact phases: the target collapses onto one eigenvector.
        let r4 = make_order_instance(15, 2).unwrap();
        let d = eigenbasis_decompose(&r4, CAP).unwrap();
        let run = phase_estimate_register(&r4.black_box, 0, 8, EstimationMode::Shift, 11, CAP).unwrap();
        let k = run.sample.x as usize / 2;
        let kept = keep_target_after_measurement(&run);
        assert!((fidelity(&kept, &d.vectors[k].amplitudes).unwrap() - 1.0).abs() < 1e-9);

        // r = 3 on N = 8 with x = 3: weight of Psi_1 is its estimator
        // probability at x = 3 over the total across the three phases.
        let r3 = make_period_instance(3, vec![0, 1, 2]).unwrap();
        let prepared = prepare_register_state(&r3.black_box, 0, 8, EstimationMode::Oracle, CAP).unwrap();
        let collapsed = prepared.condition_on(0, 3).unwrap();
        let d = eigenbasis_decompose(&r3, CAP).unwrap();
        let fid = fidelity(&collapsed, &d.vectors[1].amplitudes).unwrap();
        let p: Vec<f64> =
            (0..3).map(|k| crate::qft::estimator_distribution(k as f64 / 3.0, 8).unwrap().probs[3]).collect();
        assert!((fid - p[1] / p.iter().sum::<f64>()).abs() < 1e-9);
        assert!(fid >= 0.9, "{fid}");

        let r1 = make_order_instance(15, 1).unwrap();
        let run = phase_estimate_register(&r1.black_box, 0, 4, EstimationMode::Shift, 0, CAP).unwrap();
        let kept = keep_target_after_measurement(&run);
        assert!((kept.amplitudes()[1].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rotation_convention() {
        assert_eq!(rotation_angle(&[]), 0.0);
        assert!((rotation_angle(&[1]) + PI / 2.0).abs() < 1e-15);
        assert!((rotation_angle(&[1, 1]) + 2.0 * PI * (1.0 / 8.0 + 1.0 / 4.0)).abs() < 1e-15);
    }

    #[test]
    fn semiclassical_examples() {
        let r1 = make_order_instance(15, 1).unwrap();
        let t = phase_estimate_semiclassical(&r1.black_box, 0, 4, 9).unwrap();
        assert!(t.steps.iter().all(|s| s.bit == 0));
        assert_eq!(t.x, 0);

        let r2 = make_order_instance(15, 4).unwrap();
        let p = semiclassical_distribution(&r2.black_box, 0, 3).unwrap();
        let q = register_distribution(&r2.black_box, 0, 8, EstimationMode::Shift, CAP).unwrap();
        assert!(l1(&p, &q) < 1e-9);
        assert!((p[0] - 0.5).abs() < 1e-12 && (p[4] - 0.5).abs() < 1e-12);
        for seed in 0..20 {
            let t = phase_estimate_semiclassical(&r2.black_box, 0, 3, seed).unwrap();
            assert!(t.x == 0 || t.x == 4);
            assert!(t.max_live_dim <= 2 * 15);
        }

        // Target prepared in Psi_1 of a period-2 instance: phase 1/2 exactly.
        let d = eigenbasis_decompose(&r2, CAP).unwrap();
        for n in 1..6 {
            let p = semiclassical_distribution_from(
                &r2.black_box,
                0,
                n,
                Some(&d.vectors[1].amplitudes.iter().map(|a| a * 2.0).collect::<Vec<_>>()),
            )
            .unwrap();
            let total: f64 = p.iter().sum();
            assert!((p[1 << (n - 1)] / total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn semiclassical_sampler_matches_its_law() {
        let inst = make_order_instance(21, 2).unwrap();
        let exact = semiclassical_distribution(&inst.black_box, 0, 4).unwrap();
        let mut freq = vec![0.0; 16];
        let trials = 4000;
        for seed in 0..trials {
            let t = phase_estimate_semiclassical(&inst.black_box, 0, 4, seed).unwrap();
            freq[t.x as usize] += 1.0 / trials as f64;
        }
        assert!(l1(&exact, &freq) / 2.0 < 0.03);
    }

    #[test]
    fn register_and_semiclassical_agree_on_the_battery() {
        let battery = [
            make_order_instance(15, 2).unwrap(),
            make_order_instance(21, 2).unwrap(),
            make_order_instance(33, 5).unwrap(),
            make_dlog_instance(7, 3, 4).unwrap(),
            make_simon_instance(3, &[1, 1, 0], false).unwrap(),
        ];
        for inst in &battery {
            for j in 0..inst.black_box.domain().rank() {
                for n in 1..=6 {
                    let p = semiclassical_distribution(&inst.black_box, j, n).unwrap();
                    let q = register_distribution(&inst.black_box, j, 1 << n, EstimationMode::Shift, CAP).unwrap();
                    assert!(l1(&p, &q) < 1e-9, "n={n} j={j}");
                }
            }
        }
    }

    #[test]
    fn character_state_support_satisfies_the_relation() {
        let simon = make_simon_instance(3, &[1, 0, 1], false).unwrap();
        let s = prepare_character_state(&simon.black_box, CAP).unwrap();
        let p = s.joint_marginal(&[0, 1, 2]).unwrap();
        for (i, &v) in p.iter().enumerate() {
            let t = [(i >> 2) & 1, (i >> 1) & 1, i & 1];
            if v > 1e-12 {
                assert_eq!((t[0] + t[2]) % 2, 0);
                assert!((v - 0.25).abs() < 1e-12);
            }
        }
    }
}
