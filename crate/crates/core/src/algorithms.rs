//! End-to-end solvers: phase estimation, continued fractions and classical
//! verification glued into order finding, period finding, factoring, the
//! finite Abelian hidden subgroup problem, discrete logarithms and their
//! many-to-1 variants.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::amplitudes::{sample_index, QuantumState, DEFAULT_DIM_CAP};
use crate::arith::{crt_pair, derive_seed, factorize, gcd, inv_mod, pow_mod};
use crate::error::{Error, Result};
use crate::estimation::{
    prepare_character_state, prepare_from_target, prepare_register_state, register_distribution, EstimationMode,
    PhaseSample,
};
use crate::groups::{
    character_kernel, coprime_split, CharacterSample, GroupElement, GroupSpec, PrimePowerGroup, SubgroupGenerators,
};
use crate::oracles::{make_order_instance, BlackBox, Domain, Factor, OracleInstance, QueryCount};
use crate::postprocess::{best_denominator_bounded, DenominatorCombiner};
use crate::qft::choose_register_size;

const STREAM_PHASE: u64 = 0x7068_6173;
const STREAM_SPOT: u64 = 0x7370_6f74;
const STREAM_CHARACTER: u64 = 0x6368_6172;
const STREAM_SECOND: u64 = 0x7365_636f;
const STREAM_BASE: u64 = 0x6261_7365;

/// Knobs shared by every solver. Trial budgets count phase-estimation
/// samples, except for the subgroup solvers where they count batches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverParams {
    /// Control register of `2^l` states. Derived from `r_bound` when unset.
    pub control_bits: Option<u32>,
    /// Upper bound on the period or order. Derived from `|X|` when unset.
    pub r_bound: Option<u64>,
    pub budget: usize,
    pub epsilon: f64,
    pub seed: u64,
    /// Known bound on how many cosets share one output.
    pub multiplicity: u64,
    pub cap: usize,
    /// Character samples per batch; `4 n + 10` with `n = log_p |G|` when unset.
    pub oversampling: Option<usize>,
    /// Consecutive uninformative samples that end quantum sampling in the
    /// many-to-1 solvers.
    pub zero_run: usize,
    pub spot_checks: usize,
    /// Guess `r <= 2, 4, 8, ...` instead of requiring a bound.
    pub doubling: bool,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            control_bits: None,
            r_bound: None,
            budget: 20,
            epsilon: 0.1,
            seed: 0,
            multiplicity: 1,
            cap: DEFAULT_DIM_CAP,
            oversampling: None,
            zero_run: 5,
            spot_checks: 10,
            doubling: false,
        }
    }
}

impl SolverParams {
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(msg.into()));
        if self.budget == 0 {
            return bad("trial budget must be >= 1");
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad("epsilon must lie in (0, 1)");
        }
        if self.multiplicity == 0 {
            return bad("multiplicity bound must be >= 1");
        }
        if matches!(self.control_bits, Some(l) if l == 0 || l > 40) {
            return bad("control bits must be in 1..=40");
        }
        if self.r_bound == Some(0) {
            return bad("period bound must be >= 1");
        }
        if self.oversampling == Some(0) {
            return bad("oversampling must be >= 1");
        }
        if self.zero_run == 0 {
            return bad("zero run threshold must be >= 1");
        }
        Ok(())
    }

    fn control_size(&self, bound: u64) -> usize {
        1usize << self.control_bits.unwrap_or_else(|| control_bits_for(bound))
    }
}

/// Smallest `l` with `2^l > bound^2`.
pub fn control_bits_for(bound: u64) -> u32 {
    let square = bound as u128 * bound as u128;
    128 - square.leading_zeros()
}

/// A classical verification attempt on a candidate period or subgroup element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateCheck {
    pub candidate: u64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderResult {
    pub period: u64,
    pub trials: usize,
    pub samples: Vec<PhaseSample>,
    /// `f(period + t) = f(t)` held on every check, and on `t = 0` exactly.
    pub verified: bool,
    pub queries: QueryCount,
    /// Longest classical scan of multiples (many-to-1 mode only).
    pub tail_evaluations: usize,
    pub checks: Vec<CandidateCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacterRecord {
    /// Prime-power component the sample belongs to.
    pub component: usize,
    pub t: Vec<u64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HspResult {
    pub subgroup: SubgroupGenerators,
    pub trials: usize,
    pub samples: Vec<CharacterRecord>,
    pub verified: bool,
    pub queries: QueryCount,
    pub tail_evaluations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DlogSample {
    pub first: PhaseSample,
    /// Absent when the first stage estimated `k = 0`.
    pub second: Option<PhaseSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DlogResult {
    pub exponent: u64,
    pub order: u64,
    pub trials: usize,
    pub samples: Vec<DlogSample>,
    /// `a^exponent = b` was checked through the oracle.
    pub verified: bool,
    pub queries: QueryCount,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorResult {
    pub n: u64,
    pub factor: u64,
    pub cofactor: u64,
    pub base: u64,
    /// Order of `base`, or `None` when `gcd(base, n)` already split `n`.
    pub order: Option<u64>,
    pub attempts: usize,
}

/// Outcome law of a prepared state's control registers. Drawing again
/// stands in for re-running the identical circuit, so every draw after the
/// first is charged to the black box.
struct Law {
    weights: Vec<f64>,
    draws: u64,
    mode: EstimationMode,
}

impl Law {
    fn new(state: &QuantumState, registers: &[usize], mode: EstimationMode) -> Result<Self> {
        let weights = match registers {
            [r] => state.marginal(*r)?,
            _ => state.joint_marginal(registers)?,
        };
        Ok(Self { weights, draws: 0, mode })
    }

    /// The control law of a single-register estimation on `bb`.
    fn register(bb: &BlackBox, n: usize, mode: EstimationMode, cap: usize) -> Result<Self> {
        Ok(Self { weights: register_distribution(bb, 0, n, mode, cap)?, draws: 0, mode })
    }

    fn draw(&mut self, bb: &BlackBox, seed: u64) -> usize {
        if self.draws > 0 {
            match self.mode {
                EstimationMode::Oracle => bb.charge_quantum(1),
                EstimationMode::Shift => bb.charge_shift(1),
            }
        }
        self.draws += 1;
        sample_index(&self.weights, seed).expect("prepared states have unit norm")
    }
}

/// `count` distinct uniform points of `[0, range)`, or all of them when the
/// range is no larger.
fn distinct_points(rng: &mut ChaCha8Rng, range: u64, count: usize) -> Vec<u64> {
    if range <= count as u64 {
        return (0..range).collect();
    }
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let t = rng.gen_range(0..range);
        if !out.contains(&t) {
            out.push(t);
        }
    }
    out
}

/// Classical checks of candidate periods of a function on `Z`. `range` is an
/// upper bound on the true period, so when it is at most the number of spot
/// checks the test is exhaustive and exact.
struct PeriodVerifier<'a> {
    bb: &'a BlackBox,
    f0: u64,
    range: u64,
    points: usize,
    seed: u64,
    uses: u64,
    log: Vec<CandidateCheck>,
}

impl<'a> PeriodVerifier<'a> {
    fn new(bb: &'a BlackBox, range: u64, params: &SolverParams) -> Self {
        Self { bb, f0: bb.query(&[0]), range, points: params.spot_checks, seed: params.seed, uses: 0, log: Vec::new() }
    }

    fn matches_origin(&self, s: u64) -> bool {
        self.bb.query(&[s]) == self.f0
    }

    fn spot_check(&mut self, s: u64) -> bool {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, STREAM_SPOT, self.uses));
        self.uses += 1;
        let ok = distinct_points(&mut rng, self.range, self.points)
            .into_iter()
            .all(|t| self.bb.query(&[t + s]) == self.bb.query(&[t]));
        self.log.push(CandidateCheck { candidate: s, accepted: ok });
        ok
    }

    fn accept(&mut self, s: u64) -> bool {
        self.matches_origin(s) && self.spot_check(s)
    }

    /// Strips prime factors while the quotient still passes.
    fn minimise(&mut self, mut r: u64) -> u64 {
        for (p, _) in factorize(r) {
            while r.is_multiple_of(p) && self.accept(r / p) {
                r /= p;
            }
        }
        r
    }
}

fn single_integer_domain(bb: &BlackBox) -> Result<()> {
    match bb.domain().factors() {
        [Factor::Integers] => Ok(()),
        _ => Err(Error::InvalidInstance("expected a function on Z".into())),
    }
}

/// Phase estimation, bounded continued fractions and a running lcm, until
/// `f(r) = f(0)` and the spot checks pass; the result is then reduced to the
/// least period.
fn period_search(bb: &BlackBox, mode: EstimationMode, params: &SolverParams, stream: u64) -> Result<OrderResult> {
    params.validate()?;
    let limit = bb.codomain_size().saturating_mul(bb.multiplicity()).max(1);
    let guesses: Vec<u64> = match (params.r_bound, params.doubling) {
        (Some(b), _) => vec![b],
        (None, false) => vec![limit],
        (None, true) => {
            let mut g = vec![2u64.min(limit)];
            while *g.last().unwrap() < limit {
                g.push((g.last().unwrap() * 2).min(limit));
            }
            g
        }
    };
    let start = bb.counts();
    let mut verifier = PeriodVerifier::new(bb, guesses.last().copied().unwrap_or(limit), params);
    let mut samples = Vec::new();
    let mut trials = 0usize;
    for bound in guesses {
        let n = params.control_size(bound);
        let mut law = Law::register(bb, n, mode, params.cap)?;
        let mut combiner = DenominatorCombiner::new();
        for _ in 0..params.budget {
            let seed = derive_seed(params.seed, stream, trials as u64);
            trials += 1;
            let x = law.draw(bb, seed) as u64;
            samples.push(PhaseSample { x, n: n as u64, seed });
            let d = best_denominator_bounded(x, n as u64, bound)?.den;
            let mut r = combiner.push(d);
            if r > bound {
                combiner = DenominatorCombiner::new();
                r = combiner.push(d);
            }
            if !verifier.accept(r) {
                continue;
            }
            let period = verifier.minimise(r);
            return Ok(OrderResult {
                period,
                trials,
                samples,
                verified: true,
                queries: bb.counts().since(&start),
                tail_evaluations: 0,
                checks: verifier.log,
            });
        }
    }
    Err(Error::BudgetExhausted { budget: params.budget })
}

/// Order of `a` modulo `N` through controlled multiplications by `a^x`.
pub fn find_order(instance: &OracleInstance, params: &SolverParams) -> Result<OrderResult> {
    let bb = &instance.black_box;
    single_integer_domain(bb)?;
    if !bb.has_shift() {
        return Err(Error::ShiftUnavailable);
    }
    period_search(bb, EstimationMode::Shift, params, STREAM_PHASE)
}

/// Least period of `f` on `Z` using only `U_f`; one application per sample.
pub fn find_period(instance: &OracleInstance, params: &SolverParams) -> Result<OrderResult> {
    single_integer_domain(&instance.black_box)?;
    period_search(&instance.black_box, EstimationMode::Oracle, params, STREAM_PHASE)
}

/// Period of `t -> f(t e_j)` for every generator: the order each generator
/// has in `G/K`.
pub fn reduce_finitely_generated(instance: &OracleInstance, params: &SolverParams) -> Result<Vec<OrderResult>> {
    let bb = &instance.black_box;
    (0..bb.domain().rank())
        .map(|j| {
            let view = bb.along_generator(j)?;
            period_search(&view, EstimationMode::Oracle, params, STREAM_PHASE ^ (j as u64 + 1))
        })
        .collect()
}

/// A nontrivial factor of an odd composite that is not a prime power, from
/// the order of random bases.
pub fn factor_via_order(n: u64, params: &SolverParams) -> Result<FactorResult> {
    params.validate()?;
    let f = factorize(n);
    if n.is_multiple_of(2) || f.len() < 2 {
        return Err(Error::InvalidParameter(format!("{n} must be odd with two distinct prime factors")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(params.seed, STREAM_BASE, 0));
    for attempt in 1..=params.budget {
        let a = rng.gen_range(2..n - 1);
        let done =
            |factor: u64, order| FactorResult { n, factor, cofactor: n / factor, base: a, order, attempts: attempt };
        let g = gcd(a, n);
        if g > 1 {
            return Ok(done(g, None));
        }
        let instance = make_order_instance(n, a)?;
        let r = match find_order(&instance, &params.with_seed(derive_seed(params.seed, STREAM_BASE, attempt as u64))) {
            Ok(res) => res.period,
            Err(Error::BudgetExhausted { .. }) => continue,
            Err(e) => return Err(e),
        };
        if r % 2 == 1 {
            continue;
        }
        let y = pow_mod(a, r / 2, n);
        if y == n - 1 {
            continue;
        }
        for c in [gcd(y + 1, n), gcd(y + n - 1, n)] {
            if c > 1 && c < n {
                return Ok(done(c, Some(r)));
            }
        }
    }
    Err(Error::BudgetExhausted { budget: params.budget })
}

fn unflatten(mut flat: usize, dims: &[u64]) -> Vec<u64> {
    let mut t = vec![0u64; dims.len()];
    for (c, &d) in t.iter_mut().zip(dims).rev() {
        *c = (flat % d as usize) as u64;
        flat /= d as usize;
    }
    t
}

fn random_element(rng: &mut ChaCha8Rng, spec: &GroupSpec) -> GroupElement {
    GroupElement(spec.moduli().iter().map(|&d| rng.gen_range(0..d)).collect())
}

/// Character sampling on one prime-power group: batches of samples until
/// the kernel's generators all fix `f(0)` and random coset checks pass.
fn sample_subgroup(
    bb: &BlackBox,
    group: &PrimePowerGroup,
    params: &SolverParams,
    component: usize,
) -> Result<(SubgroupGenerators, usize, Vec<CharacterRecord>)> {
    let spec = group.spec();
    let dims = spec.moduli().to_vec();
    let prepared = prepare_character_state(bb, params.cap)?;
    let registers: Vec<usize> = (0..spec.rank()).collect();
    let mut law = Law::new(&prepared, &registers, EstimationMode::Oracle)?;
    let n: u32 = group.exponents().iter().sum();
    let batch = params.oversampling.unwrap_or(4 * n as usize + 10);
    let f0 = bb.query(&spec.zero().0);
    let stream = derive_seed(STREAM_CHARACTER, component as u64, 0);
    let mut samples = Vec::new();
    let mut records = Vec::new();
    for round in 1..=params.budget {
        for _ in 0..batch {
            let seed = derive_seed(params.seed, stream, records.len() as u64);
            let t = unflatten(law.draw(bb, seed), &dims);
            samples.push(CharacterSample::new(group.clone(), t.clone())?);
            records.push(CharacterRecord { component, t, seed });
        }
        let kernel = character_kernel(&samples, group);
        let h = kernel.hermite();
        if h.rows().iter().any(|g| bb.query(g) != f0) {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(params.seed, STREAM_SPOT ^ stream, round as u64));
        for _ in 0..params.spot_checks {
            let x = random_element(&mut rng, &spec);
            let g = h.rows().iter().fold(spec.zero(), |acc, row| {
                let c = rng.gen_range(0..group.exponent_modulus().max(1));
                spec.add(&acc, &spec.scale(&GroupElement(row.clone()), c))
            });
            if bb.query(&spec.add(&x, &g).0) != bb.query(&x.0) {
                return Err(Error::PromiseViolation(format!("f differs on {x} and {x} + {g}")));
            }
        }
        return Ok((kernel, round, records));
    }
    Err(Error::BudgetExhausted { budget: params.budget })
}

fn finite_spec(bb: &BlackBox) -> Result<GroupSpec> {
    bb.domain().as_spec().ok_or_else(|| Error::InvalidGroup("the hidden subgroup solvers need a finite domain".into()))
}

/// Hidden subgroup of `f` on a group in prime-power form.
pub fn solve_hsp(instance: &OracleInstance, params: &SolverParams) -> Result<HspResult> {
    params.validate()?;
    let bb = &instance.black_box;
    let spec = finite_spec(bb)?;
    let group = spec
        .prime_power_form()
        .ok_or_else(|| Error::InvalidGroup(format!("{spec} is not a prime-power group with ascending exponents")))?;
    let start = bb.counts();
    let (subgroup, trials, samples) = sample_subgroup(bb, &group, params, 0)?;
    Ok(HspResult { subgroup, trials, samples, verified: true, queries: bb.counts().since(&start), tail_evaluations: 0 })
}

/// Hidden subgroup on any finite Abelian group: solved separately on each
/// prime-power component of the coprime split, then recombined.
pub fn solve_hsp_general(instance: &OracleInstance, params: &SolverParams) -> Result<HspResult> {
    params.validate()?;
    let bb = &instance.black_box;
    let spec = finite_spec(bb)?;
    if spec.prime_power_form().is_some() {
        return solve_hsp(instance, params);
    }
    let split = coprime_split(&spec)?;
    let start = bb.counts();
    let mut parts = Vec::with_capacity(split.components.len());
    let mut trials = 0;
    let mut samples = Vec::new();
    for (c, component) in split.components.iter().enumerate() {
        let cspec = component.group.spec();
        let images = (0..cspec.rank()).map(|i| split.embed(c, &cspec.basis(i)).0).collect();
        let restricted = bb.compose_homomorphism(Domain::finite(&cspec), images)?;
        let (k, rounds, records) = sample_subgroup(&restricted, &component.group, params, c)?;
        parts.push(k);
        trials += rounds;
        samples.extend(records);
    }
    Ok(HspResult {
        subgroup: split.recombine_subgroups(&parts),
        trials,
        samples,
        verified: true,
        queries: bb.counts().since(&start),
        tail_evaluations: 0,
    })
}

/// `round(x r / N) mod r`.
fn nearest_multiple(x: u64, n: u64, r: u64) -> u64 {
    (((2 * x as u128 * r as u128 + n as u128) / (2 * n as u128)) % r as u128) as u64
}

/// `m` with `a^m = b`, given the order `r` of `a`. Stage one estimates
/// `k/r` from shifts by `a^x`; the collapsed target is kept and stage two
/// estimates `k m / r` from shifts by `b^x` on it.
pub fn solve_dlog(instance: &OracleInstance, r: u64, params: &SolverParams) -> Result<DlogResult> {
    params.validate()?;
    let bb = &instance.black_box;
    if bb.domain().factors() != [Factor::Cyclic(r), Factor::Cyclic(r)] {
        return Err(Error::InvalidInstance(format!("expected a function on Z_{r} x Z_{r}")));
    }
    if !bb.has_shift() {
        return Err(Error::ShiftUnavailable);
    }
    let n = match params.control_bits {
        Some(l) => 1u64 << l,
        None => choose_register_size(2 * r, params.epsilon, true)?,
    };
    let start = bb.counts();
    let target = bb.query(&[0, 1]);
    if r == 1 {
        // a = 1: every estimate is k = 0, and only b = 1 is reachable.
        if bb.query(&[0, 0]) != target {
            return Err(Error::PromiseViolation("b is not a power of a".into()));
        }
        return Ok(DlogResult {
            exponent: 0,
            order: 1,
            trials: 0,
            samples: Vec::new(),
            verified: true,
            queries: bb.counts().since(&start),
        });
    }
    let first = prepare_register_state(bb, 0, n as usize, EstimationMode::Shift, params.cap)?;
    let mut first_law = Law::new(&first, &[0], EstimationMode::Shift)?;
    let mut second_laws: HashMap<usize, Law> = HashMap::new();
    let mut known = (0u64, 1u64);
    let mut samples = Vec::new();
    for trial in 0..params.budget {
        let seed = derive_seed(params.seed, STREAM_PHASE, trial as u64);
        let x1 = first_law.draw(bb, seed);
        let s1 = PhaseSample { x: x1 as u64, n, seed };
        let k = nearest_multiple(x1 as u64, n, r);
        if k == 0 {
            samples.push(DlogSample { first: s1, second: None });
            continue;
        }
        let law = match second_laws.entry(x1) {
            std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
            std::collections::hash_map::Entry::Vacant(e) => {
                let kept = first.condition_on(0, x1)?;
                let second = prepare_from_target(bb, 1, n as usize, &kept, params.cap)?;
                e.insert(Law::new(&second, &[0], EstimationMode::Shift)?)
            }
        };
        let seed2 = derive_seed(params.seed, STREAM_SECOND, trial as u64);
        let x2 = law.draw(bb, seed2);
        samples.push(DlogSample { first: s1, second: Some(PhaseSample { x: x2 as u64, n, seed: seed2 }) });
        let km = nearest_multiple(x2 as u64, n, r);
        let g = gcd(k, r);
        if !km.is_multiple_of(g) {
            continue;
        }
        let modulus = r / g;
        let residue = (km / g) as u128 * inv_mod((k / g) % modulus, modulus).unwrap_or(0) as u128 % modulus as u128;
        known = crt_pair(known.0, known.1, residue as u64, modulus).unwrap_or((residue as u64, modulus));
        if bb.query(&[known.0, 0]) == target {
            return Ok(DlogResult {
                exponent: known.0,
                order: r,
                trials: trial + 1,
                samples,
                verified: true,
                queries: bb.counts().since(&start),
            });
        }
    }
    Err(Error::BudgetExhausted { budget: params.budget })
}

fn multiplicity_bound(bb: &BlackBox, params: &SolverParams) -> u64 {
    params.multiplicity.max(bb.multiplicity())
}

/// Period of an at most `m`-to-1 periodic function. Each nonzero sample
/// yields a factor `d` of the remaining period; `acc d` is checked as the
/// full period and otherwise `f` is replaced by `x -> f(acc d x)`. A run of
/// zero samples means the remaining factor is below `m^2`, which a scan of
/// `f(acc), f(2 acc), ...` finds.
pub fn robust_period(instance: &OracleInstance, params: &SolverParams) -> Result<OrderResult> {
    params.validate()?;
    let bb = &instance.black_box;
    single_integer_domain(bb)?;
    let m = multiplicity_bound(bb, params);
    if m == 1 {
        return find_period(instance, params);
    }
    let bound = params.r_bound.unwrap_or(bb.codomain_size().saturating_mul(m));
    let epsilon = params.epsilon / (m * m) as f64;
    let start = bb.counts();
    let mut verifier = PeriodVerifier::new(bb, bound, params);
    let mut samples = Vec::new();
    let mut acc = 1u64;
    let mut zeros = 0;
    let mut tail_evaluations = 0;
    let mut law: Option<(u64, u64, Law)> = None;
    let finish = |period: u64, verifier: PeriodVerifier, samples, trials, tail| OrderResult {
        period,
        trials,
        samples,
        verified: true,
        queries: bb.counts().since(&start),
        tail_evaluations: tail,
        checks: verifier.log,
    };
    for trial in 0..params.budget {
        let remaining = bound.div_ceil(acc);
        if law.as_ref().is_none_or(|(a, _, _)| *a != acc) {
            let n = match params.control_bits {
                Some(l) => 1u64 << l,
                None => choose_register_size(2 * remaining * remaining, epsilon, true)?,
            };
            let dilated = bb.dilated(acc)?;
            law = Some((acc, n, Law::register(&dilated, n as usize, EstimationMode::Oracle, params.cap)?));
        }
        let (_, n, sampler) = law.as_mut().expect("prepared above");
        let seed = derive_seed(params.seed, STREAM_PHASE, trial as u64);
        let x = sampler.draw(bb, seed) as u64;
        samples.push(PhaseSample { x, n: *n, seed });
        let d = best_denominator_bounded(x, *n, remaining)?.den;
        if d > 1 {
            zeros = 0;
            let candidate = acc.saturating_mul(d);
            if verifier.accept(candidate) {
                let period = verifier.minimise(candidate);
                return Ok(finish(period, verifier, samples, trial + 1, tail_evaluations));
            }
            // A rejected multiple past the bound cannot divide the period.
            acc = if candidate > bound { 1 } else { candidate };
            continue;
        }
        zeros += 1;
        if zeros < params.zero_run {
            continue;
        }
        zeros = 0;
        for j in 1..=m * m {
            let candidate = acc.saturating_mul(j);
            tail_evaluations = tail_evaluations.max(j as usize);
            if verifier.matches_origin(candidate) && verifier.spot_check(candidate) {
                let period = verifier.minimise(candidate);
                return Ok(finish(period, verifier, samples, trial + 1, tail_evaluations));
            }
        }
        // No small multiple of `acc` is a period, so a noisy sample put a
        // non-divisor into it. Start over.
        acc = 1;
    }
    Err(Error::BudgetExhausted { budget: params.budget })
}

/// Hidden symmetry subgroup of an at most `m`-to-1 function on a
/// prime-power group. Samples still annihilate the subgroup, so their kernel
/// contains it; once further samples stop shrinking the kernel, the kernel
/// is searched exhaustively modulo what has been found.
pub fn robust_hsp(instance: &OracleInstance, params: &SolverParams) -> Result<HspResult> {
    params.validate()?;
    let bb = &instance.black_box;
    if multiplicity_bound(bb, params) == 1 {
        return solve_hsp(instance, params);
    }
    let spec = finite_spec(bb)?;
    let group = spec
        .prime_power_form()
        .ok_or_else(|| Error::InvalidGroup(format!("{spec} is not a prime-power group with ascending exponents")))?;
    let order = spec.order().ok_or_else(|| Error::InvalidGroup(format!("{spec} is too large")))?;
    let start = bb.counts();
    let dims = spec.moduli().to_vec();
    let prepared = prepare_character_state(bb, params.cap)?;
    let registers: Vec<usize> = (0..spec.rank()).collect();
    let mut law = Law::new(&prepared, &registers, EstimationMode::Oracle)?;
    let mut samples = Vec::new();
    let mut records = Vec::new();
    let mut kernel = SubgroupGenerators::whole(spec.clone());
    let mut stalled = 0;
    let mut trials = 0;
    for trial in 0..params.budget {
        trials = trial + 1;
        let seed = derive_seed(params.seed, STREAM_CHARACTER, trial as u64);
        let t = unflatten(law.draw(bb, seed), &dims);
        samples.push(CharacterSample::new(group.clone(), t.clone())?);
        records.push(CharacterRecord { component: 0, t, seed });
        let next = character_kernel(&samples, &group);
        if next == kernel {
            stalled += 1;
            if stalled >= params.zero_run {
                break;
            }
        } else {
            kernel = next;
            stalled = 0;
        }
    }
    let f0 = bb.query(&spec.zero().0);
    let mut found = SubgroupGenerators::trivial(spec.clone());
    let mut rejected: Vec<GroupElement> = Vec::new();
    let mut evaluations = 0;
    let mut checks = 0u64;
    for s in kernel.enumerate(params.cap)? {
        if found.contains(&s) || rejected.iter().any(|r| found.contains(&spec.add(&s, &spec.neg(r)))) {
            continue;
        }
        evaluations += 1;
        let fixes = bb.query(&s.0) == f0 && {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(params.seed, STREAM_SPOT, checks));
            checks += 1;
            distinct_points(&mut rng, order, params.spot_checks).into_iter().all(|i| {
                let x = spec.element_at(i);
                bb.query(&spec.add(&x, &s).0) == bb.query(&x.0)
            })
        };
        if fixes {
            let mut gens = found.gens.clone();
            gens.push(s);
            found = SubgroupGenerators::new(spec.clone(), gens)?.canonical();
        } else {
            rejected.push(s);
        }
    }
    Ok(HspResult {
        subgroup: found,
        trials,
        samples: records,
        verified: true,
        queries: bb.counts().since(&start),
        tail_evaluations: evaluations,
    })
}
