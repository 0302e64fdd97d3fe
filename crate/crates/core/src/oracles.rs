//! Black-box hidden-subgroup instances.
//!
//! A [`BlackBox`] is everything a solver may touch: evaluation of `f`
//! (counted), the reversible oracle `|x>|y> -> |x>|y + f(x)>`, and, when the
//! structure of `f` makes it computable, the shift `|f(y)> -> |f(y + x e_j)>`.
//! The planted subgroup lives next to it in [`GroundTruth`] and is only read
//! by verification code.

use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::amplitudes::QuantumState;
use crate::arith::{derive_seed, factorize, gcd, multiplicative_order, pow_mod};
use crate::error::{Error, Result};
use crate::groups::{GroupElement, GroupSpec, HermiteBasis, SubgroupGenerators};

/// Domains larger than this are not checked exhaustively.
pub const EXHAUSTIVE_CHECK_CAP: u64 = 1 << 24;

/// One cyclic factor of the domain: `Z` or `Z_d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Factor {
    Integers,
    Cyclic(u64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Domain {
    factors: Vec<Factor>,
}

impl Domain {
    pub fn new(factors: Vec<Factor>) -> Self {
        Self { factors }
    }

    pub fn finite(spec: &GroupSpec) -> Self {
        Self { factors: spec.moduli().iter().map(|&d| Factor::Cyclic(d)).collect() }
    }

    pub fn integers() -> Self {
        Self { factors: vec![Factor::Integers] }
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn rank(&self) -> usize {
        self.factors.len()
    }

    /// The group itself when every factor is finite.
    pub fn as_spec(&self) -> Option<GroupSpec> {
        self.factors
            .iter()
            .map(|f| match f {
                Factor::Cyclic(d) => Some(*d),
                Factor::Integers => None,
            })
            .collect::<Option<Vec<_>>>()
            .and_then(|m| GroupSpec::new(m).ok())
    }

    fn reduce(&self, coords: &mut [u64]) {
        for (c, f) in coords.iter_mut().zip(&self.factors) {
            if let Factor::Cyclic(d) = f {
                *c %= d;
            }
        }
    }
}

/// Oracle applications so far. Monotone.
#[derive(Debug, Default)]
pub struct QueryCounter {
    quantum: AtomicU64,
    classical: AtomicU64,
    shifts: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryCount {
    /// Applications of the reversible oracle `U_f`.
    pub quantum: u64,
    /// Classical evaluations of `f`.
    pub classical: u64,
    /// Applications of a controlled shift.
    pub shifts: u64,
}

impl QueryCount {
    pub fn since(&self, earlier: &QueryCount) -> QueryCount {
        QueryCount {
            quantum: self.quantum - earlier.quantum,
            classical: self.classical - earlier.classical,
            shifts: self.shifts - earlier.shifts,
        }
    }
}

impl QueryCounter {
    pub fn snapshot(&self) -> QueryCount {
        QueryCount {
            quantum: self.quantum.load(Ordering::Relaxed),
            classical: self.classical.load(Ordering::Relaxed),
            shifts: self.shifts.load(Ordering::Relaxed),
        }
    }
}

type EvalFn = dyn Fn(&[u64]) -> u64 + Send + Sync;
/// Fills `table[y]` with the image of label `y` under the shift by
/// `amount * e_j`. The table is a permutation of `[0, |X|)`.
type ShiftFn = dyn Fn(usize, u64, &mut [u64]) + Send + Sync;

/// `f: G -> [0, |X|)` behind an interface that counts every use.
#[derive(Clone)]
pub struct BlackBox {
    domain: Domain,
    codomain: u64,
    eval: Arc<EvalFn>,
    shift: Option<Arc<ShiftFn>>,
    multiplicity: u64,
    counter: Arc<QueryCounter>,
}

impl fmt::Debug for BlackBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BlackBox")
            .field("domain", &self.domain)
            .field("codomain", &self.codomain)
            .field("shift", &self.shift.is_some())
            .field("multiplicity", &self.multiplicity)
            .finish()
    }
}

impl BlackBox {
    fn new(domain: Domain, codomain: u64, eval: Arc<EvalFn>, shift: Option<Arc<ShiftFn>>) -> Self {
        Self { domain, codomain, eval, shift, multiplicity: 1, counter: Arc::new(QueryCounter::default()) }
    }

    /// The same function with its own query counter, starting at zero.
    /// Plain clones share the counter.
    pub fn with_fresh_counter(&self) -> Self {
        Self { counter: Arc::new(QueryCounter::default()), ..self.clone() }
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    /// `|X|`.
    pub fn codomain_size(&self) -> u64 {
        self.codomain
    }

    pub fn multiplicity(&self) -> u64 {
        self.multiplicity
    }

    pub fn has_shift(&self) -> bool {
        self.shift.is_some()
    }

    pub fn counts(&self) -> QueryCount {
        self.counter.snapshot()
    }

    /// One classical evaluation of `f`.
    pub fn query(&self, x: &[u64]) -> u64 {
        self.counter.classical.fetch_add(1, Ordering::Relaxed);
        self.eval_raw(x)
    }

    /// Records `n` applications of `U_f` whose effect was obtained without
    /// re-running the circuit (identical preparations measured again).
    pub fn charge_quantum(&self, n: u64) {
        self.counter.quantum.fetch_add(n, Ordering::Relaxed);
    }

    /// As [`charge_quantum`](Self::charge_quantum), for controlled shifts.
    pub fn charge_shift(&self, n: u64) {
        self.counter.shifts.fetch_add(n, Ordering::Relaxed);
    }

    pub(crate) fn eval_raw(&self, x: &[u64]) -> u64 {
        let mut c = x.to_vec();
        self.domain.reduce(&mut c);
        (self.eval)(&c)
    }

    /// The shift permutation for `amount * e_j`.
    pub fn shift_table(&self, j: usize, amount: u64) -> Result<Vec<u64>> {
        let shift = self.shift.as_ref().ok_or(Error::ShiftUnavailable)?;
        let mut table = vec![0; self.codomain as usize];
        shift(j, amount, &mut table);
        Ok(table)
    }

    /// `f'(y) = f(sum_j y_j images[j])` for a homomorphism given by the
    /// images of the basis of `domain`. Shares this box's counter.
    pub fn compose_homomorphism(&self, domain: Domain, images: Vec<Vec<u64>>) -> Result<BlackBox> {
        if images.len() != domain.rank() || images.iter().any(|v| v.len() != self.domain.rank()) {
            return Err(Error::InvalidParameter("homomorphism images have the wrong shape".into()));
        }
        let images = Arc::new(images);
        let inner_domain = self.domain.clone();
        let inner = self.eval.clone();
        let eval_images = images.clone();
        let eval: Arc<EvalFn> = Arc::new(move |y: &[u64]| {
            let mut x = vec![0u64; inner_domain.rank()];
            for (&yj, img) in y.iter().zip(eval_images.iter()) {
                for (k, (xk, &ik)) in x.iter_mut().zip(img).enumerate() {
                    let term = yj as u128 * ik as u128;
                    *xk = match inner_domain.factors[k] {
                        Factor::Cyclic(d) => ((*xk as u128 + term % d as u128) % d as u128) as u64,
                        Factor::Integers => (*xk as u128 + term) as u64,
                    };
                }
            }
            inner(&x)
        });
        let shift = self.shift.clone().map(|inner_shift| {
            let size = self.codomain as usize;
            let inner_domain = self.domain.clone();
            let f: Arc<ShiftFn> = Arc::new(move |j: usize, amount: u64, table: &mut [u64]| {
                for (y, t) in table.iter_mut().enumerate() {
                    *t = y as u64;
                }
                let mut step = vec![0u64; size];
                for (k, &ik) in images[j].iter().enumerate() {
                    let a = match inner_domain.factors[k] {
                        Factor::Cyclic(d) => ((amount as u128 * ik as u128) % d as u128) as u64,
                        Factor::Integers => (amount as u128 * ik as u128) as u64,
                    };
                    if a == 0 {
                        continue;
                    }
                    inner_shift(k, a, &mut step);
                    for t in table.iter_mut() {
                        *t = step[*t as usize];
                    }
                }
            });
            f
        });
        Ok(BlackBox {
            domain,
            codomain: self.codomain,
            eval,
            shift,
            multiplicity: self.multiplicity,
            counter: self.counter.clone(),
        })
    }

    /// `t -> f(t e_j)` on `Z`.
    pub fn along_generator(&self, j: usize) -> Result<BlackBox> {
        if j >= self.domain.rank() {
            return Err(Error::InvalidParameter(format!("no generator {j}")));
        }
        let mut e = vec![0; self.domain.rank()];
        e[j] = 1;
        self.compose_homomorphism(Domain::integers(), vec![e])
    }

    /// `x -> f(factor * x)` on a one-dimensional domain.
    pub fn dilated(&self, factor: u64) -> Result<BlackBox> {
        if self.domain.rank() != 1 {
            return Err(Error::InvalidParameter("dilation needs a one-dimensional domain".into()));
        }
        self.compose_homomorphism(Domain::integers(), vec![vec![factor]])
    }
}

/// Test-side knowledge about an instance. `f` factors through the finite
/// group `quotient` (every `Z` factor of the domain replaced by the period
/// of `f` along it) and `hidden` is the planted subgroup there.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub quotient: GroupSpec,
    pub hidden: SubgroupGenerators,
    pub multiplicity: u64,
    /// The exponent `m` with `b = a^m` for discrete-log instances.
    pub dlog_exponent: Option<u64>,
}

impl GroundTruth {
    /// Least `k > 0` with `k e_j` in the planted subgroup.
    pub fn period_along(&self, j: usize) -> u64 {
        let h = self.hidden.hermite();
        let d = self.quotient.moduli()[j];
        (1..=d)
            .find(|&k| {
                let mut e = vec![0; self.quotient.rank()];
                e[j] = k % d;
                h.contains(&e)
            })
            .unwrap_or(d)
    }
}

#[derive(Debug, Clone)]
pub struct OracleInstance {
    pub black_box: BlackBox,
    pub truth: GroundTruth,
}

impl OracleInstance {
    /// A copy whose queries are counted separately from this one.
    pub fn with_fresh_counter(&self) -> Self {
        Self { black_box: self.black_box.with_fresh_counter(), truth: self.truth.clone() }
    }

    /// The least period for one-dimensional integer domains.
    pub fn period(&self) -> Option<u64> {
        match self.black_box.domain.factors() {
            [Factor::Integers] => Some(self.truth.period_along(0)),
            _ => None,
        }
    }

    /// Exhaustive check of the coset promise on the finite quotient:
    /// `f(x) = f(y)` iff `x - y` is in the planted subgroup (`m = 1`), or
    /// `f` constant on cosets with at most `m` cosets per value.
    pub fn verify_promise(&self) -> Result<()> {
        let q = &self.truth.quotient;
        let n = q.order().filter(|&n| n <= 4096).ok_or(Error::SizeCap(4096))?;
        let h = self.truth.hidden.hermite();
        let values: Vec<u64> = (0..n).map(|i| self.black_box.eval_raw(&q.element_at(i).0)).collect();
        let mut cosets_per_value: HashMap<u64, std::collections::HashSet<Vec<u64>>> = HashMap::new();
        for i in 0..n {
            let x = q.element_at(i);
            cosets_per_value.entry(values[i as usize]).or_default().insert(h.coset_rep(&x.0));
            for k in self.truth.hidden.enumerate(4096)? {
                let y = q.add(&x, &k);
                if values[q.index_of(&y) as usize] != values[i as usize] {
                    return Err(Error::PromiseViolation(format!("f not constant on the coset of {x}")));
                }
            }
        }
        if let Some(c) = cosets_per_value.values().find(|s| s.len() as u64 > self.truth.multiplicity) {
            return Err(Error::PromiseViolation(format!(
                "{} cosets share a value, bound is {}",
                c.len(),
                self.truth.multiplicity
            )));
        }
        Ok(())
    }
}

fn finite_truth(spec: GroupSpec, hidden: SubgroupGenerators) -> GroundTruth {
    GroundTruth { quotient: spec, hidden: hidden.canonical(), multiplicity: 1, dlog_exponent: None }
}

fn cyclic_truth(period: u64) -> Result<GroundTruth> {
    let spec = GroupSpec::new(vec![period])?;
    Ok(finite_truth(spec.clone(), SubgroupGenerators::trivial(spec)))
}

fn seeded_permutation(n: u64, seed: u64) -> Vec<u64> {
    let mut perm: Vec<u64> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    perm
}

/// `f(t) = a^t mod N` on `Z`; the shift multiplies by `a^x`.
pub fn make_order_instance(modulus: u64, a: u64) -> Result<OracleInstance> {
    if modulus < 2 {
        return Err(Error::InvalidInstance("modulus must be >= 2".into()));
    }
    if gcd(a % modulus, modulus) != 1 {
        return Err(Error::InvalidInstance(format!("gcd({a}, {modulus}) != 1")));
    }
    let a = a % modulus;
    let r = multiplicative_order(a, modulus).expect("unit has an order");
    let eval: Arc<EvalFn> = Arc::new(move |x: &[u64]| pow_mod(a, x[0], modulus));
    let shift: Arc<ShiftFn> = Arc::new(move |_j, amount, table: &mut [u64]| {
        let c = pow_mod(a, amount, modulus);
        for (y, t) in table.iter_mut().enumerate() {
            *t = ((y as u128 * c as u128) % modulus as u128) as u64;
        }
    });
    Ok(OracleInstance {
        black_box: BlackBox::new(Domain::integers(), modulus, eval, Some(shift)),
        truth: cyclic_truth(r)?,
    })
}

/// `f(t) = relabeling[t mod r]` on `Z`. No shift: the relabeling hides the
/// structure.
pub fn make_period_instance(period: u64, relabeling: Vec<u64>) -> Result<OracleInstance> {
    if period == 0 {
        return Err(Error::InvalidInstance("period must be >= 1".into()));
    }
    let mut seen = vec![false; period as usize];
    if relabeling.len() as u64 != period
        || relabeling.iter().any(|&v| v >= period || std::mem::replace(&mut seen[v as usize], true))
    {
        return Err(Error::InvalidInstance("relabeling is not a bijection of [0, r)".into()));
    }
    let relabeling = Arc::new(relabeling);
    let eval: Arc<EvalFn> = Arc::new(move |x: &[u64]| relabeling[(x[0] % period) as usize]);
    Ok(OracleInstance {
        black_box: BlackBox::new(Domain::integers(), period, eval, None),
        truth: cyclic_truth(period)?,
    })
}

pub fn make_period_instance_seeded(period: u64, seed: u64) -> Result<OracleInstance> {
    make_period_instance(period, seeded_permutation(period, seed))
}

/// Parses a bit string, first character most significant.
pub fn parse_bits(bits: &str) -> Result<Vec<u64>> {
    bits.chars()
        .map(|c| match c {
            '0' => Ok(0),
            '1' => Ok(1),
            _ => Err(Error::InvalidInstance(format!("bad bit string {bits:?}"))),
        })
        .collect()
}

/// `f(x) = min(x, x + s)` on `Z_2^l`, coordinates read as a bit string with
/// coordinate 0 the most significant bit.
pub fn make_simon_instance(l: usize, secret: &[u64], allow_zero: bool) -> Result<OracleInstance> {
    if l == 0 || l > 20 || secret.len() != l || secret.iter().any(|&b| b > 1) {
        return Err(Error::InvalidInstance("secret must be a bit string of length l in 1..=20".into()));
    }
    let s = secret.iter().fold(0u64, |acc, &b| acc << 1 | b);
    if s == 0 && !allow_zero {
        return Err(Error::InvalidInstance("s = 0 has trivial hidden subgroup".into()));
    }
    let pack = move |x: &[u64]| x.iter().fold(0u64, |acc, &b| acc << 1 | b);
    let eval: Arc<EvalFn> = Arc::new(move |x: &[u64]| {
        let v = pack(x);
        v.min(v ^ s)
    });
    let shift: Arc<ShiftFn> = Arc::new(move |j, amount, table: &mut [u64]| {
        let flip = if amount % 2 == 1 { 1u64 << (l - 1 - j) } else { 0 };
        for (y, t) in table.iter_mut().enumerate() {
            let y = y as u64;
            let moved = y ^ flip;
            let (lo, hi) = (moved.min(moved ^ s), moved.max(moved ^ s));
            // Range labels are pair minima; the rest follow the pair maxima.
            *t = if y <= (y ^ s) { lo } else { hi };
        }
    });
    let spec = GroupSpec::binary(l);
    let hidden = SubgroupGenerators::new(spec.clone(), vec![GroupElement(secret.to_vec())])?;
    Ok(OracleInstance {
        black_box: BlackBox::new(Domain::finite(&spec), 1 << l, eval, Some(shift)),
        truth: finite_truth(spec, hidden),
    })
}

/// `f(x, y) = a^x b^y mod q` on `Z_r x Z_r` with `r` the order of `a`.
/// The hidden subgroup is `{(x, y) : x + m y = 0 mod r} = <(-m, 1)>` where
/// `b = a^m`.
pub fn make_dlog_instance(q: u64, a: u64, b: u64) -> Result<OracleInstance> {
    if q < 2 || gcd(a % q, q) != 1 || gcd(b % q, q) != 1 {
        return Err(Error::InvalidInstance(format!("a = {a}, b = {b} must be units mod {q}")));
    }
    let (a, b) = (a % q, b % q);
    let r = multiplicative_order(a, q).expect("unit has an order");
    let m = (0..r)
        .find(|&m| pow_mod(a, m, q) == b)
        .ok_or_else(|| Error::InvalidInstance(format!("{b} is not a power of {a} mod {q}")))?;
    let eval: Arc<EvalFn> =
        Arc::new(move |x: &[u64]| ((pow_mod(a, x[0], q) as u128 * pow_mod(b, x[1], q) as u128) % q as u128) as u64);
    let shift: Arc<ShiftFn> = Arc::new(move |j, amount, table: &mut [u64]| {
        let c = pow_mod(if j == 0 { a } else { b }, amount, q);
        for (y, t) in table.iter_mut().enumerate() {
            *t = ((y as u128 * c as u128) % q as u128) as u64;
        }
    });
    let spec = GroupSpec::new(vec![r, r])?;
    let hidden = SubgroupGenerators::new(spec.clone(), vec![GroupElement(vec![(r - m) % r, 1 % r])])?;
    let mut truth = finite_truth(spec.clone(), hidden);
    truth.dlog_exponent = Some(m);
    Ok(OracleInstance { black_box: BlackBox::new(Domain::finite(&spec), q, eval, Some(shift)), truth })
}

/// `f(0) = f0`, `f(1) = f1` on `Z_2`.
pub fn make_deutsch_instance(f0: bool, f1: bool) -> Result<OracleInstance> {
    let values = [u64::from(f0), u64::from(f1)];
    let eval: Arc<EvalFn> = Arc::new(move |x: &[u64]| values[x[0] as usize]);
    let balanced = f0 != f1;
    let shift: Arc<ShiftFn> = Arc::new(move |_j, amount, table: &mut [u64]| {
        let flip = u64::from(balanced && amount % 2 == 1);
        for (y, t) in table.iter_mut().enumerate() {
            *t = y as u64 ^ flip;
        }
    });
    let spec = GroupSpec::new(vec![2])?;
    let hidden =
        if balanced { SubgroupGenerators::trivial(spec.clone()) } else { SubgroupGenerators::whole(spec.clone()) };
    Ok(OracleInstance {
        black_box: BlackBox::new(Domain::finite(&spec), 2, eval, Some(shift)),
        truth: finite_truth(spec, hidden),
    })
}

pub type ActionFn = dyn Fn(&[u64], u64) -> u64 + Send + Sync;

/// `f(g) = g . x0` for a group action of `spec` on `[0, points)`, checked
/// exhaustively. The planted subgroup is the stabiliser of `x0`.
pub fn make_stabiliser_instance(
    spec: &GroupSpec,
    points: u64,
    action: Arc<ActionFn>,
    x0: u64,
) -> Result<OracleInstance> {
    if x0 >= points {
        return Err(Error::InvalidInstance("base point out of range".into()));
    }
    let n = spec.order().unwrap_or(u64::MAX);
    if (n as u128) * (n as u128) * (points as u128) > EXHAUSTIVE_CHECK_CAP as u128 {
        return Err(Error::SizeCap(EXHAUSTIVE_CHECK_CAP as usize));
    }
    let elements = spec.elements(usize::MAX)?;
    for x in 0..points {
        if action(&spec.zero().0, x) != x {
            return Err(Error::InvalidInstance("identity does not act trivially".into()));
        }
        for g in &elements {
            let gx = action(&g.0, x);
            if gx >= points {
                return Err(Error::InvalidInstance("action leaves the point set".into()));
            }
            for h in &elements {
                if action(&h.0, gx) != action(&spec.add(g, h).0, x) {
                    return Err(Error::InvalidInstance(format!("action axiom fails at {g}, {h}, {x}")));
                }
            }
        }
    }
    let stabiliser: Vec<GroupElement> = elements.iter().filter(|g| action(&g.0, x0) == x0).cloned().collect();
    let hidden = SubgroupGenerators::new(spec.clone(), stabiliser)?.canonical();
    let eval_action = action.clone();
    let eval: Arc<EvalFn> = Arc::new(move |x: &[u64]| eval_action(x, x0));
    let rank = spec.rank();
    let moduli = spec.moduli().to_vec();
    let shift: Arc<ShiftFn> = Arc::new(move |j, amount, table: &mut [u64]| {
        let mut g = vec![0; rank];
        g[j] = amount % moduli[j];
        for (y, t) in table.iter_mut().enumerate() {
            *t = action(&g, y as u64);
        }
    });
    Ok(OracleInstance {
        black_box: BlackBox::new(Domain::finite(spec), points, eval, Some(shift)),
        truth: finite_truth(spec.clone(), hidden),
    })
}

/// A stabiliser instance whose action is given by one permutation of the
/// points per generator.
pub fn make_permutation_action_instance(
    spec: &GroupSpec,
    generator_actions: Vec<Vec<u64>>,
    x0: u64,
) -> Result<OracleInstance> {
    if generator_actions.len() != spec.rank() {
        return Err(Error::InvalidInstance("one permutation per generator required".into()));
    }
    let points = generator_actions.first().map_or(1, |p| p.len() as u64);
    for p in &generator_actions {
        let mut seen = vec![false; points as usize];
        if p.len() as u64 != points || p.iter().any(|&v| v >= points || std::mem::replace(&mut seen[v as usize], true))
        {
            return Err(Error::InvalidInstance("generator action is not a permutation".into()));
        }
    }
    let perms = Arc::new(generator_actions);
    let action: Arc<ActionFn> = Arc::new(move |g: &[u64], mut x: u64| {
        for (p, &c) in perms.iter().zip(g) {
            for _ in 0..c {
                x = p[x as usize];
            }
        }
        x
    });
    make_stabiliser_instance(spec, points.max(1), action, x0)
}

/// `f = h o g` with `g: G -> G/K` and `h` a seeded random labelling of the
/// cosets; `|X| = [G : K]`.
pub fn make_hsp_instance(spec: &GroupSpec, hidden: &SubgroupGenerators, seed: u64) -> Result<OracleInstance> {
    make_lattice_instance(spec, hidden, &[], seed)
}

/// Like [`make_hsp_instance`], but the factors listed in `integer_factors`
/// are presented as `Z` (reduced modulo their modulus before evaluation).
pub fn make_lattice_instance(
    quotient: &GroupSpec,
    hidden: &SubgroupGenerators,
    integer_factors: &[usize],
    seed: u64,
) -> Result<OracleInstance> {
    if &hidden.spec != quotient {
        return Err(Error::InvalidInstance("hidden subgroup lives in another group".into()));
    }
    let h: Arc<HermiteBasis> = Arc::new(hidden.hermite());
    let index = h.index();
    let labels = Arc::new(seeded_permutation(index, seed));
    let pivots: Vec<u64> = (0..quotient.rank()).map(|j| h.pivot(j)).collect();
    let eval: Arc<EvalFn> = Arc::new(move |x: &[u64]| {
        let rep = h.coset_rep(x);
        let rank = rep.iter().zip(&pivots).fold(0u64, |acc, (&c, &p)| acc * p + c);
        labels[rank as usize]
    });
    let factors = quotient
        .moduli()
        .iter()
        .enumerate()
        .map(|(j, &d)| if integer_factors.contains(&j) { Factor::Integers } else { Factor::Cyclic(d) })
        .collect();
    let moduli = quotient.moduli().to_vec();
    let reduce_eval = eval.clone();
    let eval: Arc<EvalFn> = Arc::new(move |x: &[u64]| {
        let y: Vec<u64> = x.iter().zip(&moduli).map(|(&c, &d)| c % d).collect();
        reduce_eval(&y)
    });
    Ok(OracleInstance {
        black_box: BlackBox::new(Domain::new(factors), index, eval, None),
        truth: finite_truth(quotient.clone(), hidden.clone()),
    })
}

/// `f' = merge o f`. Every output of `merge` must have at most
/// `multiplicity` preimages among the inner labels. No shift is offered.
pub fn wrap_many_to_one(inner: &OracleInstance, merge: Vec<u64>, multiplicity: u64) -> Result<OracleInstance> {
    let size = inner.black_box.codomain;
    if merge.len() as u64 != size || multiplicity == 0 {
        return Err(Error::InvalidInstance("merge must map every inner label".into()));
    }
    let codomain = merge.iter().max().map_or(1, |&v| v + 1);
    let mut counts = vec![0u64; codomain as usize];
    for &v in &merge {
        counts[v as usize] += 1;
    }
    if counts.iter().any(|&c| c > multiplicity) {
        return Err(Error::InvalidInstance(format!("merge exceeds the bound m = {multiplicity}")));
    }
    let index = inner.truth.hidden.hermite().index();
    let smallest = factorize(index).first().map_or(u64::MAX, |&(p, _)| p);
    if multiplicity >= smallest {
        log::warn!(
            "multiplicity {multiplicity} is not below the smallest prime {smallest} of the coset count; \
             worst-case instances are indistinguishable"
        );
    }
    let merge = Arc::new(merge);
    let inner_eval = inner.black_box.eval.clone();
    let eval: Arc<EvalFn> = Arc::new(move |x: &[u64]| merge[inner_eval(x) as usize]);
    let mut black_box = BlackBox::new(inner.black_box.domain.clone(), codomain, eval, None);
    black_box.multiplicity = multiplicity;
    let mut truth = inner.truth.clone();
    truth.multiplicity = multiplicity;
    Ok(OracleInstance { black_box, truth })
}

/// Symmetry group of `f` on the finite quotient, by exhaustive comparison.
pub fn symmetry_group(instance: &OracleInstance) -> Result<SubgroupGenerators> {
    let q = &instance.truth.quotient;
    let n = q.order().filter(|&n| n <= 4096).ok_or(Error::SizeCap(4096))?;
    let values: Vec<u64> = (0..n).map(|i| instance.black_box.eval_raw(&q.element_at(i).0)).collect();
    let gens = (0..n)
        .map(|g| q.element_at(g))
        .filter(|g| (0..n).all(|x| values[q.index_of(&q.add(&q.element_at(x), g)) as usize] == values[x as usize]))
        .collect();
    Ok(SubgroupGenerators::new(q.clone(), gens)?.canonical())
}

/// A seeded merge of the values `f` actually takes into groups of `m`,
/// retried until the merged function still has exactly the planted
/// subgroup as its symmetry group.
pub fn merge_preserving(inner: &OracleInstance, multiplicity: u64, seed: u64) -> Result<OracleInstance> {
    let q = &inner.truth.quotient;
    let n = q.order().filter(|&n| n <= 4096).ok_or(Error::SizeCap(4096))?;
    let mut range: Vec<u64> = (0..n).map(|i| inner.black_box.eval_raw(&q.element_at(i).0)).collect();
    range.sort_unstable();
    range.dedup();
    for attempt in 0..1000 {
        let mut order = range.clone();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x6d65_7267, attempt)));
        let mut merge = vec![u64::MAX; inner.black_box.codomain as usize];
        for (i, &v) in order.iter().enumerate() {
            merge[v as usize] = i as u64 / multiplicity;
        }
        let fresh = (order.len() as u64).div_ceil(multiplicity)..;
        for (slot, next) in merge.iter_mut().filter(|s| **s == u64::MAX).zip(fresh) {
            *slot = next;
        }
        let wrapped = wrap_many_to_one(inner, merge, multiplicity)?;
        if symmetry_group(&wrapped)? == inner.truth.hidden {
            return Ok(wrapped);
        }
    }
    Err(Error::InvalidInstance("no merge preserving the hidden subgroup found".into()))
}

fn check_target(state: &QuantumState, target: usize, codomain: u64) -> Result<usize> {
    let td = state.layout().dim(target)?;
    if (td as u64) < codomain {
        return Err(Error::DimensionMismatch { expected: codomain as usize, found: td });
    }
    Ok(td)
}

/// `|x>|y> -> |x>|y + f(x) mod |X|>` with control register `i` holding
/// domain coordinate `i`. Target values at or above `|X|` are left alone.
/// Counts one application of `U_f`.
pub fn apply_oracle(state: QuantumState, controls: &[usize], target: usize, bb: &BlackBox) -> Result<QuantumState> {
    if controls.len() != bb.domain.rank() {
        return Err(Error::DimensionMismatch { expected: bb.domain.rank(), found: controls.len() });
    }
    check_target(&state, target, bb.codomain)?;
    let dims: Vec<usize> = controls.iter().map(|&c| state.layout().dim(c)).collect::<Result<_>>()?;
    let total: usize = dims.iter().product();
    let mut coords = vec![0u64; dims.len()];
    let values: Vec<u64> = (0..total)
        .map(|mut flat| {
            for (c, &d) in coords.iter_mut().zip(&dims).rev() {
                *c = (flat % d) as u64;
                flat /= d;
            }
            bb.eval_raw(&coords)
        })
        .collect();
    bb.charge_quantum(1);
    let x = bb.codomain;
    state.apply_controlled_map(
        controls,
        target,
        |c, y| {
            if (y as u64) < x {
                ((y as u64 + values[c]) % x) as usize
            } else {
                y
            }
        },
    )
}

/// `|x>|y> -> |x>|U_{f(scale * x e_j)} y>`: the shift along generator `j`
/// controlled by `control`. Target values at or above `|X|` are left alone.
pub fn apply_shift(
    state: QuantumState,
    control: usize,
    target: usize,
    bb: &BlackBox,
    j: usize,
    scale: u64,
) -> Result<QuantumState> {
    if !bb.has_shift() {
        return Err(Error::ShiftUnavailable);
    }
    check_target(&state, target, bb.codomain)?;
    let cd = state.layout().dim(control)?;
    let tables: Vec<Vec<u64>> =
        (0..cd).map(|x| bb.shift_table(j, (x as u64).wrapping_mul(scale))).collect::<Result<_>>()?;
    bb.counter.shifts.fetch_add(1, Ordering::Relaxed);
    let x = bb.codomain as usize;
    state.apply_controlled_map(&[control], target, |c, y| if y < x { tables[c][y] as usize } else { y })
}

/// Serializable recipe for an instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InstanceDescriptor {
    Order {
        modulus: u64,
        base: u64,
    },
    Period {
        period: u64,
        #[serde(default)]
        relabeling: Option<Vec<u64>>,
        #[serde(default)]
        seed: Option<u64>,
    },
    Simon {
        secret: String,
        #[serde(default)]
        allow_zero: bool,
    },
    Dlog {
        modulus: u64,
        base: u64,
        target: u64,
    },
    Deutsch {
        f0: u8,
        f1: u8,
    },
    Stabiliser {
        moduli: Vec<u64>,
        generator_actions: Vec<Vec<u64>>,
        base_point: u64,
    },
    Hsp {
        moduli: Vec<u64>,
        generators: Vec<Vec<u64>>,
        #[serde(default)]
        seed: u64,
    },
    ManyToOne {
        inner: Box<InstanceDescriptor>,
        multiplicity: u64,
        #[serde(default)]
        merge: Option<Vec<u64>>,
        #[serde(default)]
        seed: u64,
    },
}

impl InstanceDescriptor {
    pub fn build(&self) -> Result<OracleInstance> {
        match self {
            Self::Order { modulus, base } => make_order_instance(*modulus, *base),
            Self::Period { period, relabeling, seed } => match (relabeling, seed) {
                (Some(r), _) => make_period_instance(*period, r.clone()),
                (None, Some(s)) => make_period_instance_seeded(*period, *s),
                (None, None) => make_period_instance(*period, (0..*period).collect()),
            },
            Self::Simon { secret, allow_zero } => {
                let bits = parse_bits(secret)?;
                make_simon_instance(bits.len(), &bits, *allow_zero)
            }
            Self::Dlog { modulus, base, target } => make_dlog_instance(*modulus, *base, *target),
            Self::Deutsch { f0, f1 } => {
                if *f0 > 1 || *f1 > 1 {
                    return Err(Error::InvalidInstance("Deutsch values must be bits".into()));
                }
                make_deutsch_instance(*f0 == 1, *f1 == 1)
            }
            Self::Stabiliser { moduli, generator_actions, base_point } => make_permutation_action_instance(
                &GroupSpec::new(moduli.clone())?,
                generator_actions.clone(),
                *base_point,
            ),
            Self::Hsp { moduli, generators, seed } => {
                let spec = GroupSpec::new(moduli.clone())?;
                let k = SubgroupGenerators::new(spec.clone(), generators.iter().cloned().map(GroupElement).collect())?;
                make_hsp_instance(&spec, &k, *seed)
            }
            Self::ManyToOne { inner, multiplicity, merge, seed } => {
                let inner = inner.build()?;
                match merge {
                    Some(m) => wrap_many_to_one(&inner, m.clone(), *multiplicity),
                    None => merge_preserving(&inner, *multiplicity, *seed),
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amplitudes::RegisterLayout;
    use num_complex::Complex64;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    /// Least `r > 0` with `f(t + r) = f(t)` for all `t < bound`.
    fn least_period(bb: &BlackBox, bound: u64) -> u64 {
        (1..=bound).find(|&r| (0..bound).all(|t| bb.eval_raw(&[t + r]) == bb.eval_raw(&[t]))).unwrap()
    }

    fn el(c: &[u64]) -> GroupElement {
        GroupElement(c.to_vec())
    }

    fn state(dims: &[usize], coords: &[usize]) -> QuantumState {
        let layout = RegisterLayout::new(dims.iter().enumerate().map(|(i, &d)| (format!("r{i}"), d))).unwrap();
        QuantumState::basis(layout, coords).unwrap()
    }

    fn uniform_control(n: usize, target_dim: usize) -> QuantumState {
        let c = QuantumState::uniform(RegisterLayout::new([("x", n)]).unwrap());
        let t = QuantumState::basis(RegisterLayout::new([("y", target_dim)]).unwrap(), &[0]).unwrap();
        c.tensor(&t).unwrap()
    }

    #[test]
    fn order_examples() {
        for (n, a, r) in [(15, 1, 1), (15, 2, 4), (15, 4, 2), (21, 2, 6)] {
            let inst = make_order_instance(n, a).unwrap();
            assert_eq!(inst.period(), Some(r));
            assert_eq!(least_period(&inst.black_box, 64), r);
        }
        assert!(make_order_instance(15, 3).is_err());
    }

    #[test]
    fn period_examples() {
        let c = make_period_instance(1, vec![0]).unwrap();
        assert!((0..10).all(|t| c.black_box.eval_raw(&[t]) == 0));
        let six = make_period_instance(6, (0..6).collect()).unwrap();
        assert!((0..20).all(|t| six.black_box.eval_raw(&[t]) == t % 6));
        let five = make_period_instance(5, vec![3, 0, 4, 1, 2]).unwrap();
        assert_eq!(least_period(&five.black_box, 40), 5);
        assert_eq!(five.period(), Some(5));
        assert!(make_period_instance(3, vec![0, 0, 1]).is_err());
        assert!(!five.black_box.has_shift());
    }

    #[test]
    fn simon_examples() {
        let s = parse_bits("101").unwrap();
        let inst = make_simon_instance(3, &s, false).unwrap();
        assert_eq!(inst.truth.hidden.enumerate(10).unwrap(), BTreeSet::from([el(&[0, 0, 0]), el(&[1, 0, 1])]));
        inst.verify_promise().unwrap();

        let one = make_simon_instance(1, &[1], false).unwrap();
        assert_eq!(one.black_box.eval_raw(&[0]), one.black_box.eval_raw(&[1]));

        let two = make_simon_instance(2, &[1, 1], false).unwrap();
        let f = |a, b| two.black_box.eval_raw(&[a, b]);
        assert_eq!(f(0, 0), f(1, 1));
        assert_eq!(f(0, 1), f(1, 0));
        assert_ne!(f(0, 0), f(0, 1));

        assert!(make_simon_instance(2, &[0, 0], false).is_err());
        let zero = make_simon_instance(2, &[0, 0], true).unwrap();
        zero.verify_promise().unwrap();
        assert_eq!(zero.truth.hidden.order(), 1);
    }

    #[test]
    fn dlog_examples() {
        let trivial = make_dlog_instance(7, 3, 1).unwrap();
        assert_eq!(trivial.truth.dlog_exponent, Some(0));
        // b = 1 makes f independent of y.
        assert_eq!(
            trivial.truth.hidden,
            SubgroupGenerators::new(GroupSpec::new(vec![6, 6]).unwrap(), vec![el(&[0, 1])]).unwrap()
        );

        let inst = make_dlog_instance(7, 3, 4).unwrap();
        assert_eq!(inst.truth.dlog_exponent, Some(4));
        // Exhaustive kernel of (x, y) -> 3^x 4^y mod 7.
        let spec = GroupSpec::new(vec![6, 6]).unwrap();
        let kernel: BTreeSet<_> =
            spec.elements(100).unwrap().into_iter().filter(|g| inst.black_box.eval_raw(&g.0) == 1).collect();
        assert_eq!(inst.truth.hidden.enumerate(100).unwrap(), kernel);
        assert_eq!(inst.truth.hidden, SubgroupGenerators::new(spec.clone(), vec![el(&[2, 1])]).unwrap());
        assert!(!inst.truth.hidden.contains(&el(&[1, 2])));
        inst.verify_promise().unwrap();

        let same = make_dlog_instance(11, 2, 2).unwrap();
        assert_eq!(same.truth.dlog_exponent, Some(1));
        let spec10 = GroupSpec::new(vec![10, 10]).unwrap();
        assert_eq!(same.truth.hidden, SubgroupGenerators::new(spec10, vec![el(&[1, 9])]).unwrap());

        // 2 generates a subgroup of order 3 in Z_7*, which misses 3.
        assert!(make_dlog_instance(7, 2, 3).is_err());
    }

    #[test]
    fn deutsch_examples() {
        let z2 = GroupSpec::new(vec![2]).unwrap();
        let c = make_deutsch_instance(false, false).unwrap();
        assert_eq!(c.truth.hidden, SubgroupGenerators::whole(z2.clone()));
        for (a, b) in [(false, true), (true, false)] {
            let inst = make_deutsch_instance(a, b).unwrap();
            assert_eq!(inst.truth.hidden, SubgroupGenerators::trivial(z2.clone()));
            inst.verify_promise().unwrap();
        }
    }

    #[test]
    fn stabiliser_examples() {
        let z4 = GroupSpec::new(vec![4]).unwrap();
        let trivial = make_permutation_action_instance(&z4, vec![vec![0, 1, 2]], 1).unwrap();
        assert_eq!(trivial.truth.hidden, SubgroupGenerators::whole(z4.clone()));
        let rotation = make_permutation_action_instance(&z4, vec![vec![1, 2, 3, 0]], 2).unwrap();
        assert_eq!(rotation.truth.hidden.order(), 1);
        let parity = make_permutation_action_instance(&z4, vec![vec![1, 0]], 0).unwrap();
        assert_eq!(parity.truth.hidden.enumerate(10).unwrap(), BTreeSet::from([el(&[0]), el(&[2])]));
        parity.verify_promise().unwrap();
        // A 3-cycle is not an action of Z_4.
        assert!(make_permutation_action_instance(&z4, vec![vec![1, 2, 0]], 0).is_err());
    }

    #[test]
    fn planted_hsp_promise_holds_for_every_subgroup() {
        for m in [vec![4, 2], vec![2, 2, 2], vec![3, 9], vec![6, 2]] {
            let spec = GroupSpec::new(m).unwrap();
            for k in crate::groups::all_subgroups(&spec, 10_000).unwrap() {
                for seed in 0..3 {
                    let inst = make_hsp_instance(&spec, &k, seed).unwrap();
                    inst.verify_promise().unwrap();
                    assert_eq!(inst.black_box.codomain_size(), k.hermite().index());
                }
            }
        }
    }

    #[test]
    fn lattice_instance_reduces_integer_factors() {
        let q = GroupSpec::new(vec![6, 2]).unwrap();
        let inst = make_lattice_instance(&q, &SubgroupGenerators::trivial(q.clone()), &[0], 3).unwrap();
        assert_eq!(inst.black_box.domain().factors(), &[Factor::Integers, Factor::Cyclic(2)]);
        assert_eq!(inst.black_box.eval_raw(&[13, 1]), inst.black_box.eval_raw(&[1, 1]));
        assert_eq!(inst.truth.period_along(0), 6);
        let along = inst.black_box.along_generator(0).unwrap();
        assert_eq!(least_period(&along, 40), 6);
    }

    #[test]
    fn many_to_one_examples() {
        let six = make_period_instance(6, (0..6).collect()).unwrap();
        let same = wrap_many_to_one(&six, (0..6).collect(), 1).unwrap();
        assert!((0..20).all(|t| same.black_box.eval_raw(&[t]) == six.black_box.eval_raw(&[t])));

        // Pairing {0,3},{1,4},{2,5} makes f' 3-periodic while the planted
        // period stays 6.
        let merged = wrap_many_to_one(&six, vec![0, 1, 2, 0, 1, 2], 2).unwrap();
        assert_eq!(merged.period(), Some(6));
        assert_eq!(least_period(&merged.black_box, 40), 3);
        assert_ne!(merged.black_box.eval_raw(&[3]), 3);
        merged.verify_promise().unwrap();

        let simon = make_simon_instance(2, &[1, 1], false).unwrap();
        let full = wrap_many_to_one(&simon, vec![0, 0, 1, 2], 2).unwrap();
        let spec = GroupSpec::binary(2);
        let values: BTreeSet<u64> = spec.elements(4).unwrap().iter().map(|g| full.black_box.eval_raw(&g.0)).collect();
        assert_eq!(values.len(), 1);
        assert_eq!(full.black_box.multiplicity(), 2);

        assert!(wrap_many_to_one(&six, vec![0, 0, 0, 1, 1, 1], 2).is_err());
    }

    #[test]
    fn merge_preserving_keeps_the_period() {
        for r in [6u64, 12, 30] {
            for m in [2, 3] {
                for seed in 0..5 {
                    let inner = make_period_instance_seeded(r, seed).unwrap();
                    let merged = merge_preserving(&inner, m, seed).unwrap();
                    assert_eq!(least_period(&merged.black_box, 4 * r), r);
                    merged.verify_promise().unwrap();
                }
            }
        }
    }

    #[test]
    fn oracle_on_zero_control() {
        let inst = make_order_instance(15, 2).unwrap();
        let s = apply_oracle(state(&[4, 15], &[0, 0]), &[0], 1, &inst.black_box).unwrap();
        assert!((s.amplitude(&[0, 1]).unwrap().re - 1.0).abs() < 1e-12);
        assert_eq!(inst.black_box.counts().quantum, 1);
    }

    #[test]
    fn oracle_with_constant_deutsch_is_a_product_state() {
        let inst = make_deutsch_instance(true, true).unwrap();
        let s = apply_oracle(uniform_control(2, 2), &[0], 1, &inst.black_box).unwrap();
        let expect =
            QuantumState::uniform(RegisterLayout::new([("x", 2)]).unwrap()).tensor(&state(&[2], &[1])).unwrap();
        assert!(s.l2_distance(&expect).unwrap() < 1e-12);
    }

    #[test]
    fn oracle_order_15_2_on_four_controls() {
        let inst = make_order_instance(15, 2).unwrap();
        let s = apply_oracle(uniform_control(4, 15), &[0], 1, &inst.black_box).unwrap();
        for (x, fx) in [(0, 1), (1, 2), (2, 4), (3, 8)] {
            assert!((s.amplitude(&[x, fx]).unwrap() - Complex64::new(0.5, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn oracle_is_a_permutation_of_basis_states() {
        let inst = make_simon_instance(2, &[1, 1], false).unwrap();
        let mut images = BTreeSet::new();
        for a in 0..2 {
            for b in 0..2 {
                for y in 0..5 {
                    let s = apply_oracle(state(&[2, 2, 5], &[a, b, y]), &[0, 1], 2, &inst.black_box).unwrap();
                    let idx = s.amplitudes().iter().position(|v| v.norm() > 0.5).unwrap();
                    images.insert(idx);
                }
            }
        }
        assert_eq!(images.len(), 20);
    }

    #[test]
    fn oracle_rejects_small_target() {
        let inst = make_order_instance(15, 2).unwrap();
        assert!(apply_oracle(state(&[4, 8], &[0, 0]), &[0], 1, &inst.black_box).is_err());
    }

    #[test]
    fn shift_examples() {
        let inst = make_order_instance(15, 2).unwrap();
        let s = apply_shift(state(&[8, 15], &[0, 7]), 0, 1, &inst.black_box, 0, 1).unwrap();
        assert!((s.amplitude(&[0, 7]).unwrap().re - 1.0).abs() < 1e-12);
        let s = apply_shift(state(&[8, 15], &[3, 1]), 0, 1, &inst.black_box, 0, 1).unwrap();
        assert!((s.amplitude(&[3, 8]).unwrap().re - 1.0).abs() < 1e-12);

        let simon = make_simon_instance(3, &[1, 0, 1], false).unwrap();
        let bb = &simon.black_box;
        for y in GroupSpec::binary(3).elements(8).unwrap() {
            let fy = bb.eval_raw(&y.0) as usize;
            let mut moved = y.0.clone();
            moved[1] ^= 1;
            let fm = bb.eval_raw(&moved) as usize;
            let s0 = apply_shift(state(&[2, 8], &[0, fy]), 0, 1, bb, 1, 1).unwrap();
            assert!((s0.amplitude(&[0, fy]).unwrap().re - 1.0).abs() < 1e-12);
            let s1 = apply_shift(state(&[2, 8], &[1, fy]), 0, 1, bb, 1, 1).unwrap();
            assert!((s1.amplitude(&[1, fm]).unwrap().re - 1.0).abs() < 1e-12);
        }

        let period = make_period_instance(4, (0..4).collect()).unwrap();
        assert_eq!(
            apply_shift(state(&[2, 4], &[0, 0]), 0, 1, &period.black_box, 0, 1).unwrap_err(),
            Error::ShiftUnavailable
        );
    }

    /// `shift(x1) o shift(x2) = shift(x1 + x2)` on every label, and the
    /// shift moves `f(y)` to `f(y + x e_j)`.
    fn check_shift_action(inst: &OracleInstance, amounts: u64) {
        let bb = &inst.black_box;
        let q = &inst.truth.quotient;
        for j in 0..bb.domain().rank() {
            for x1 in 0..amounts {
                let t1 = bb.shift_table(j, x1).unwrap();
                let mut sorted = t1.clone();
                sorted.sort_unstable();
                assert_eq!(sorted, (0..bb.codomain_size()).collect::<Vec<_>>());
                for x2 in 0..amounts {
                    let t2 = bb.shift_table(j, x2).unwrap();
                    let t12 = bb.shift_table(j, x1 + x2).unwrap();
                    for y in 0..bb.codomain_size() as usize {
                        assert_eq!(t1[t2[y] as usize], t12[y]);
                    }
                }
                for i in 0..q.order().unwrap().min(64) {
                    let y = q.element_at(i);
                    let mut moved = y.0.clone();
                    moved[j] += x1;
                    assert_eq!(t1[bb.eval_raw(&y.0) as usize], bb.eval_raw(&moved));
                }
            }
        }
    }

    #[test]
    fn shifts_are_additive_and_move_f() {
        check_shift_action(&make_order_instance(21, 2).unwrap(), 8);
        check_shift_action(&make_simon_instance(3, &[1, 1, 0], false).unwrap(), 4);
        check_shift_action(&make_dlog_instance(11, 2, 7).unwrap(), 6);
        check_shift_action(&make_deutsch_instance(false, true).unwrap(), 4);
        let z4 = GroupSpec::new(vec![4, 2]).unwrap();
        check_shift_action(
            &make_permutation_action_instance(&z4, vec![vec![1, 2, 3, 0, 4, 5], vec![0, 1, 2, 3, 5, 4]], 4).unwrap(),
            5,
        );
    }

    #[test]
    fn composed_views_share_the_counter() {
        let inst = make_dlog_instance(11, 2, 7).unwrap();
        let along = inst.black_box.along_generator(1).unwrap();
        assert_eq!(along.query(&[3]), inst.black_box.eval_raw(&[0, 3]));
        let dil = along.dilated(2).unwrap();
        assert_eq!(dil.query(&[3]), inst.black_box.eval_raw(&[0, 6]));
        assert_eq!(inst.black_box.counts().classical, 2);
        let t = dil.shift_table(0, 1).unwrap();
        assert_eq!(t[1], pow_mod(7, 2, 11));
        let fresh = inst.black_box.with_fresh_counter();
        assert_eq!(fresh.query(&[1, 1]), inst.black_box.eval_raw(&[1, 1]));
        assert_eq!(fresh.counts().classical, 1);
        assert_eq!(inst.black_box.counts().classical, 2);
    }

    #[test]
    fn descriptors_round_trip_and_build() {
        let json = r#"[
            {"kind": "order", "modulus": 15, "base": 2},
            {"kind": "period", "period": 5, "relabeling": [3, 0, 4, 1, 2]},
            {"kind": "period", "period": 7, "seed": 9},
            {"kind": "simon", "secret": "101"},
            {"kind": "dlog", "modulus": 7, "base": 3, "target": 4},
            {"kind": "deutsch", "f0": 0, "f1": 1},
            {"kind": "stabiliser", "moduli": [4], "generator_actions": [[1, 0]], "base_point": 0},
            {"kind": "hsp", "moduli": [4, 2], "generators": [[2, 0], [0, 1]], "seed": 3},
            {"kind": "many-to-one", "inner": {"kind": "period", "period": 12, "seed": 1}, "multiplicity": 3, "seed": 4}
        ]"#;
        let descriptors: Vec<InstanceDescriptor> = serde_json::from_str(json).unwrap();
        for d in &descriptors {
            let back: InstanceDescriptor = serde_json::from_str(&serde_json::to_string(d).unwrap()).unwrap();
            assert_eq!(&back, d);
            d.build().unwrap();
        }
        assert!(serde_json::from_str::<InstanceDescriptor>(r#"{"kind": "order", "modulus": 15}"#).is_err());
        assert!(serde_json::from_str::<InstanceDescriptor>(r#"{"kind": "nope"}"#).is_err());
    }

    proptest! {
        #[test]
        fn planted_promise_random(d1 in 1u64..7, d2 in 1u64..7, g1 in 0u64..49, g2 in 0u64..49, seed in 0u64..1000) {
            let spec = GroupSpec::new(vec![d1, d2]).unwrap();
            let k = SubgroupGenerators::new(spec.clone(), vec![spec.element_at(g1 % (d1 * d2)), spec.element_at(g2 % (d1 * d2))]).unwrap();
            let inst = make_hsp_instance(&spec, &k, seed).unwrap();
            prop_assert!(inst.verify_promise().is_ok());
            prop_assert_eq!(symmetry_group(&inst).unwrap(), k);
        }
    }
}
