//! Finite Abelian groups `Z_{d_1} x ... x Z_{d_l}`, their subgroups, and the
//! character-relation kernel used to turn Fourier samples into a generating
//! set for the hidden subgroup.
//!
//! A subgroup `S` is identified with the lattice `L = S + diag(d) Z^l` in
//! `Z^l`. Its Hermite normal form (upper triangular, positive pivots, entries
//! above each pivot reduced into `[0, pivot)`) is unique, which gives both a
//! canonical generating set and a cheap equality test. Exhaustive
//! enumeration is kept alongside as the trusted oracle.

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::arith::{ext_gcd, factorize, inv_mod, is_prime, valuation};
use crate::error::{Error, Result};

/// Moduli above this are rejected by the trial-division splitter.
pub const MAX_SPLIT_MODULUS: u64 = 1 << 31;

/// Default cap on explicit element enumeration.
pub const DEFAULT_ENUMERATION_CAP: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawSpec")]
pub struct GroupSpec {
    moduli: Vec<u64>,
}

#[derive(Deserialize)]
struct RawSpec {
    moduli: Vec<u64>,
}

impl TryFrom<RawSpec> for GroupSpec {
    type Error = Error;

    fn try_from(raw: RawSpec) -> Result<Self> {
        GroupSpec::new(raw.moduli)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroupElement(pub Vec<u64>);

impl GroupElement {
    pub fn coords(&self) -> &[u64] {
        &self.0
    }
}

impl fmt::Display for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

impl GroupSpec {
    pub fn new(moduli: Vec<u64>) -> Result<Self> {
        if moduli.contains(&0) {
            return Err(Error::InvalidGroup("moduli must be >= 1".into()));
        }
        if moduli.iter().any(|&d| d > 1 << 62) {
            return Err(Error::InvalidGroup("moduli must be below 2^62".into()));
        }
        Ok(Self { moduli })
    }

    /// `Z_2^l`.
    pub fn binary(l: usize) -> Self {
        Self { moduli: vec![2; l] }
    }

    pub fn moduli(&self) -> &[u64] {
        &self.moduli
    }

    pub fn rank(&self) -> usize {
        self.moduli.len()
    }

    /// Group order, or `None` on overflow.
    pub fn order(&self) -> Option<u64> {
        self.moduli.iter().try_fold(1u64, |acc, &d| acc.checked_mul(d))
    }

    pub fn zero(&self) -> GroupElement {
        GroupElement(vec![0; self.rank()])
    }

    /// `e_j`, reduced (so it is zero in a factor `Z_1`).
    pub fn basis(&self, j: usize) -> GroupElement {
        let mut e = self.zero();
        e.0[j] = 1 % self.moduli[j];
        e
    }

    pub fn contains(&self, x: &GroupElement) -> bool {
        x.0.len() == self.rank() && x.0.iter().zip(&self.moduli).all(|(c, d)| c < d)
    }

    /// Reduces arbitrary integer coordinates into the group.
    pub fn element(&self, coords: &[i64]) -> Result<GroupElement> {
        if coords.len() != self.rank() {
            return Err(Error::InvalidElement(format!("expected {} coordinates, got {}", self.rank(), coords.len())));
        }
        Ok(GroupElement(
            coords.iter().zip(&self.moduli).map(|(&c, &d)| (c as i128).rem_euclid(d as i128) as u64).collect(),
        ))
    }

    pub fn checked(&self, x: GroupElement) -> Result<GroupElement> {
        if self.contains(&x) {
            Ok(x)
        } else {
            Err(Error::InvalidElement(format!("{x} is not a reduced element of {self}")))
        }
    }

    pub fn add(&self, a: &GroupElement, b: &GroupElement) -> GroupElement {
        GroupElement(
            a.0.iter()
                .zip(&b.0)
                .zip(&self.moduli)
                .map(|((&x, &y), &d)| ((x as u128 + y as u128) % d as u128) as u64)
                .collect(),
        )
    }

    pub fn neg(&self, a: &GroupElement) -> GroupElement {
        GroupElement(a.0.iter().zip(&self.moduli).map(|(&x, &d)| (d - x) % d).collect())
    }

    pub fn scale(&self, a: &GroupElement, k: u64) -> GroupElement {
        GroupElement(
            a.0.iter().zip(&self.moduli).map(|(&x, &d)| ((x as u128 * k as u128) % d as u128) as u64).collect(),
        )
    }

    /// Additive order of `a`.
    pub fn element_order(&self, a: &GroupElement) -> u64 {
        a.0.iter().zip(&self.moduli).map(|(&x, &d)| d / crate::arith::gcd(x, d)).fold(1, crate::arith::lcm)
    }

    /// Mixed-radix index, first coordinate most significant.
    pub fn index_of(&self, a: &GroupElement) -> u64 {
        a.0.iter().zip(&self.moduli).fold(0u64, |acc, (&x, &d)| acc * d + x)
    }

    pub fn element_at(&self, mut index: u64) -> GroupElement {
        let mut coords = vec![0; self.rank()];
        for (c, &d) in coords.iter_mut().zip(&self.moduli).rev() {
            *c = index % d;
            index /= d;
        }
        GroupElement(coords)
    }

    /// All elements in index order.
    pub fn elements(&self, cap: usize) -> Result<Vec<GroupElement>> {
        let n = self.order().filter(|&n| n as u128 <= cap as u128).ok_or(Error::SizeCap(cap))?;
        Ok((0..n).map(|i| self.element_at(i)).collect())
    }

    /// Prime-power view, if every modulus is a power of one prime and the
    /// exponents ascend. Factors `Z_1` count as exponent zero.
    pub fn prime_power_form(&self) -> Option<PrimePowerGroup> {
        let mut prime = None;
        let mut exps = Vec::with_capacity(self.rank());
        for &d in &self.moduli {
            if d == 1 {
                exps.push(0);
                continue;
            }
            let f = factorize(d);
            if f.len() != 1 {
                return None;
            }
            let (p, e) = f[0];
            if *prime.get_or_insert(p) != p {
                return None;
            }
            exps.push(e);
        }
        PrimePowerGroup::new(prime.unwrap_or(2), exps).ok()
    }
}

impl fmt::Display for GroupSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.moduli.is_empty() {
            return write!(f, "{{0}}");
        }
        for (i, d) in self.moduli.iter().enumerate() {
            if i > 0 {
                write!(f, " x ")?;
            }
            write!(f, "Z_{d}")?;
        }
        Ok(())
    }
}

/// `Z_{p^{m_1}} x ... x Z_{p^{m_l}}` with `m_1 <= ... <= m_l = m`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawPrimePower")]
pub struct PrimePowerGroup {
    p: u64,
    exponents: Vec<u32>,
}

#[derive(Deserialize)]
struct RawPrimePower {
    p: u64,
    exponents: Vec<u32>,
}

impl TryFrom<RawPrimePower> for PrimePowerGroup {
    type Error = Error;

    fn try_from(raw: RawPrimePower) -> Result<Self> {
        PrimePowerGroup::new(raw.p, raw.exponents)
    }
}

impl PrimePowerGroup {
    pub fn new(p: u64, exponents: Vec<u32>) -> Result<Self> {
        if !is_prime(p) {
            return Err(Error::InvalidGroup(format!("{p} is not prime")));
        }
        if exponents.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidGroup("exponents must be ascending".into()));
        }
        let m = exponents.last().copied().unwrap_or(0);
        if (p as u128).pow(m) > MAX_SPLIT_MODULUS as u128 {
            return Err(Error::InvalidGroup("prime power exceeds 2^31".into()));
        }
        Ok(Self { p, exponents })
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn exponents(&self) -> &[u32] {
        &self.exponents
    }

    /// Largest exponent `m`.
    pub fn m(&self) -> u32 {
        self.exponents.last().copied().unwrap_or(0)
    }

    /// `p^m`.
    pub fn exponent_modulus(&self) -> u64 {
        self.p.pow(self.m())
    }

    /// `p^{m - m_j}`, the weight of coordinate `j` in the orthogonality relation.
    pub fn weight(&self, j: usize) -> u64 {
        self.p.pow(self.m() - self.exponents[j])
    }

    pub fn spec(&self) -> GroupSpec {
        GroupSpec { moduli: self.exponents.iter().map(|&e| self.p.pow(e)).collect() }
    }

    /// `sum_j p^{m-m_j} h_j t_j = 0 (mod p^m)`.
    pub fn orthogonal(&self, t: &[u64], h: &[u64]) -> bool {
        let q = self.exponent_modulus() as u128;
        let s = t
            .iter()
            .zip(h)
            .enumerate()
            .map(|(j, (&tj, &hj))| (self.weight(j) as u128 * tj as u128 % q) * hj as u128 % q)
            .sum::<u128>();
        s % q == 0
    }
}

/// An observed character tuple `t`, `0 <= t_j < p^{m_j}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharacterSample {
    pub group: PrimePowerGroup,
    pub t: Vec<u64>,
}

impl CharacterSample {
    pub fn new(group: PrimePowerGroup, t: Vec<u64>) -> Result<Self> {
        let spec = group.spec();
        if !spec.contains(&GroupElement(t.clone())) {
            return Err(Error::InvalidElement(format!("{t:?} is not a character of {spec}")));
        }
        Ok(Self { group, t })
    }

    pub fn is_zero(&self) -> bool {
        self.t.iter().all(|&x| x == 0)
    }

    /// Whether the relation holds against every element of `k`.
    pub fn annihilates(&self, k: &SubgroupGenerators) -> bool {
        k.gens.iter().all(|h| self.group.orthogonal(&self.t, &h.0))
    }
}

/// A generating set for a subgroup of `spec`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RawSubgroup", into = "RawSubgroup")]
pub struct SubgroupGenerators {
    pub spec: GroupSpec,
    pub gens: Vec<GroupElement>,
}

#[derive(Serialize, Deserialize)]
struct RawSubgroup {
    moduli: Vec<u64>,
    generators: Vec<Vec<u64>>,
}

impl TryFrom<RawSubgroup> for SubgroupGenerators {
    type Error = Error;

    fn try_from(raw: RawSubgroup) -> Result<Self> {
        let spec = GroupSpec::new(raw.moduli)?;
        SubgroupGenerators::new(spec, raw.generators.into_iter().map(GroupElement).collect())
    }
}

impl From<SubgroupGenerators> for RawSubgroup {
    fn from(s: SubgroupGenerators) -> Self {
        RawSubgroup { moduli: s.spec.moduli, generators: s.gens.into_iter().map(|g| g.0).collect() }
    }
}

impl SubgroupGenerators {
    pub fn new(spec: GroupSpec, gens: Vec<GroupElement>) -> Result<Self> {
        let gens = gens.into_iter().map(|g| spec.checked(g)).collect::<Result<_>>()?;
        Ok(Self { spec, gens })
    }

    pub fn trivial(spec: GroupSpec) -> Self {
        Self { spec, gens: Vec::new() }
    }

    pub fn whole(spec: GroupSpec) -> Self {
        let gens = (0..spec.rank()).map(|j| spec.basis(j)).collect();
        Self { spec, gens }
    }

    pub fn hermite(&self) -> HermiteBasis {
        HermiteBasis::new(&self.spec, &self.gens)
    }

    /// The unique canonical generating set (at most `rank` generators).
    pub fn canonical(&self) -> Self {
        self.hermite().to_generators()
    }

    pub fn order(&self) -> u64 {
        self.hermite().subgroup_order()
    }

    pub fn contains(&self, x: &GroupElement) -> bool {
        self.hermite().contains(&x.0)
    }

    /// Closure under addition by breadth-first search.
    pub fn enumerate(&self, cap: usize) -> Result<BTreeSet<GroupElement>> {
        let mut seen = BTreeSet::new();
        let zero = self.spec.zero();
        seen.insert(zero.clone());
        let mut queue = VecDeque::from([zero]);
        while let Some(x) = queue.pop_front() {
            for g in &self.gens {
                let y = self.spec.add(&x, g);
                if !seen.contains(&y) {
                    if seen.len() >= cap {
                        return Err(Error::SizeCap(cap));
                    }
                    seen.insert(y.clone());
                    queue.push_back(y);
                }
            }
        }
        Ok(seen)
    }
}

impl PartialEq for SubgroupGenerators {
    /// Equality of generated subgroups, not of generator lists.
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec && self.hermite() == other.hermite()
    }
}

impl Eq for SubgroupGenerators {}

impl fmt::Display for SubgroupGenerators {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<")?;
        for (i, g) in self.gens.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{g}")?;
        }
        write!(f, "> in {}", self.spec)
    }
}

/// True iff both generating sets generate the same subgroup.
pub fn subgroups_equal(a: &SubgroupGenerators, b: &SubgroupGenerators) -> Result<bool> {
    if a.spec != b.spec {
        return Err(Error::InvalidGroup(format!("{} vs {}", a.spec, b.spec)));
    }
    Ok(a.hermite() == b.hermite())
}

/// Hermite normal form of a subgroup lattice. Row `j` has its pivot in
/// column `j`, the pivot divides `d_j`, and the subgroup index is the
/// product of the pivots.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HermiteBasis {
    moduli: Vec<u64>,
    rows: Vec<Vec<u64>>,
}

impl HermiteBasis {
    pub fn new(spec: &GroupSpec, gens: &[GroupElement]) -> Self {
        let moduli = spec.moduli().to_vec();
        let l = moduli.len();
        let reduce = |row: &mut Vec<i128>, from: usize| {
            for k in from..l {
                row[k] = row[k].rem_euclid(moduli[k] as i128);
            }
        };
        let mut pool: Vec<Vec<i128>> = gens
            .iter()
            .map(|g| g.0.iter().map(|&x| x as i128).collect())
            .chain((0..l).map(|j| {
                let mut r = vec![0i128; l];
                r[j] = moduli[j] as i128;
                r
            }))
            .collect();
        let mut rows: Vec<Vec<i128>> = Vec::with_capacity(l);
        for col in 0..l {
            let mut pivot: Option<Vec<i128>> = None;
            let mut rest = Vec::with_capacity(pool.len());
            for mut r in pool.drain(..) {
                if r[col] == 0 {
                    rest.push(r);
                    continue;
                }
                match pivot.take() {
                    None => pivot = Some(r),
                    Some(mut p) => {
                        let (g, s, t) = ext_gcd(p[col], r[col]);
                        let (pa, ra) = (p[col] / g, r[col] / g);
                        let np: Vec<i128> = (0..l).map(|k| s * p[k] + t * r[k]).collect();
                        for k in 0..l {
                            r[k] = ra * p[k] - pa * r[k];
                        }
                        p = np;
                        reduce(&mut p, col + 1);
                        reduce(&mut r, col + 1);
                        debug_assert_eq!(r[col], 0);
                        if r.iter().any(|&x| x != 0) {
                            rest.push(r);
                        }
                        pivot = Some(p);
                    }
                }
            }
            pool = rest;
            // The row d_col e_col is always present, so a pivot exists.
            let mut p = pivot.expect("lattice contains d_j e_j");
            if p[col] < 0 {
                p.iter_mut().for_each(|x| *x = -*x);
                reduce(&mut p, col + 1);
            }
            rows.push(p);
        }
        // Reduce entries above each pivot into [0, pivot).
        for j in 0..l {
            let pj = rows[j][j];
            for i in 0..j {
                let q = rows[i][j].div_euclid(pj);
                if q != 0 {
                    let pivot_row = rows[j].clone();
                    for k in j..l {
                        rows[i][k] -= q * pivot_row[k];
                    }
                }
            }
        }
        let rows = rows.into_iter().map(|r| r.into_iter().map(|x| x as u64).collect()).collect();
        Self { moduli, rows }
    }

    pub fn moduli(&self) -> &[u64] {
        &self.moduli
    }

    pub fn rows(&self) -> &[Vec<u64>] {
        &self.rows
    }

    pub fn pivot(&self, j: usize) -> u64 {
        self.rows[j][j]
    }

    /// `[G : S]`.
    pub fn index(&self) -> u64 {
        (0..self.rows.len()).map(|j| self.pivot(j)).product()
    }

    pub fn subgroup_order(&self) -> u64 {
        self.moduli.iter().enumerate().map(|(j, &d)| d / self.pivot(j)).product()
    }

    /// Canonical representative of the coset `x + S`: the unique element of
    /// the coset with `0 <= x_j < pivot_j` for every `j`.
    #[allow(clippy::needless_range_loop)]
    pub fn coset_rep(&self, x: &[u64]) -> Vec<u64> {
        let l = self.moduli.len();
        let mut v: Vec<i128> = x.iter().map(|&c| c as i128).collect();
        for j in 0..l {
            let p = self.pivot(j) as i128;
            let q = v[j].div_euclid(p);
            if q != 0 {
                for k in j..l {
                    v[k] -= q * self.rows[j][k] as i128;
                }
            }
            for k in j + 1..l {
                v[k] = v[k].rem_euclid(self.moduli[k] as i128);
            }
        }
        v.into_iter().map(|c| c as u64).collect()
    }

    pub fn contains(&self, x: &[u64]) -> bool {
        self.coset_rep(x).iter().all(|&c| c == 0)
    }

    pub fn to_generators(&self) -> SubgroupGenerators {
        let spec = GroupSpec { moduli: self.moduli.clone() };
        let gens = self
            .rows
            .iter()
            .map(|r| GroupElement(r.iter().zip(&self.moduli).map(|(&x, &d)| x % d).collect()))
            .filter(|g| g.0.iter().any(|&x| x != 0))
            .collect();
        SubgroupGenerators { spec, gens }
    }

    /// Canonical coset representatives of `G / S`, one per coset.
    pub fn coset_reps(&self) -> impl Iterator<Item = Vec<u64>> + '_ {
        let pivots: Vec<u64> = (0..self.rows.len()).map(|j| self.pivot(j)).collect();
        let total = self.index();
        (0..total).map(move |mut i| {
            let mut v = vec![0; pivots.len()];
            for (c, &p) in v.iter_mut().zip(&pivots).rev() {
                *c = i % p;
                i /= p;
            }
            v
        })
    }
}

/// Generators of `{h : sum_j p^{m-m_j} h_j t_j = 0 (mod p^m)}` for every
/// sample `t`.
///
/// Elimination over the local ring `Z_{p^m}`: the pivot is always an entry
/// of minimal `p`-adic valuation, so it divides every other entry of its row
/// and column and can clear them with invertible row and column operations.
/// Column operations are mirrored on a change-of-basis matrix whose columns,
/// scaled by `p^{m-v}` for each pivot of valuation `v`, generate the kernel.
#[allow(clippy::needless_range_loop)]
pub fn character_kernel(samples: &[CharacterSample], group: &PrimePowerGroup) -> SubgroupGenerators {
    let spec = group.spec();
    let l = spec.rank();
    let m = group.m();
    let p = group.p();
    if m == 0 {
        return SubgroupGenerators::trivial(spec);
    }
    let q = group.exponent_modulus();
    let mulq = |a: u64, b: u64| ((a as u128 * b as u128) % q as u128) as u64;
    let subq = |a: u64, b: u64| (a + q - b) % q;

    let mut a: Vec<Vec<u64>> =
        samples.iter().map(|s| (0..l).map(|j| mulq(group.weight(j), s.t[j] % q)).collect()).collect();
    // basis[c] is column c of the change-of-basis matrix.
    let mut basis: Vec<Vec<u64>> = (0..l).map(|c| (0..l).map(|r| u64::from(r == c)).collect()).collect();
    let mut row_done = vec![false; a.len()];
    let mut col_valuation: Vec<Option<u32>> = vec![None; l];

    loop {
        let mut best: Option<(usize, usize, u32)> = None;
        for (i, row) in a.iter().enumerate() {
            if row_done[i] {
                continue;
            }
            for (j, &x) in row.iter().enumerate() {
                if x == 0 || col_valuation[j].is_some() {
                    continue;
                }
                let v = valuation(x, p);
                if best.is_none_or(|(_, _, bv)| v < bv) {
                    best = Some((i, j, v));
                }
            }
        }
        let Some((pi, pj, v)) = best else { break };
        let pv = p.pow(v);
        let unit_inv = inv_mod(a[pi][pj] / pv, q).expect("pivot unit is invertible");

        for i in 0..a.len() {
            if i == pi || a[i][pj] == 0 {
                continue;
            }
            let f = mulq(a[i][pj] / pv, unit_inv);
            for j in 0..l {
                let delta = mulq(f, a[pi][j]);
                a[i][j] = subq(a[i][j], delta);
            }
        }
        for j in 0..l {
            if j == pj || a[pi][j] == 0 {
                continue;
            }
            let f = mulq(a[pi][j] / pv, unit_inv);
            for row in a.iter_mut() {
                let delta = mulq(f, row[pj]);
                row[j] = subq(row[j], delta);
            }
            let (src, dst) = if j < pj {
                let (lo, hi) = basis.split_at_mut(pj);
                (&hi[0], &mut lo[j])
            } else {
                let (lo, hi) = basis.split_at_mut(j);
                (&lo[pj], &mut hi[0])
            };
            for (d, &s) in dst.iter_mut().zip(src.iter()) {
                *d = subq(*d, mulq(f, s));
            }
        }
        row_done[pi] = true;
        col_valuation[pj] = Some(v);
    }

    let gens = basis
        .iter()
        .zip(&col_valuation)
        .map(|(col, v)| {
            let scale = v.map_or(1, |v| p.pow(m - v));
            GroupElement(col.iter().zip(spec.moduli()).map(|(&x, &d)| mulq(x, scale) % d).collect())
        })
        .collect();
    SubgroupGenerators { spec, gens }.canonical()
}

/// Whether the samples pin down exactly the planted subgroup.
pub fn spans_full_character_group(
    samples: &[CharacterSample],
    group: &PrimePowerGroup,
    planted: &SubgroupGenerators,
) -> bool {
    character_kernel(samples, group) == *planted
}

/// Every character `t` of `G/K` for a prime-power group.
pub fn character_group(group: &PrimePowerGroup, k: &SubgroupGenerators, cap: usize) -> Result<Vec<Vec<u64>>> {
    let spec = group.spec();
    Ok(spec
        .elements(cap)?
        .into_iter()
        .filter(|t| k.gens.iter().all(|h| group.orthogonal(&t.0, &h.0)))
        .map(|t| t.0)
        .collect())
}

/// All subgroups of `spec`, each in canonical form.
pub fn all_subgroups(spec: &GroupSpec, cap: usize) -> Result<Vec<SubgroupGenerators>> {
    let elements = spec.elements(cap)?;
    let trivial = SubgroupGenerators::trivial(spec.clone());
    let mut seen: HashSet<HermiteBasis> = HashSet::from([trivial.hermite()]);
    let mut queue = VecDeque::from([trivial]);
    let mut out = Vec::new();
    while let Some(s) = queue.pop_front() {
        let h = s.hermite();
        for x in &elements {
            if h.contains(&x.0) {
                continue;
            }
            let mut gens = s.gens.clone();
            gens.push(x.clone());
            let bigger = SubgroupGenerators { spec: spec.clone(), gens }.canonical();
            if seen.insert(bigger.hermite()) {
                if seen.len() > cap {
                    return Err(Error::SizeCap(cap));
                }
                queue.push_back(bigger);
            }
        }
        out.push(s);
    }
    Ok(out)
}

/// One like-prime block of a coprime split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitComponent {
    pub group: PrimePowerGroup,
    /// For each coordinate of `group`: the source coordinate in the original
    /// group and the prime-power modulus taken from it.
    pub slots: Vec<(usize, u64)>,
}

/// `G = G_{p_1} x ... x G_{p_s}` by the Chinese remainder theorem.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoprimeSplit {
    pub original: GroupSpec,
    pub components: Vec<SplitComponent>,
}

/// Splits an arbitrary finite Abelian group into prime-power components,
/// primes ascending, exponents ascending within each component.
pub fn coprime_split(spec: &GroupSpec) -> Result<CoprimeSplit> {
    let mut by_prime: std::collections::BTreeMap<u64, Vec<(u32, usize)>> = Default::default();
    for (j, &d) in spec.moduli().iter().enumerate() {
        if d == 0 {
            return Err(Error::InvalidGroup("modulus 0".into()));
        }
        if d > MAX_SPLIT_MODULUS {
            return Err(Error::InvalidGroup(format!("modulus {d} exceeds 2^31")));
        }
        for (p, e) in factorize(d) {
            by_prime.entry(p).or_default().push((e, j));
        }
    }
    let components = by_prime
        .into_iter()
        .map(|(p, mut parts)| {
            parts.sort();
            let group = PrimePowerGroup::new(p, parts.iter().map(|&(e, _)| e).collect())?;
            let slots = parts.iter().map(|&(e, j)| (j, p.pow(e))).collect();
            Ok(SplitComponent { group, slots })
        })
        .collect::<Result<_>>()?;
    Ok(CoprimeSplit { original: spec.clone(), components })
}

impl CoprimeSplit {
    /// Component coordinates of `x`.
    pub fn project(&self, x: &GroupElement) -> Vec<GroupElement> {
        self.components.iter().map(|c| GroupElement(c.slots.iter().map(|&(j, q)| x.0[j] % q).collect())).collect()
    }

    /// Embeds an element of component `c` into the original group (all other
    /// primes zero).
    pub fn embed(&self, c: usize, y: &GroupElement) -> GroupElement {
        let mut x = vec![0u64; self.original.rank()];
        for (&(j, q), &yk) in self.components[c].slots.iter().zip(&y.0) {
            let d = self.original.moduli()[j];
            let cofactor = d / q;
            // e = 1 mod q, e = 0 mod cofactor.
            let e = (cofactor as u128 * inv_mod(cofactor % q, q).expect("coprime") as u128) % d as u128;
            x[j] = ((x[j] as u128 + e * yk as u128) % d as u128) as u64;
        }
        GroupElement(x)
    }

    /// Inverse of [`project`](Self::project).
    pub fn recombine(&self, parts: &[GroupElement]) -> GroupElement {
        parts.iter().enumerate().fold(self.original.zero(), |acc, (c, y)| self.original.add(&acc, &self.embed(c, y)))
    }

    /// `K = K_{p_1} x ... x K_{p_s}` embedded back into the original group.
    pub fn recombine_subgroups(&self, parts: &[SubgroupGenerators]) -> SubgroupGenerators {
        let gens = parts.iter().enumerate().flat_map(|(c, k)| k.gens.iter().map(move |g| self.embed(c, g))).collect();
        SubgroupGenerators { spec: self.original.clone(), gens }.canonical()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(m: &[u64]) -> GroupSpec {
        GroupSpec::new(m.to_vec()).unwrap()
    }

    fn el(c: &[u64]) -> GroupElement {
        GroupElement(c.to_vec())
    }

    fn sub(m: &[u64], gens: &[&[u64]]) -> SubgroupGenerators {
        SubgroupGenerators::new(spec(m), gens.iter().map(|g| el(g)).collect()).unwrap()
    }

    fn sample(p: u64, exps: &[u32], t: &[u64]) -> CharacterSample {
        CharacterSample::new(PrimePowerGroup::new(p, exps.to_vec()).unwrap(), t.to_vec()).unwrap()
    }

    /// Exhaustive kernel: every h in G checked against every sample.
    fn brute_kernel(samples: &[CharacterSample], g: &PrimePowerGroup) -> BTreeSet<GroupElement> {
        g.spec()
            .elements(1 << 20)
            .unwrap()
            .into_iter()
            .filter(|h| samples.iter().all(|s| g.orthogonal(&s.t, &h.0)))
            .collect()
    }

    #[test]
    fn spec_validation() {
        assert!(GroupSpec::new(vec![0]).is_err());
        assert!(GroupSpec::new(vec![4, 1]).is_ok());
        assert!(PrimePowerGroup::new(4, vec![1]).is_err());
        assert!(PrimePowerGroup::new(2, vec![2, 1]).is_err());
        assert_eq!(spec(&[2, 4, 8]).prime_power_form().unwrap().exponents(), &[1, 2, 3]);
        assert!(spec(&[4, 2]).prime_power_form().is_none());
        assert!(spec(&[2, 3]).prime_power_form().is_none());
    }

    #[test]
    fn group_arithmetic() {
        let g = spec(&[4, 6]);
        let a = el(&[3, 5]);
        let b = el(&[2, 4]);
        assert_eq!(g.add(&a, &b), el(&[1, 3]));
        assert_eq!(g.add(&a, &g.neg(&a)), g.zero());
        assert_eq!(g.scale(&a, 3), el(&[1, 3]));
        assert_eq!(g.element_order(&a), 12);
        for i in 0..24 {
            assert_eq!(g.index_of(&g.element_at(i)), i);
        }
        assert_eq!(g.element(&[-1, 7]).unwrap(), el(&[3, 1]));
    }

    #[test]
    fn enumerate_trivial_generators() {
        let k = SubgroupGenerators::trivial(spec(&[8]));
        assert_eq!(k.enumerate(100).unwrap(), BTreeSet::from([el(&[0])]));
    }

    #[test]
    fn enumerate_diagonal_in_z2_squared() {
        let k = sub(&[2, 2], &[&[1, 1]]);
        assert_eq!(k.enumerate(100).unwrap(), BTreeSet::from([el(&[0, 0]), el(&[1, 1])]));
    }

    #[test]
    fn enumerate_multiples_of_two_in_z8() {
        let k = sub(&[8], &[&[2]]);
        let expect: BTreeSet<_> = [0, 2, 4, 6].iter().map(|&x| el(&[x])).collect();
        assert_eq!(k.enumerate(100).unwrap(), expect);
    }

    #[test]
    fn enumerate_respects_cap() {
        let k = SubgroupGenerators::whole(spec(&[16, 16]));
        assert!(matches!(k.enumerate(100), Err(Error::SizeCap(100))));
    }

    #[test]
    fn equality_examples() {
        assert!(subgroups_equal(&sub(&[2, 2], &[&[1, 1]]), &sub(&[2, 2], &[&[1, 1], &[0, 0]])).unwrap());
        assert!(subgroups_equal(&sub(&[8], &[&[2]]), &sub(&[8], &[&[6]])).unwrap());
        assert!(!subgroups_equal(&sub(&[4], &[&[1]]), &sub(&[4], &[&[2]])).unwrap());
        assert!(subgroups_equal(&sub(&[4], &[&[1]]), &sub(&[8], &[&[1]])).is_err());
    }

    #[test]
    fn hermite_matches_enumeration_exhaustively() {
        // Every pair of generators in a few small groups: HNF equality agrees
        // with enumerated-set equality, and the canonical form is stable.
        for m in [vec![4, 2], vec![2, 2, 2], vec![6, 4], vec![9, 3]] {
            let g = spec(&m);
            let els = g.elements(1000).unwrap();
            let mut by_set: std::collections::HashMap<BTreeSet<GroupElement>, HermiteBasis> = Default::default();
            for a in &els {
                for b in &els {
                    let k = SubgroupGenerators::new(g.clone(), vec![a.clone(), b.clone()]).unwrap();
                    let set = k.enumerate(1000).unwrap();
                    let h = k.hermite();
                    assert_eq!(h.subgroup_order() as usize, set.len());
                    assert_eq!(k.canonical().enumerate(1000).unwrap(), set);
                    assert!(k.canonical().gens.len() <= g.rank());
                    for x in &els {
                        assert_eq!(h.contains(&x.0), set.contains(x));
                    }
                    if let Some(prev) = by_set.insert(set, h.clone()) {
                        assert_eq!(prev, h);
                    }
                }
            }
        }
    }

    #[test]
    fn coset_reps_partition_the_group() {
        let g = spec(&[4, 6]);
        let k = sub(&[4, 6], &[&[2, 3]]);
        let h = k.hermite();
        let reps: BTreeSet<Vec<u64>> = h.coset_reps().collect();
        assert_eq!(reps.len() as u64, h.index());
        for x in g.elements(100).unwrap() {
            let r = h.coset_rep(&x.0);
            assert!(reps.contains(&r));
            let diff = g.add(&x, &g.neg(&el(&r)));
            assert!(k.contains(&diff));
        }
    }

    #[test]
    fn kernel_of_no_samples_is_everything() {
        let g = PrimePowerGroup::new(2, vec![1, 1]).unwrap();
        assert_eq!(character_kernel(&[], &g), SubgroupGenerators::whole(g.spec()));
    }

    #[test]
    fn kernel_of_single_sample() {
        let g = PrimePowerGroup::new(2, vec![1, 1]).unwrap();
        let k = character_kernel(&[sample(2, &[1, 1], &[1, 1])], &g);
        assert_eq!(k, sub(&[2, 2], &[&[1, 1]]));
    }

    #[test]
    fn full_character_group_has_trivial_kernel() {
        let g = PrimePowerGroup::new(2, vec![1, 2]).unwrap();
        let planted = SubgroupGenerators::trivial(g.spec());
        let all: Vec<_> = character_group(&g, &planted, 100)
            .unwrap()
            .into_iter()
            .map(|t| CharacterSample::new(g.clone(), t).unwrap())
            .collect();
        assert_eq!(all.len(), 8);
        assert_eq!(character_kernel(&all, &g), planted);
        assert!(spans_full_character_group(&all, &g, &planted));
    }

    #[test]
    fn simon_samples_span() {
        let g = PrimePowerGroup::new(2, vec![1, 1, 1]).unwrap();
        let planted = sub(&[2, 2, 2], &[&[1, 0, 1]]);
        let samples: Vec<_> = [[0, 1, 0], [1, 0, 1], [1, 1, 1]].iter().map(|t| sample(2, &[1, 1, 1], t)).collect();
        for s in &samples {
            assert!(s.annihilates(&planted));
        }
        assert!(spans_full_character_group(&samples, &g, &planted));
        assert!(!spans_full_character_group(&[sample(2, &[1, 1, 1], &[0, 0, 0])], &g, &planted));
    }

    #[test]
    fn kernel_matches_brute_force_on_mixed_exponents() {
        // Random-ish sample sets over Z_2 x Z_4 x Z_8 and Z_3 x Z_9.
        let cases: Vec<(u64, Vec<u32>, Vec<Vec<u64>>)> = vec![
            (2, vec![1, 2, 3], vec![vec![1, 2, 4]]),
            (2, vec![1, 2, 3], vec![vec![0, 2, 6], vec![1, 1, 0]]),
            (2, vec![1, 2, 3], vec![vec![0, 0, 2]]),
            (2, vec![2, 2], vec![vec![2, 2], vec![0, 2]]),
            (3, vec![1, 2], vec![vec![1, 3]]),
            (3, vec![1, 2], vec![vec![0, 6], vec![2, 0]]),
            (3, vec![2, 2], vec![vec![3, 6]]),
        ];
        for (p, exps, ts) in cases {
            let g = PrimePowerGroup::new(p, exps.clone()).unwrap();
            let samples: Vec<_> = ts.iter().map(|t| sample(p, &exps, t)).collect();
            let k = character_kernel(&samples, &g);
            assert_eq!(k.enumerate(1 << 20).unwrap(), brute_kernel(&samples, &g), "{exps:?} {ts:?}");
        }
    }

    #[test]
    fn coprime_split_z6() {
        let s = coprime_split(&spec(&[6])).unwrap();
        let moduli: Vec<_> = s.components.iter().map(|c| c.group.spec().moduli().to_vec()).collect();
        assert_eq!(moduli, vec![vec![2], vec![3]]);
    }

    #[test]
    fn coprime_split_prime_power_is_unchanged() {
        let s = coprime_split(&spec(&[4, 8])).unwrap();
        assert_eq!(s.components.len(), 1);
        assert_eq!(s.components[0].group.spec().moduli(), &[4, 8]);
    }

    #[test]
    fn coprime_split_z12_z2_is_an_isomorphism() {
        let g = spec(&[12, 2]);
        let s = coprime_split(&g).unwrap();
        assert_eq!(s.components.len(), 2);
        assert_eq!(s.components[0].group.spec().moduli(), &[2, 4]);
        assert_eq!(s.components[1].group.spec().moduli(), &[3]);
        let els = g.elements(100).unwrap();
        let images: BTreeSet<_> = els.iter().map(|x| s.project(x)).collect();
        assert_eq!(images.len(), 24);
        for a in &els {
            assert_eq!(&s.recombine(&s.project(a)), a);
            for b in &els {
                let lhs = s.project(&g.add(a, b));
                let pa = s.project(a);
                let pb = s.project(b);
                let rhs: Vec<_> =
                    s.components.iter().enumerate().map(|(c, comp)| comp.group.spec().add(&pa[c], &pb[c])).collect();
                assert_eq!(lhs, rhs);
            }
        }
    }

    #[test]
    fn coprime_split_rejects_huge_moduli() {
        assert!(coprime_split(&spec(&[(1 << 31) + 1])).is_err());
    }

    #[test]
    fn subgroup_serde_roundtrip() {
        let k = sub(&[4, 2], &[&[2, 0], &[0, 1]]);
        let json = serde_json::to_string(&k).unwrap();
        assert_eq!(json, r#"{"moduli":[4,2],"generators":[[2,0],[0,1]]}"#);
        let back: SubgroupGenerators = serde_json::from_str(&json).unwrap();
        assert_eq!(back, k);
        assert!(serde_json::from_str::<SubgroupGenerators>(r#"{"moduli":[4],"generators":[[5]]}"#).is_err());
    }

    #[test]
    fn subgroup_counts() {
        // Known counts: Z_2^3 has 16 subgroups, Z_4 x Z_2 has 8, Z_2^4 has 67.
        assert_eq!(all_subgroups(&spec(&[2, 2, 2]), 1000).unwrap().len(), 16);
        assert_eq!(all_subgroups(&spec(&[4, 2]), 1000).unwrap().len(), 8);
        assert_eq!(all_subgroups(&spec(&[2, 2, 2, 2]), 1000).unwrap().len(), 67);
        assert_eq!(all_subgroups(&spec(&[12]), 1000).unwrap().len(), 6);
    }
}
