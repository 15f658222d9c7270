//! Finite uniform probability spaces and exact measure bookkeeping.
//!
//! A space of `n` points gives every atom mass `1/n`; all measures are exact
//! rationals, so every inequality the construction certifies is decided
//! without rounding.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Sub};

use num_rational::Ratio;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FiniteSpace {
    n_points: usize,
}

impl FiniteSpace {
    pub fn new(n_points: usize) -> Result<Self> {
        if n_points == 0 {
            return Err(Error::EmptySpace);
        }
        Ok(FiniteSpace { n_points })
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn check_point(&self, point: usize) -> Result<()> {
        if point < self.n_points {
            Ok(())
        } else {
            Err(Error::PointOutOfRange {
                point,
                n_points: self.n_points,
            })
        }
    }

    pub fn check_same(&self, other: &FiniteSpace) -> Result<()> {
        if self.n_points == other.n_points {
            Ok(())
        } else {
            Err(Error::SpaceMismatch {
                left: self.n_points,
                right: other.n_points,
            })
        }
    }

    /// Mass of `count` atoms.
    pub fn mass_of(&self, count: usize) -> RationalMass {
        RationalMass::ratio(count as i128, self.n_points as i128)
    }
}

/// Exact non-negative rational. Measures of sets always land in `[0, 1]`;
/// budgets and bounds built from the same type may exceed 1.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RationalMass(Ratio<i128>);

impl RationalMass {
    pub fn new(numerator: i128, denominator: i128) -> Result<Self> {
        if denominator <= 0 || numerator < 0 {
            return Err(Error::InvalidRational(format!(
                "{numerator}/{denominator}"
            )));
        }
        Ok(RationalMass(Ratio::new(numerator, denominator)))
    }

    /// Panicking constructor for values known to be valid.
    pub fn ratio(numerator: i128, denominator: i128) -> Self {
        Self::new(numerator, denominator).expect("valid non-negative ratio")
    }

    pub fn zero() -> Self {
        RationalMass(Ratio::zero())
    }

    pub fn one() -> Self {
        RationalMass(Ratio::one())
    }

    pub fn integer(value: i128) -> Self {
        Self::ratio(value, 1)
    }

    pub fn numer(&self) -> i128 {
        *self.0.numer()
    }

    pub fn denom(&self) -> i128 {
        *self.0.denom()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    pub fn abs_diff(self, other: RationalMass) -> RationalMass {
        RationalMass((self.0 - other.0).abs())
    }

    pub fn checked_sub(self, other: RationalMass) -> Option<RationalMass> {
        let d = self.0 - other.0;
        (!d.is_negative()).then_some(RationalMass(d))
    }

    /// `self - other`, clamped at zero.
    pub fn saturating_sub(self, other: RationalMass) -> RationalMass {
        self.checked_sub(other).unwrap_or_else(RationalMass::zero)
    }

    pub fn scale(self, factor: u64) -> RationalMass {
        RationalMass(self.0 * Ratio::from_integer(factor as i128))
    }

    pub fn div_int(self, divisor: u64) -> RationalMass {
        assert!(divisor > 0, "division by zero");
        RationalMass(self.0 / Ratio::from_integer(divisor as i128))
    }

    pub fn recip(self) -> Option<RationalMass> {
        (!self.is_zero()).then(|| RationalMass(self.0.recip()))
    }

    /// Parses `"p/q"`, an integer, or a finite decimal such as `"0.2"`, exactly.
    pub fn parse(text: &str) -> Result<Self> {
        let bad = || Error::InvalidRational(text.to_string());
        let t = text.trim();
        if t.is_empty() || t.len() > 64 {
            return Err(bad());
        }
        if let Some((p, q)) = t.split_once('/') {
            let p: i128 = p.trim().parse().map_err(|_| bad())?;
            let q: i128 = q.trim().parse().map_err(|_| bad())?;
            return RationalMass::new(p, q).map_err(|_| bad());
        }
        let (int_part, frac_part) = match t.split_once('.') {
            Some((i, f)) => (i, f),
            None => (t, ""),
        };
        let all_digits = |s: &str| s.bytes().all(|b| b.is_ascii_digit());
        if !all_digits(int_part) || !all_digits(frac_part) || (int_part.is_empty() && frac_part.is_empty()) {
            return Err(bad());
        }
        if frac_part.len() > 30 {
            return Err(bad());
        }
        let int_value: i128 = if int_part.is_empty() {
            0
        } else {
            int_part.parse().map_err(|_| bad())?
        };
        let den = 10i128.pow(frac_part.len() as u32);
        let frac_value: i128 = if frac_part.is_empty() {
            0
        } else {
            frac_part.parse().map_err(|_| bad())?
        };
        let num = int_value
            .checked_mul(den)
            .and_then(|v| v.checked_add(frac_value))
            .ok_or_else(bad)?;
        RationalMass::new(num, den)
    }
}

impl fmt::Display for RationalMass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.denom() == 1 {
            write!(f, "{}", self.numer())
        } else {
            write!(f, "{}/{}", self.numer(), self.denom())
        }
    }
}

impl fmt::Debug for RationalMass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl Add for RationalMass {
    type Output = RationalMass;
    fn add(self, rhs: RationalMass) -> RationalMass {
        RationalMass(self.0 + rhs.0)
    }
}

impl Sub for RationalMass {
    type Output = RationalMass;
    /// Panics if the result would be negative; use `checked_sub` otherwise.
    fn sub(self, rhs: RationalMass) -> RationalMass {
        self.checked_sub(rhs).expect("negative RationalMass")
    }
}

impl Mul for RationalMass {
    type Output = RationalMass;
    fn mul(self, rhs: RationalMass) -> RationalMass {
        RationalMass(self.0 * rhs.0)
    }
}

impl std::iter::Sum for RationalMass {
    fn sum<I: Iterator<Item = RationalMass>>(iter: I) -> RationalMass {
        iter.fold(RationalMass::zero(), |a, b| a + b)
    }
}

#[derive(Serialize, Deserialize)]
struct RationalRepr {
    num: i64,
    den: i64,
    #[serde(default, skip_deserializing)]
    approx: f64,
}

impl Serialize for RationalMass {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::Error as _;
        let num = i64::try_from(self.numer()).map_err(|_| S::Error::custom("numerator overflow"))?;
        let den = i64::try_from(self.denom()).map_err(|_| S::Error::custom("denominator overflow"))?;
        RationalRepr {
            num,
            den,
            approx: self.to_f64(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for RationalMass {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let r = RationalRepr::deserialize(deserializer)?;
        RationalMass::new(r.num as i128, r.den as i128).map_err(D::Error::custom)
    }
}

/// Exact test `|count/total - target| <= tol` using integer arithmetic only.
pub(crate) fn within(count: u64, total: u64, target: RationalMass, tol: RationalMass) -> bool {
    let (tn, td) = (target.numer(), target.denom());
    let (en, ed) = (tol.numer(), tol.denom());
    let lhs = ((count as i128) * td - (total as i128) * tn).abs() * ed;
    let rhs = en * (total as i128) * td;
    lhs <= rhs
}

/// Exact test `|a/an - b/bn| <= tol`.
pub(crate) fn within_pair(a: u64, an: u64, b: u64, bn: u64, tol: RationalMass) -> bool {
    let lhs = ((a as i128) * (bn as i128) - (b as i128) * (an as i128)).abs() * tol.denom();
    let rhs = tol.numer() * (an as i128) * (bn as i128);
    lhs <= rhs
}

/// A measurable set: sorted, de-duplicated point indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PointSet {
    space: FiniteSpace,
    members: Vec<usize>,
}

impl PointSet {
    pub fn new(space: FiniteSpace, members: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut members: Vec<usize> = members.into_iter().collect();
        members.sort_unstable();
        members.dedup();
        if let Some(&last) = members.last() {
            space.check_point(last)?;
        }
        Ok(PointSet { space, members })
    }

    pub fn empty(space: FiniteSpace) -> Self {
        PointSet {
            space,
            members: Vec::new(),
        }
    }

    pub fn full(space: FiniteSpace) -> Self {
        PointSet {
            space,
            members: (0..space.n_points()).collect(),
        }
    }

    pub fn from_mask(space: FiniteSpace, mask: &[bool]) -> Result<Self> {
        if mask.len() != space.n_points() {
            return Err(Error::SpaceMismatch {
                left: space.n_points(),
                right: mask.len(),
            });
        }
        Ok(PointSet {
            space,
            members: mask
                .iter()
                .enumerate()
                .filter_map(|(i, &b)| b.then_some(i))
                .collect(),
        })
    }

    pub(crate) fn from_sorted_unchecked(space: FiniteSpace, members: Vec<usize>) -> Self {
        debug_assert!(members.windows(2).all(|w| w[0] < w[1]));
        PointSet { space, members }
    }

    pub fn space(&self) -> FiniteSpace {
        self.space
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, point: usize) -> bool {
        self.members.binary_search(&point).is_ok()
    }

    pub fn mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.space.n_points()];
        for &m in &self.members {
            mask[m] = true;
        }
        mask
    }

    pub fn measure(&self) -> RationalMass {
        measure(self)
    }

    pub fn complement(&self) -> PointSet {
        let mask = self.mask();
        let members = (0..self.space.n_points()).filter(|&i| !mask[i]).collect();
        PointSet::from_sorted_unchecked(self.space, members)
    }

    pub fn union(&self, other: &PointSet) -> Result<PointSet> {
        self.space.check_same(&other.space)?;
        PointSet::new(self.space, self.members.iter().chain(other.members.iter()).copied())
    }

    pub fn intersection(&self, other: &PointSet) -> Result<PointSet> {
        self.space.check_same(&other.space)?;
        let members = self.members.iter().copied().filter(|&m| other.contains(m)).collect();
        Ok(PointSet::from_sorted_unchecked(self.space, members))
    }

    pub fn difference(&self, other: &PointSet) -> Result<PointSet> {
        self.space.check_same(&other.space)?;
        let members = self.members.iter().copied().filter(|&m| !other.contains(m)).collect();
        Ok(PointSet::from_sorted_unchecked(self.space, members))
    }

    pub fn image(&self, perm: &Permutation) -> Result<PointSet> {
        self.space.check_same(&perm.space())?;
        let mut members: Vec<usize> = self.members.iter().map(|&m| perm.apply(m)).collect();
        members.sort_unstable();
        Ok(PointSet::from_sorted_unchecked(self.space, members))
    }
}

impl Serialize for PointSet {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.members.serialize(serializer)
    }
}

pub fn measure(s: &PointSet) -> RationalMass {
    s.space.mass_of(s.members.len())
}

/// Size of the symmetric difference of two sorted index lists.
pub(crate) fn sym_diff_count(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut count) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            Ordering::Less => {
                count += 1;
                i += 1;
            }
            Ordering::Greater => {
                count += 1;
                j += 1;
            }
            Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    count + (a.len() - i) + (b.len() - j)
}

pub fn sym_diff_mass(a: &PointSet, b: &PointSet) -> Result<RationalMass> {
    a.space.check_same(&b.space)?;
    Ok(a.space.mass_of(sym_diff_count(&a.members, &b.members)))
}

/// A bijection of the points with its inverse cached.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Permutation {
    forward: Vec<usize>,
    inverse: Vec<usize>,
}

impl fmt::Debug for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.forward.len() <= 32 {
            write!(f, "Permutation{:?}", self.forward)
        } else {
            write!(f, "Permutation(n = {})", self.forward.len())
        }
    }
}

impl Permutation {
    pub fn identity(space: FiniteSpace) -> Self {
        let forward: Vec<usize> = (0..space.n_points()).collect();
        Permutation {
            inverse: forward.clone(),
            forward,
        }
    }

    pub fn from_forward(forward: Vec<usize>) -> Result<Self> {
        let n = forward.len();
        if n == 0 {
            return Err(Error::EmptySpace);
        }
        let mut inverse = vec![usize::MAX; n];
        for (x, &y) in forward.iter().enumerate() {
            if y >= n {
                return Err(Error::InvalidPermutation(format!("image {y} out of range at {x}")));
            }
            if inverse[y] != usize::MAX {
                return Err(Error::InvalidPermutation(format!("image {y} repeated")));
            }
            inverse[y] = x;
        }
        Ok(Permutation { forward, inverse })
    }

    pub fn from_fn(space: FiniteSpace, f: impl Fn(usize) -> usize) -> Result<Self> {
        Self::from_forward((0..space.n_points()).map(f).collect())
    }

    pub fn space(&self) -> FiniteSpace {
        FiniteSpace {
            n_points: self.forward.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    #[inline]
    pub fn apply(&self, x: usize) -> usize {
        self.forward[x]
    }

    #[inline]
    pub fn apply_inverse(&self, y: usize) -> usize {
        self.inverse[y]
    }

    pub fn forward(&self) -> &[usize] {
        &self.forward
    }

    pub fn inverse(&self) -> Permutation {
        Permutation {
            forward: self.inverse.clone(),
            inverse: self.forward.clone(),
        }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Permutation) -> Result<Permutation> {
        self.space().check_same(&other.space())?;
        let forward: Vec<usize> = other.forward.iter().map(|&y| self.forward[y]).collect();
        let mut inverse = vec![0; forward.len()];
        for (x, &y) in forward.iter().enumerate() {
            inverse[y] = x;
        }
        Ok(Permutation { forward, inverse })
    }

    /// `r ∘ self ∘ r⁻¹`.
    pub fn conjugate_by(&self, r: &Permutation) -> Result<Permutation> {
        self.space().check_same(&r.space())?;
        let n = self.forward.len();
        let mut forward = vec![0; n];
        let mut inverse = vec![0; n];
        for x in 0..n {
            // y = r(x) is sent to r(self(x)).
            let y = r.forward[x];
            let z = r.forward[self.forward[x]];
            forward[y] = z;
            inverse[z] = y;
        }
        Ok(Permutation { forward, inverse })
    }

    pub fn is_identity(&self) -> bool {
        self.forward.iter().enumerate().all(|(i, &y)| i == y)
    }

    /// Number of points where the two permutations disagree.
    pub fn disagreement(&self, other: &Permutation) -> Result<usize> {
        self.space().check_same(&other.space())?;
        Ok(self
            .forward
            .iter()
            .zip(&other.forward)
            .filter(|(a, b)| a != b)
            .count())
    }
}

/// A map from points to a finite ordered alphabet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labeling {
    space: FiniteSpace,
    alphabet: Vec<String>,
    labels: Vec<u32>,
}

impl Labeling {
    pub fn new(space: FiniteSpace, alphabet: Vec<String>, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != space.n_points() {
            return Err(Error::SpaceMismatch {
                left: space.n_points(),
                right: labels.len(),
            });
        }
        if alphabet.is_empty() {
            return Err(Error::Config("labeling needs a non-empty alphabet".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= alphabet.len()) {
            return Err(Error::Config(format!("label {bad} outside alphabet")));
        }
        Ok(Labeling {
            space,
            alphabet,
            labels,
        })
    }

    /// Labels given as symbols; the alphabet is their sorted set.
    pub fn from_symbols<S: AsRef<str>>(space: FiniteSpace, symbols: &[S]) -> Result<Self> {
        let mut alphabet: Vec<String> = symbols.iter().map(|s| s.as_ref().to_string()).collect();
        alphabet.sort();
        alphabet.dedup();
        let labels = symbols
            .iter()
            .map(|s| alphabet.binary_search_by(|a| a.as_str().cmp(s.as_ref())).unwrap() as u32)
            .collect();
        Labeling::new(space, alphabet, labels)
    }

    pub fn constant(space: FiniteSpace, symbol: &str) -> Self {
        Labeling {
            space,
            alphabet: vec![symbol.to_string()],
            labels: vec![0; space.n_points()],
        }
    }

    pub fn space(&self) -> FiniteSpace {
        self.space
    }

    pub fn alphabet(&self) -> &[String] {
        &self.alphabet
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet.len()
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    #[inline]
    pub fn label(&self, x: usize) -> u32 {
        self.labels[x]
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.alphabet.len()];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }

    pub fn level_set(&self, symbol: u32) -> PointSet {
        let members = (0..self.labels.len()).filter(|&i| self.labels[i] == symbol).collect();
        PointSet::from_sorted_unchecked(self.space, members)
    }

    /// Same labels read through `r`: the new label of `r(x)` is the old label of `x`.
    pub fn transport(&self, r: &Permutation) -> Result<Labeling> {
        self.space.check_same(&r.space())?;
        let mut labels = vec![0; self.labels.len()];
        for (x, &l) in self.labels.iter().enumerate() {
            labels[r.apply(x)] = l;
        }
        Ok(Labeling {
            space: self.space,
            alphabet: self.alphabet.clone(),
            labels,
        })
    }
}

impl Serialize for Labeling {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut s = serializer.serialize_struct("Labeling", 2)?;
        s.serialize_field("alphabet", &self.alphabet)?;
        s.serialize_field("labels", &self.labels)?;
        s.end()
    }
}

/// A probability measure on a finite ordered alphabet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Distribution {
    alphabet: Vec<String>,
    mass: Vec<RationalMass>,
}

impl Distribution {
    pub fn new(alphabet: Vec<String>, mass: Vec<RationalMass>) -> Result<Self> {
        if alphabet.len() != mass.len() || alphabet.is_empty() {
            return Err(Error::Config("alphabet and masses must be non-empty and aligned".into()));
        }
        let total: RationalMass = mass.iter().copied().sum();
        if total != RationalMass::one() {
            return Err(Error::NotAProbability(total.to_string()));
        }
        Ok(Distribution { alphabet, mass })
    }

    pub fn uniform(alphabet: Vec<String>) -> Result<Self> {
        let k = alphabet.len() as i128;
        let mass = vec![RationalMass::ratio(1, k.max(1)); alphabet.len()];
        Distribution::new(alphabet, mass)
    }

    pub fn alphabet(&self) -> &[String] {
        &self.alphabet
    }

    pub fn masses(&self) -> &[RationalMass] {
        &self.mass
    }

    pub fn mass(&self, symbol: usize) -> RationalMass {
        self.mass[symbol]
    }

    pub fn mass_of(&self, name: &str) -> Option<RationalMass> {
        self.alphabet.iter().position(|a| a == name).map(|i| self.mass[i])
    }

    /// Sup-norm distance; alphabets must agree.
    pub fn sup_distance(&self, other: &Distribution) -> Result<RationalMass> {
        if self.alphabet != other.alphabet {
            return Err(Error::AlphabetMismatch);
        }
        Ok(self
            .mass
            .iter()
            .zip(&other.mass)
            .map(|(a, b)| a.abs_diff(*b))
            .max()
            .unwrap_or_else(RationalMass::zero))
    }
}

pub fn pushforward(l: &Labeling) -> Distribution {
    let mass = l.counts().into_iter().map(|c| l.space.mass_of(c)).collect();
    Distribution {
        alphabet: l.alphabet.clone(),
        mass,
    }
}

/// Partition generated by a family of sets: points share a label iff they
/// belong to exactly the same members of the family. Labels are named by
/// their membership bit string and ordered lexicographically by it.
pub fn generated_partition(space: FiniteSpace, sets: &[PointSet]) -> Result<Labeling> {
    for s in sets {
        space.check_same(&s.space)?;
    }
    let words = sets.len().div_ceil(64).max(1);
    let n = space.n_points();
    let mut patterns = vec![0u64; n * words];
    for (j, s) in sets.iter().enumerate() {
        let (w, bit) = (j / 64, 63 - (j % 64));
        for &m in &s.members {
            patterns[m * words + w] |= 1 << bit;
        }
    }
    let mut classes: BTreeMap<&[u64], u32> = BTreeMap::new();
    for x in 0..n {
        classes.entry(&patterns[x * words..(x + 1) * words]).or_insert(0);
    }
    let mut alphabet = Vec::with_capacity(classes.len());
    for (idx, (pattern, id)) in classes.iter_mut().enumerate() {
        *id = idx as u32;
        let name: String = (0..sets.len())
            .map(|j| {
                if pattern[j / 64] >> (63 - (j % 64)) & 1 == 1 {
                    '1'
                } else {
                    '0'
                }
            })
            .collect();
        alphabet.push(name);
    }
    let labels = (0..n)
        .map(|x| classes[&patterns[x * words..(x + 1) * words]])
        .collect();
    Labeling::new(space, alphabet, labels)
}
