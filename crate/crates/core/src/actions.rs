//! Permutation models of abelian factor actions and of their free product.

use petgraph::unionfind::UnionFind;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::groups::{AbelianElement, AbelianGroupSpec, FreeWord, Tile};
use crate::space::{Distribution, FiniteSpace, Labeling, Permutation, PointSet, RationalMass};

/// Cycle structure of one permutation, for constant-time powers.
#[derive(Debug, Clone)]
struct CycleIndex {
    cycle_of: Vec<u32>,
    pos: Vec<u32>,
    start: Vec<u32>,
    order: Vec<u32>,
}

impl CycleIndex {
    fn new(p: &Permutation) -> Self {
        let n = p.len();
        let mut cycle_of = vec![u32::MAX; n];
        let mut pos = vec![0u32; n];
        let mut start = Vec::new();
        let mut order = Vec::with_capacity(n);
        for x in 0..n {
            if cycle_of[x] != u32::MAX {
                continue;
            }
            let c = start.len() as u32;
            start.push(order.len() as u32);
            let mut y = x;
            let mut k = 0u32;
            loop {
                cycle_of[y] = c;
                pos[y] = k;
                order.push(y as u32);
                k += 1;
                y = p.apply(y);
                if y == x {
                    break;
                }
            }
        }
        start.push(order.len() as u32);
        CycleIndex {
            cycle_of,
            pos,
            start,
            order,
        }
    }

    fn cycle_len_of(&self, x: usize) -> usize {
        let c = self.cycle_of[x] as usize;
        (self.start[c + 1] - self.start[c]) as usize
    }

    fn cycle_count(&self) -> usize {
        self.start.len() - 1
    }

    #[inline]
    fn power(&self, x: usize, k: i64) -> usize {
        let c = self.cycle_of[x] as usize;
        let s = self.start[c] as i64;
        let len = self.start[c + 1] as i64 - s;
        let p = (self.pos[x] as i64 + k).rem_euclid(len);
        self.order[(s + p) as usize] as usize
    }

    fn cycles(&self) -> impl Iterator<Item = &[u32]> {
        self.start
            .windows(2)
            .map(move |w| &self.order[w[0] as usize..w[1] as usize])
    }
}

/// An action of `Z^r ⊕ C` given by one permutation per generator.
#[derive(Debug, Clone)]
pub struct FactorAction {
    spec: AbelianGroupSpec,
    space: FiniteSpace,
    generators: Vec<Permutation>,
    cycles: Vec<CycleIndex>,
}

impl PartialEq for FactorAction {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec && self.generators == other.generators
    }
}

impl Eq for FactorAction {}

impl FactorAction {
    /// Validates generator count, shared space, pairwise commutation, and
    /// torsion orders.
    pub fn new(spec: AbelianGroupSpec, space: FiniteSpace, generators: Vec<Permutation>) -> Result<Self> {
        spec.validate()?;
        if generators.len() != spec.generator_count() {
            return Err(Error::GeneratorCount {
                expected: spec.generator_count(),
                got: generators.len(),
            });
        }
        for g in &generators {
            space.check_same(&g.space())?;
        }
        for i in 0..generators.len() {
            for j in i + 1..generators.len() {
                let (p, q) = (&generators[i], &generators[j]);
                if (0..space.n_points()).any(|x| p.apply(q.apply(x)) != q.apply(p.apply(x))) {
                    return Err(Error::NonCommuting(i, j));
                }
            }
        }
        let cycles: Vec<CycleIndex> = generators.iter().map(CycleIndex::new).collect();
        for (j, &c) in spec.torsion.iter().enumerate() {
            let ci = &cycles[spec.rank + j];
            if ci.cycles().any(|cyc| c as usize % cyc.len() != 0) {
                return Err(Error::TorsionOrder {
                    generator: spec.rank + j,
                    modulus: c,
                });
            }
        }
        Ok(FactorAction {
            spec,
            space,
            generators,
            cycles,
        })
    }

    /// `Z` acting through a single permutation.
    pub fn cyclic(p: Permutation) -> Result<Self> {
        let space = p.space();
        FactorAction::new(AbelianGroupSpec::integers(), space, vec![p])
    }

    pub fn spec(&self) -> &AbelianGroupSpec {
        &self.spec
    }

    pub fn space(&self) -> FiniteSpace {
        self.space
    }

    pub fn generators(&self) -> &[Permutation] {
        &self.generators
    }

    pub fn generator(&self, j: usize) -> &Permutation {
        &self.generators[j]
    }

    /// Applies `generator^k` to `x`.
    #[inline]
    pub fn power(&self, generator: usize, x: usize, k: i64) -> usize {
        self.cycles[generator].power(x, k)
    }

    /// Applies `g` without validating it against the spec.
    #[inline]
    pub(crate) fn act_unchecked(&self, g: &AbelianElement, x: usize) -> usize {
        let mut y = x;
        for (j, &k) in g.free.iter().enumerate() {
            if k != 0 {
                y = self.cycles[j].power(y, k);
            }
        }
        for (j, &k) in g.torsion.iter().enumerate() {
            if k != 0 {
                y = self.cycles[self.spec.rank + j].power(y, k as i64);
            }
        }
        y
    }

    /// Applies a vector of generator exponents.
    #[inline]
    pub(crate) fn act_exponents(&self, exps: &[i64], x: usize) -> usize {
        let mut y = x;
        for (j, &k) in exps.iter().enumerate() {
            if k != 0 {
                y = self.cycles[j].power(y, k);
            }
        }
        y
    }

    pub fn cycle_count(&self, generator: usize) -> usize {
        self.cycles[generator].cycle_count()
    }

    pub(crate) fn cycle_len_of(&self, generator: usize, x: usize) -> usize {
        self.cycles[generator].cycle_len_of(x)
    }

    /// `r ∘ g ∘ r⁻¹` for every generator.
    pub fn conjugate(&self, r: &Permutation) -> Result<FactorAction> {
        let generators = self
            .generators
            .iter()
            .map(|g| g.conjugate_by(r))
            .collect::<Result<Vec<_>>>()?;
        let cycles = generators.iter().map(CycleIndex::new).collect();
        Ok(FactorAction {
            spec: self.spec.clone(),
            space: self.space,
            generators,
            cycles,
        })
    }

    pub fn is_transitive(&self) -> bool {
        orbit_decomposition(self).orbits.len() == 1
    }
}

pub fn act(f: &FactorAction, g: &AbelianElement, x: usize) -> Result<usize> {
    g.check(&f.spec)?;
    f.space.check_point(x)?;
    Ok(f.act_unchecked(g, x))
}

/// A tuple of factor actions on one space, read as an action of the free
/// product of the factor groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FreeProductSystem {
    space: FiniteSpace,
    factors: Vec<FactorAction>,
}

impl FreeProductSystem {
    pub fn new(space: FiniteSpace, factors: Vec<FactorAction>) -> Result<Self> {
        for f in &factors {
            space.check_same(&f.space)?;
        }
        Ok(FreeProductSystem { space, factors })
    }

    pub fn space(&self) -> FiniteSpace {
        self.space
    }

    pub fn factors(&self) -> &[FactorAction] {
        &self.factors
    }

    pub fn factor(&self, i: usize) -> Result<&FactorAction> {
        self.factors.get(i).ok_or(Error::FactorIndexOutOfRange {
            index: i,
            count: self.factors.len(),
        })
    }

    pub fn factor_count(&self) -> usize {
        self.factors.len()
    }

    pub fn specs(&self) -> Vec<AbelianGroupSpec> {
        self.factors.iter().map(|f| f.spec.clone()).collect()
    }

    pub fn conjugate(&self, r: &Permutation) -> Result<FreeProductSystem> {
        let factors = self.factors.iter().map(|f| f.conjugate(r)).collect::<Result<_>>()?;
        Ok(FreeProductSystem {
            space: self.space,
            factors,
        })
    }

    fn check_word(&self, w: &FreeWord) -> Result<()> {
        for (i, g) in w.letters() {
            self.factor(*i)?;
            g.check(&self.factors[*i].spec)?;
        }
        Ok(())
    }

    /// Image of `A` under the word: the set `{w·y : y ∈ A}`.
    pub fn word_image(&self, w: &FreeWord, a: &PointSet) -> Result<PointSet> {
        self.check_word(w)?;
        self.space.check_same(&a.space())?;
        let mut members: Vec<usize> = a.members().iter().map(|&y| self.act_word_unchecked(w, y)).collect();
        members.sort_unstable();
        Ok(PointSet::from_sorted_unchecked(self.space, members))
    }

    pub(crate) fn act_word_unchecked(&self, w: &FreeWord, x: usize) -> usize {
        w.letters()
            .iter()
            .rev()
            .fold(x, |y, (i, g)| self.factors[*i].act_unchecked(g, y))
    }
}

/// Letters act right to left.
pub fn act_word(s: &FreeProductSystem, w: &FreeWord, x: usize) -> Result<usize> {
    s.check_word(w)?;
    s.space.check_point(x)?;
    Ok(s.act_word_unchecked(w, x))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OrbitDecomposition {
    /// `None` for the decomposition of a whole system.
    pub factor_index: Option<usize>,
    pub orbit_id: Vec<usize>,
    /// Sorted point lists, ordered by smallest member.
    pub orbits: Vec<Vec<usize>>,
}

impl OrbitDecomposition {
    fn from_generators<'a>(n: usize, factor_index: Option<usize>, gens: impl Iterator<Item = &'a Permutation>) -> Self {
        let mut uf = UnionFind::<usize>::new(n);
        for p in gens {
            for x in 0..n {
                uf.union(x, p.apply(x));
            }
        }
        let mut root_to_orbit = vec![usize::MAX; n];
        let mut orbit_id = vec![0; n];
        let mut orbits: Vec<Vec<usize>> = Vec::new();
        for x in 0..n {
            let r = uf.find_mut(x);
            if root_to_orbit[r] == usize::MAX {
                root_to_orbit[r] = orbits.len();
                orbits.push(Vec::new());
            }
            orbit_id[x] = root_to_orbit[r];
            orbits[root_to_orbit[r]].push(x);
        }
        OrbitDecomposition {
            factor_index,
            orbit_id,
            orbits,
        }
    }

    pub fn orbit_of(&self, x: usize) -> &[usize] {
        &self.orbits[self.orbit_id[x]]
    }

    pub fn len(&self) -> usize {
        self.orbits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.orbits.is_empty()
    }

    pub fn min_orbit_len(&self) -> usize {
        self.orbits.iter().map(Vec::len).min().unwrap_or(0)
    }
}

pub fn orbit_decomposition(f: &FactorAction) -> OrbitDecomposition {
    OrbitDecomposition::from_generators(f.space.n_points(), None, f.generators.iter())
}

pub fn factor_orbits(s: &FreeProductSystem, i: usize) -> Result<OrbitDecomposition> {
    let mut d = orbit_decomposition(s.factor(i)?);
    d.factor_index = Some(i);
    Ok(d)
}

/// Orbits of the whole free-product action.
pub fn system_orbits(s: &FreeProductSystem) -> OrbitDecomposition {
    OrbitDecomposition::from_generators(
        s.space.n_points(),
        None,
        s.factors.iter().flat_map(|f| f.generators.iter()),
    )
}

/// Label counts on one orbit.
pub(crate) fn orbit_label_counts(orbit: &[usize], l: &Labeling) -> Vec<usize> {
    let mut counts = vec![0; l.alphabet_size()];
    for &y in orbit {
        counts[l.label(y) as usize] += 1;
    }
    counts
}

/// Empirical label distribution on the orbit of `x`.
pub fn orbit_pushforward(d: &OrbitDecomposition, l: &Labeling, x: usize) -> Result<Distribution> {
    l.space().check_point(x)?;
    if d.orbit_id.len() != l.space().n_points() {
        return Err(Error::SpaceMismatch {
            left: d.orbit_id.len(),
            right: l.space().n_points(),
        });
    }
    let orbit = d.orbit_of(x);
    let mass = orbit_label_counts(orbit, l)
        .into_iter()
        .map(|c| RationalMass::ratio(c as i128, orbit.len() as i128))
        .collect();
    Distribution::new(l.alphabet().to_vec(), mass)
}

/// Fraction of `g ∈ elements` with `g·x ∈ indicator`.
pub fn average(f: &FactorAction, elements: &[AbelianElement], indicator: &PointSet, x: usize) -> Result<RationalMass> {
    if elements.is_empty() {
        return Err(Error::EmptyElementSet);
    }
    f.space.check_same(&indicator.space())?;
    f.space.check_point(x)?;
    let mut hits = 0usize;
    for g in elements {
        g.check(&f.spec)?;
        if indicator.contains(f.act_unchecked(g, x)) {
            hits += 1;
        }
    }
    Ok(RationalMass::ratio(hits as i128, elements.len() as i128))
}

/// Window counts `|{t ∈ T : t·x ∈ M}|` for a fixed family of masks `M`.
///
/// Prefix sums along the cycles of the first generator are built once, so
/// each count costs one lookup per offset of the remaining generators.
pub struct WindowCounter<'a> {
    f: &'a FactorAction,
    /// Per mask: doubled prefix sums, cycle `c` at `2·start[c] + c`.
    prefix: Vec<Vec<u32>>,
}

impl<'a> WindowCounter<'a> {
    pub fn new(f: &'a FactorAction, masks: &[Vec<bool>]) -> Result<Self> {
        let n = f.space.n_points();
        if let Some(m) = masks.iter().find(|m| m.len() != n) {
            return Err(Error::SpaceMismatch {
                left: n,
                right: m.len(),
            });
        }
        let mut prefix = Vec::with_capacity(masks.len());
        if let Some(ci) = f.cycles.first() {
            for mask in masks {
                let mut p = Vec::with_capacity(2 * n + ci.cycle_count());
                for cyc in ci.cycles() {
                    let len = cyc.len();
                    let mut acc = 0u32;
                    p.push(0);
                    for k in 0..2 * len {
                        acc += mask[cyc[k % len] as usize] as u32;
                        p.push(acc);
                    }
                }
                prefix.push(p);
            }
        } else {
            prefix = masks.iter().map(|m| m.iter().map(|&b| b as u32).collect()).collect();
        }
        Ok(WindowCounter { f, prefix })
    }

    pub fn mask_count(&self) -> usize {
        self.prefix.len()
    }

    /// Count over `k ∈ [lo, lo + width)` of `mask[p_0^k y]`.
    #[inline]
    fn line(&self, mask: usize, y: usize, lo: i64, width: usize) -> u32 {
        let ci = &self.f.cycles[0];
        let c = ci.cycle_of[y] as usize;
        let s = ci.start[c] as usize;
        let len = ci.start[c + 1] as usize - s;
        let base = 2 * s + c;
        let p = &self.prefix[mask];
        let total = p[base + len];
        let from = (ci.pos[y] as i64 + lo).rem_euclid(len as i64) as usize;
        let (full, rem) = (width / len, width % len);
        full as u32 * total + p[base + from + rem] - p[base + from]
    }

    /// Counts for every mask at the point `x`, written into `out`.
    pub fn counts_at(&self, tile: &Tile, x: usize, out: &mut [u32]) {
        out.iter_mut().for_each(|o| *o = 0);
        let ranges = tile.ranges();
        if ranges.is_empty() {
            for (m, o) in out.iter_mut().enumerate() {
                *o = self.prefix[m][x];
            }
            return;
        }
        let (lo0, hi0) = ranges[0];
        let width = (hi0 - lo0 + 1) as usize;
        let rest = &ranges[1..];
        let mut exps = vec![0i64; ranges.len()];
        for (k, r) in rest.iter().enumerate() {
            exps[k + 1] = r.0;
        }
        loop {
            let y = self.f.act_exponents(&exps, x);
            for (m, o) in out.iter_mut().enumerate() {
                *o += self.line(m, y, lo0, width);
            }
            let mut k = rest.len();
            loop {
                if k == 0 {
                    return;
                }
                if exps[k] < rest[k - 1].1 {
                    exps[k] += 1;
                    break;
                }
                exps[k] = rest[k - 1].0;
                k -= 1;
            }
        }
    }
}

/// For every `x`, the number of `t ∈ tile` with `mask[t·x]`.
pub fn tile_window_counts(f: &FactorAction, tile: &Tile, mask: &[bool]) -> Result<Vec<u32>> {
    if tile.spec() != &f.spec {
        return Err(Error::SpecMismatch("tile and action specs differ".into()));
    }
    let wc = WindowCounter::new(f, &[mask.to_vec()])?;
    let mut out = [0u32];
    Ok((0..f.space.n_points())
        .map(|x| {
            wc.counts_at(tile, x, &mut out);
            out[0]
        })
        .collect())
}

/// `max_{w, A} μ(w^a A △ w^b A)`.
pub fn weak_discrepancy(
    a: &FreeProductSystem,
    b: &FreeProductSystem,
    words: &[FreeWord],
    sets: &[PointSet],
) -> Result<RationalMass> {
    a.space.check_same(&b.space)?;
    if a.factor_count() != b.factor_count() {
        return Err(Error::FactorCountMismatch(format!(
            "{} vs {} factors",
            a.factor_count(),
            b.factor_count()
        )));
    }
    if words.is_empty() || sets.is_empty() {
        log::warn!("weak_discrepancy called with no words or no sets");
        return Ok(RationalMass::zero());
    }
    let mut worst = RationalMass::zero();
    for w in words {
        a.check_word(w)?;
        b.check_word(w)?;
        for s in sets {
            a.space.check_same(&s.space())?;
            let d = image_sym_diff_count(a, b, w, s);
            worst = worst.max(a.space.mass_of(d));
        }
    }
    Ok(worst)
}

/// `|w^a A △ w^b A|`.
pub(crate) fn image_sym_diff_count(a: &FreeProductSystem, b: &FreeProductSystem, w: &FreeWord, s: &PointSet) -> usize {
    let n = a.space.n_points();
    let mut mark = vec![0u8; n];
    for &y in s.members() {
        mark[a.act_word_unchecked(w, y)] ^= 1;
        mark[b.act_word_unchecked(w, y)] ^= 2;
    }
    mark.iter().filter(|&&m| m == 1 || m == 2).count()
}

/// Mass of points fixed by some window element. The stabilizer of an
/// abelian action is constant along orbits, so one point per orbit is tested.
pub fn freeness_defect(f: &FactorAction, window: &[AbelianElement]) -> Result<RationalMass> {
    for g in window {
        g.check(&f.spec)?;
        if g.is_identity() {
            return Err(Error::IdentityInWindow);
        }
    }
    let d = orbit_decomposition(f);
    let fixed: usize = d
        .orbits
        .iter()
        .filter(|o| window.iter().any(|g| f.act_unchecked(g, o[0]) == o[0]))
        .map(Vec::len)
        .sum();
    Ok(f.space.mass_of(fixed))
}

/// Mass of points fixed by some window word, checked point by point.
pub fn system_freeness_defect(s: &FreeProductSystem, window: &[FreeWord]) -> Result<RationalMass> {
    for w in window {
        s.check_word(w)?;
        if w.is_identity() {
            return Err(Error::IdentityInWindow);
        }
    }
    let n = s.space.n_points();
    let fixed = (0..n)
        .filter(|&x| window.iter().any(|w| s.act_word_unchecked(w, x) == x))
        .count();
    Ok(s.space.mass_of(fixed))
}

/// Freeness on the difference window `T - T ∖ {e}`: mass of points `x`
/// where `t ↦ t·x` fails to be injective on the tile.
pub fn tile_freeness_defect(f: &FactorAction, tile: &Tile) -> Result<RationalMass> {
    if tile.spec() != &f.spec {
        return Err(Error::SpecMismatch("tile and action specs differ".into()));
    }
    let elems = tile.elements();
    let d = orbit_decomposition(f);
    let mut seen = vec![false; f.space.n_points()];
    let mut bad = 0usize;
    for o in &d.orbits {
        if o.len() < elems.len() {
            bad += o.len();
            continue;
        }
        let mut touched = Vec::with_capacity(elems.len());
        let mut injective = true;
        for t in &elems {
            let y = f.act_unchecked(t, o[0]);
            if seen[y] {
                injective = false;
                break;
            }
            seen[y] = true;
            touched.push(y);
        }
        for y in touched {
            seen[y] = false;
        }
        if !injective {
            bad += o.len();
        }
    }
    Ok(f.space.mass_of(bad))
}

/// Orbit mean of the indicator, per point.
pub fn orbit_average_function(f: &FactorAction, indicator: &PointSet) -> Result<Vec<RationalMass>> {
    f.space.check_same(&indicator.space())?;
    let d = orbit_decomposition(f);
    let mask = indicator.mask();
    let means: Vec<RationalMass> = d
        .orbits
        .iter()
        .map(|o| RationalMass::ratio(o.iter().filter(|&&y| mask[y]).count() as i128, o.len() as i128))
        .collect();
    Ok(d.orbit_id.iter().map(|&id| means[id]).collect())
}

/// Plain serialized form of a factor: spec plus forward arrays.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorRepr {
    pub spec: AbelianGroupSpec,
    pub generators: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemRepr {
    pub n_points: usize,
    pub factors: Vec<FactorRepr>,
}

impl FreeProductSystem {
    pub fn to_repr(&self) -> SystemRepr {
        SystemRepr {
            n_points: self.space.n_points(),
            factors: self
                .factors
                .iter()
                .map(|f| FactorRepr {
                    spec: f.spec.clone(),
                    generators: f.generators.iter().map(|g| g.forward().to_vec()).collect(),
                })
                .collect(),
        }
    }

    pub fn from_repr(repr: &SystemRepr) -> Result<Self> {
        let space = FiniteSpace::new(repr.n_points)?;
        let factors = repr
            .factors
            .iter()
            .map(|f| {
                let gens = f
                    .generators
                    .iter()
                    .map(|g| {
                        let p = Permutation::from_forward(g.clone())?;
                        space.check_same(&p.space())?;
                        Ok(p)
                    })
                    .collect::<Result<Vec<_>>>()?;
                FactorAction::new(f.spec.clone(), space, gens)
            })
            .collect::<Result<Vec<_>>>()?;
        FreeProductSystem::new(space, factors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groups::{folner_tile, DEFAULT_TILE_CAP};
    use crate::space::pushforward;
    use proptest::prelude::*;

    fn sp(n: usize) -> FiniteSpace {
        FiniteSpace::new(n).unwrap()
    }

    fn rot(n: usize, a: usize) -> FactorAction {
        FactorAction::cyclic(Permutation::from_fn(sp(n), |x| (x + a) % n).unwrap()).unwrap()
    }

    fn set(n: usize, m: &[usize]) -> PointSet {
        PointSet::new(sp(n), m.iter().copied()).unwrap()
    }

    fn torus() -> FactorAction {
        // (Z/4)^2, point (i, j) stored at 4i + j
        let s = sp(16);
        let a = Permutation::from_fn(s, |x| ((x / 4 + 1) % 4) * 4 + x % 4).unwrap();
        let b = Permutation::from_fn(s, |x| (x / 4) * 4 + (x % 4 + 1) % 4).unwrap();
        FactorAction::new(AbelianGroupSpec::new(2, vec![]).unwrap(), s, vec![a, b]).unwrap()
    }

    #[test]
    fn act_examples() {
        let f = rot(12, 1);
        assert_eq!(act(&f, &AbelianElement::integer(0), 7).unwrap(), 7);
        assert_eq!(act(&f, &AbelianElement::integer(5), 9).unwrap(), 2);
        assert_eq!(act(&f, &AbelianElement::integer(-13), 0).unwrap(), 11);
        let t = torus();
        let g = AbelianElement::new(t.spec(), vec![1, 2], vec![]).unwrap();
        assert_eq!(act(&t, &g, 0).unwrap(), 4 + 2);
        assert!(act(&t, &AbelianElement::integer(1), 0).is_err());
    }

    #[test]
    fn validation_rejects_bad_generators() {
        let s = sp(3);
        let a = Permutation::from_forward(vec![1, 0, 2]).unwrap();
        let b = Permutation::from_forward(vec![0, 2, 1]).unwrap();
        let z2 = AbelianGroupSpec::new(2, vec![]).unwrap();
        assert_eq!(
            FactorAction::new(z2, s, vec![a.clone(), b]),
            Err(Error::NonCommuting(0, 1))
        );
        let c2 = AbelianGroupSpec::new(0, vec![2]).unwrap();
        let three = Permutation::from_forward(vec![1, 2, 0]).unwrap();
        assert!(matches!(
            FactorAction::new(c2.clone(), s, vec![three]),
            Err(Error::TorsionOrder { .. })
        ));
        assert!(FactorAction::new(c2, s, vec![a]).is_ok());
    }

    #[test]
    fn word_action() {
        let s = FreeProductSystem::new(sp(10), vec![rot(10, 1), rot(10, 3)]).unwrap();
        let specs = s.specs();
        let w = FreeWord::from_letters(
            &specs,
            vec![(0, AbelianElement::integer(2)), (1, AbelianElement::integer(1))],
        )
        .unwrap();
        assert_eq!(act_word(&s, &FreeWord::identity(), 4).unwrap(), 4);
        assert_eq!(act_word(&s, &w, 0).unwrap(), 5);
        let inv = w.invert(&specs).unwrap();
        for x in 0..10 {
            assert_eq!(act_word(&s, &inv, act_word(&s, &w, x).unwrap()).unwrap(), x);
        }
        let bad = FreeWord::from_letters(&vec![AbelianGroupSpec::integers(); 3], vec![(2, AbelianElement::integer(1))]).unwrap();
        assert!(act_word(&s, &bad, 0).is_err());
    }

    #[test]
    fn orbit_examples() {
        assert_eq!(orbit_decomposition(&rot(6, 1)).len(), 1);
        let d = orbit_decomposition(&rot(6, 2));
        assert_eq!(d.orbits, vec![vec![0, 2, 4], vec![1, 3, 5]]);
        let id = FactorAction::cyclic(Permutation::identity(sp(5))).unwrap();
        assert_eq!(orbit_decomposition(&id).len(), 5);
    }

    #[test]
    fn orbit_pushforward_examples() {
        let d = orbit_decomposition(&rot(6, 2));
        let l = Labeling::from_symbols(sp(6), &["a", "x", "a", "x", "b", "x"]).unwrap();
        let p = orbit_pushforward(&d, &l, 0).unwrap();
        assert_eq!(p.mass_of("a"), Some(RationalMass::ratio(2, 3)));
        assert_eq!(p.mass_of("b"), Some(RationalMass::ratio(1, 3)));
        let id = FactorAction::cyclic(Permutation::identity(sp(6))).unwrap();
        let p = orbit_pushforward(&orbit_decomposition(&id), &l, 4).unwrap();
        assert_eq!(p.mass_of("b"), Some(RationalMass::one()));
    }

    #[test]
    fn average_examples() {
        let f = rot(12, 1);
        let ind = set(12, &[0, 1]);
        let elems: Vec<AbelianElement> = (0..3).map(AbelianElement::integer).collect();
        assert_eq!(average(&f, &elems, &ind, 0).unwrap(), RationalMass::ratio(2, 3));
        let all: Vec<AbelianElement> = (0..12).map(AbelianElement::integer).collect();
        assert_eq!(average(&f, &all, &ind, 5).unwrap(), ind.measure());
        assert_eq!(average(&f, &elems, &PointSet::full(sp(12)), 3).unwrap(), RationalMass::one());
        assert_eq!(average(&f, &[], &ind, 0), Err(Error::EmptyElementSet));
    }

    #[test]
    fn weak_discrepancy_examples() {
        let a = FreeProductSystem::new(sp(4), vec![rot(4, 1)]).unwrap();
        let b = FreeProductSystem::new(sp(4), vec![rot(4, 2)]).unwrap();
        let specs = a.specs();
        let w = FreeWord::letter(&specs, 0, AbelianElement::integer(1)).unwrap();
        let s = set(4, &[0, 1]);
        assert_eq!(weak_discrepancy(&a, &b, &[w.clone()], &[s.clone()]).unwrap(), RationalMass::ratio(1, 2));
        assert!(weak_discrepancy(&a, &a, &[w], &[s.clone()]).unwrap().is_zero());
        assert!(weak_discrepancy(&a, &b, &[FreeWord::identity()], &[s.clone()]).unwrap().is_zero());
        assert!(weak_discrepancy(&a, &b, &[], &[s]).unwrap().is_zero());
    }

    #[test]
    fn freeness_examples() {
        let window: Vec<AbelianElement> = [-2, -1, 1, 2].into_iter().map(AbelianElement::integer).collect();
        assert!(freeness_defect(&rot(7, 1), &window).unwrap().is_zero());
        let id = FactorAction::cyclic(Permutation::identity(sp(5))).unwrap();
        assert_eq!(freeness_defect(&id, &window[..1]).unwrap(), RationalMass::one());
        assert_eq!(
            freeness_defect(&id, &[AbelianElement::integer(0)]),
            Err(Error::IdentityInWindow)
        );

        // Z^2 on Z/12 by (+3, +4)
        let s = sp(12);
        let z2 = AbelianGroupSpec::new(2, vec![]).unwrap();
        let f = FactorAction::new(
            z2.clone(),
            s,
            vec![
                Permutation::from_fn(s, |x| (x + 3) % 12).unwrap(),
                Permutation::from_fn(s, |x| (x + 4) % 12).unwrap(),
            ],
        )
        .unwrap();
        let mut window = Vec::new();
        for i in -1..=1 {
            for j in -1..=1 {
                if (i, j) != (0, 0) {
                    window.push(AbelianElement::new(&z2, vec![i, j], vec![]).unwrap());
                }
            }
        }
        assert_eq!(window.len(), 8);
        assert!(freeness_defect(&f, &window).unwrap().is_zero());
        let sys = FreeProductSystem::new(s, vec![f]).unwrap();
        let specs = sys.specs();
        let words: Vec<FreeWord> = window.iter().map(|g| FreeWord::letter(&specs, 0, g.clone()).unwrap()).collect();
        assert!(system_freeness_defect(&sys, &words).unwrap().is_zero());
    }

    #[test]
    fn tile_freeness_matches_window() {
        let f = rot(12, 1);
        let ok = folner_tile(f.spec(), 5, DEFAULT_TILE_CAP).unwrap();
        assert!(tile_freeness_defect(&f, &ok).unwrap().is_zero());
        let too_big = folner_tile(f.spec(), 6, DEFAULT_TILE_CAP).unwrap();
        assert_eq!(tile_freeness_defect(&f, &too_big).unwrap(), RationalMass::one());
    }

    #[test]
    fn orbit_average_examples() {
        let f = rot(6, 2);
        let v = orbit_average_function(&f, &set(6, &[0, 1, 3])).unwrap();
        assert_eq!(v[0], RationalMass::ratio(1, 3));
        assert_eq!(v[4], RationalMass::ratio(1, 3));
        assert_eq!(v[1], RationalMass::ratio(2, 3));
        let v = orbit_average_function(&rot(6, 1), &set(6, &[0, 1, 3])).unwrap();
        assert!(v.iter().all(|&m| m == RationalMass::ratio(1, 2)));
        let v = orbit_average_function(&f, &PointSet::empty(sp(6))).unwrap();
        assert!(v.iter().all(RationalMass::is_zero));
    }

    #[test]
    fn window_counts_match_direct_average() {
        let t = torus();
        let mask: Vec<bool> = (0..16).map(|x| x % 3 == 0 || x == 7).collect();
        let ind = PointSet::from_mask(sp(16), &mask).unwrap();
        for n in 1..=3 {
            let tile = folner_tile(t.spec(), n, DEFAULT_TILE_CAP).unwrap();
            let counts = tile_window_counts(&t, &tile, &mask).unwrap();
            let elems = tile.elements();
            for x in 0..16 {
                let avg = average(&t, &elems, &ind, x).unwrap();
                assert_eq!(RationalMass::ratio(counts[x] as i128, elems.len() as i128), avg);
            }
        }
    }

    #[test]
    fn mean_ergodic_trend() {
        let n = 64;
        let f = rot(n, 1);
        let c = PointSet::new(sp(n), (0..n).filter(|x| x % 5 < 2 || x % 7 == 0)).unwrap();
        let target = c.measure();
        let mut prev: Option<RationalMass> = None;
        for m in [1u64, 2, 4, 8, 16] {
            let tile = folner_tile(f.spec(), m, DEFAULT_TILE_CAP).unwrap();
            let elems = tile.elements();
            let worst = (0..n)
                .map(|x| average(&f, &elems, &c, x).unwrap().abs_diff(target))
                .max()
                .unwrap();
            if let Some(p) = prev {
                assert!(worst <= p, "m = {m}: {worst} > {p}");
            }
            prev = Some(worst);
        }
        let full: Vec<AbelianElement> = (0..n as i64).map(AbelianElement::integer).collect();
        assert!((0..n).all(|x| average(&f, &full, &c, x).unwrap() == target));
    }

    #[test]
    fn repr_round_trip() {
        let s = FreeProductSystem::new(sp(16), vec![torus(), rot(16, 3)]).unwrap();
        let json = serde_json::to_string(&s.to_repr()).unwrap();
        let back: SystemRepr = serde_json::from_str(&json).unwrap();
        assert_eq!(FreeProductSystem::from_repr(&back).unwrap(), s);
    }

    fn arb_perm(n: usize) -> impl Strategy<Value = Permutation> {
        Just((0..n).collect::<Vec<usize>>())
            .prop_shuffle()
            .prop_map(|v| Permutation::from_forward(v).unwrap())
    }

    proptest! {
        #[test]
        fn commuting_generators_commute(a in 1usize..20, b in 1usize..20) {
            let s = sp(20);
            let p = Permutation::from_fn(s, |x| (x + a) % 20).unwrap();
            let q = Permutation::from_fn(s, |x| (x + b) % 20).unwrap();
            let f = FactorAction::new(AbelianGroupSpec::new(2, vec![]).unwrap(), s, vec![p, q]).unwrap();
            for x in 0..20 {
                prop_assert_eq!(f.power(0, f.power(1, x, 1), 1), f.power(1, f.power(0, x, 1), 1));
            }
        }

        #[test]
        fn disintegration(p in arb_perm(24), labels in prop::collection::vec(0u32..3, 24)) {
            let f = FactorAction::cyclic(p).unwrap();
            let d = orbit_decomposition(&f);
            let l = Labeling::new(sp(24), vec!["a".into(), "b".into(), "c".into()], labels).unwrap();
            let global = pushforward(&l);
            for a in 0..3 {
                let integrated: RationalMass = (0..24)
                    .map(|x| orbit_pushforward(&d, &l, x).unwrap().mass(a).div_int(24))
                    .sum();
                prop_assert_eq!(integrated, global.mass(a));
            }
        }

        #[test]
        fn composition_inequality(
            pa in arb_perm(16), pb in arb_perm(16), qa in arb_perm(16), qb in arb_perm(16),
            k1 in -3i64..=3, k2 in -3i64..=3, mask in prop::collection::vec(any::<bool>(), 16),
        ) {
            let s = sp(16);
            let alpha = FreeProductSystem::new(s, vec![FactorAction::cyclic(pa).unwrap(), FactorAction::cyclic(qa).unwrap()]).unwrap();
            let beta = FreeProductSystem::new(s, vec![FactorAction::cyclic(pb).unwrap(), FactorAction::cyclic(qb).unwrap()]).unwrap();
            let specs = alpha.specs();
            let g1 = FreeWord::letter(&specs, 0, AbelianElement::integer(k1)).unwrap();
            let g2 = FreeWord::letter(&specs, 1, AbelianElement::integer(k2)).unwrap();
            let g21 = g2.multiply(&g1, &specs).unwrap();
            let a = PointSet::from_mask(s, &mask).unwrap();
            let lhs = weak_discrepancy(&alpha, &beta, &[g21], &[a.clone()]).unwrap();
            let g1b = beta.word_image(&g1, &a).unwrap();
            let r1 = weak_discrepancy(&alpha, &beta, &[g1], &[a]).unwrap();
            let r2 = weak_discrepancy(&alpha, &beta, &[g2], &[g1b]).unwrap();
            prop_assert!(lhs <= r1 + r2);
        }
    }
}
