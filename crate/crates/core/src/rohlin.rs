//! Tiling bases and Rohlin towers for box tiles.

use serde::Serialize;

use crate::actions::{orbit_decomposition, FactorAction};
use crate::error::{Error, Result};
use crate::groups::Tile;
use crate::space::{FiniteSpace, PointSet, RationalMass};

/// A base `B` and tile `T` whose levels `t·B` are pairwise disjoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Tower {
    pub factor_index: Option<usize>,
    pub tile: Tile,
    pub base: PointSet,
    pub coverage: RationalMass,
}

impl Tower {
    /// The level `t·B` for the `k`-th tile element in canonical order.
    pub fn level(&self, f: &FactorAction, k: usize) -> PointSet {
        let t = &self.tile.elements()[k];
        let mut members: Vec<usize> = self.base.members().iter().map(|&b| f.act_unchecked(t, b)).collect();
        members.sort_unstable();
        PointSet::from_sorted_unchecked(self.base.space(), members)
    }

    pub fn map(&self, f: &FactorAction) -> Result<TowerMap> {
        TowerMap::new(f, &self.tile, &self.base)
    }
}

/// For each point of the tower: its level (tile index) and base point.
#[derive(Debug, Clone)]
pub struct TowerMap {
    level: Vec<u32>,
    base: Vec<u32>,
}

impl TowerMap {
    pub const OUTSIDE: u32 = u32::MAX;

    pub fn new(f: &FactorAction, tile: &Tile, base: &PointSet) -> Result<Self> {
        let n = f.space().n_points();
        let mut level = vec![Self::OUTSIDE; n];
        let mut basept = vec![Self::OUTSIDE; n];
        for (k, t) in tile.elements().iter().enumerate() {
            for &b in base.members() {
                let y = f.act_unchecked(t, b);
                if level[y] != Self::OUTSIDE {
                    return Err(Error::LevelOverlap(y));
                }
                level[y] = k as u32;
                basept[y] = b as u32;
            }
        }
        Ok(TowerMap { level, base: basept })
    }

    pub fn level_of(&self, x: usize) -> Option<usize> {
        let l = self.level[x];
        (l != Self::OUTSIDE).then_some(l as usize)
    }

    pub fn base_of(&self, x: usize) -> Option<usize> {
        let b = self.base[x];
        (b != Self::OUTSIDE).then_some(b as usize)
    }

    pub fn covered(&self) -> usize {
        self.level.iter().filter(|&&l| l != Self::OUTSIDE).count()
    }
}

/// Whether the orbit through `x0` is a full product of cycles whose lengths
/// are divisible by the tile sides, with torsion acting at full order.
fn aligned_lengths(f: &FactorAction, tile: &Tile, x0: usize, orbit_len: usize) -> Option<Vec<usize>> {
    let spec = f.spec();
    let sides = tile.sides();
    let mut lens = Vec::with_capacity(spec.generator_count());
    let mut product = 1usize;
    for j in 0..spec.generator_count() {
        let l = f.cycle_len_of(j, x0);
        if j < spec.rank {
            if l % sides[j] as usize != 0 {
                return None;
            }
        } else if l != spec.torsion[j - spec.rank] as usize {
            return None;
        }
        product = product.checked_mul(l)?;
        lens.push(l);
    }
    (product == orbit_len).then_some(lens)
}

/// Some `W` with `{t·W}` pairwise disjoint.
///
/// Aligned orbits are tiled exactly by lattice translates. Other orbits
/// are swept greedily along cycles of the first generator, starting from
/// the lowest unvisited point; a point joins `W` when its whole tile image
/// is still uncovered. If `floor` is given, coverage must exceed it.
pub fn tiling_base(f: &FactorAction, tile: &Tile, floor: Option<RationalMass>) -> Result<PointSet> {
    if tile.spec() != f.spec() {
        return Err(Error::SpecMismatch("tile and action specs differ".into()));
    }
    let space = f.space();
    let n = space.n_points();
    let d = orbit_decomposition(f);
    let size = tile.len();
    if size > d.min_orbit_len() {
        return Err(Error::TileTooLarge {
            size: size as u128,
            limit: d.min_orbit_len() as u128,
        });
    }
    let elems = tile.elements();
    let spec = f.spec();
    let sides = tile.sides();
    let lo = tile.lo();
    let mut covered = vec![false; n];
    let mut stamp = vec![usize::MAX; n];
    let mut base = Vec::new();
    let mut covered_count = 0usize;
    let mut image = Vec::with_capacity(elems.len());
    for orbit in &d.orbits {
        let x0 = orbit[0];
        if let Some(lens) = aligned_lengths(f, tile, x0, orbit.len()) {
            // x0 shifted by k_i·side_i - lo_i along each free generator.
            let counts: Vec<i64> = (0..spec.rank).map(|i| (lens[i] / sides[i] as usize) as i64).collect();
            let mut k = vec![0i64; spec.rank];
            let mut exps = vec![0i64; spec.generator_count()];
            'lattice: loop {
                for i in 0..spec.rank {
                    exps[i] = k[i] * sides[i] as i64 - lo[i];
                }
                base.push(f.act_exponents(&exps, x0));
                for i in (0..spec.rank).rev() {
                    k[i] += 1;
                    if k[i] < counts[i] {
                        continue 'lattice;
                    }
                    k[i] = 0;
                }
                break;
            }
            covered_count += orbit.len();
            continue;
        }
        let mut walk = Vec::with_capacity(orbit.len());
        for &start in orbit {
            if stamp[start] == n {
                continue;
            }
            let mut y = start;
            loop {
                stamp[y] = n;
                walk.push(y);
                if spec.generator_count() > 0 {
                    y = f.power(0, y, 1);
                }
                if y == start {
                    break;
                }
            }
        }
        for &x in &walk {
            image.clear();
            let free = elems.iter().all(|t| {
                let y = f.act_unchecked(t, x);
                let ok = !covered[y] && stamp[y] != x;
                stamp[y] = x;
                image.push(y);
                ok
            });
            if free {
                for &y in &image {
                    covered[y] = true;
                }
                covered_count += image.len();
                base.push(x);
            }
        }
    }
    base.sort_unstable();
    let coverage = space.mass_of(covered_count);
    if let Some(floor) = floor {
        if coverage <= floor {
            return Err(Error::CoverageShortfall {
                achieved: coverage.to_string(),
                required: floor.to_string(),
            });
        }
    }
    Ok(PointSet::from_sorted_unchecked(space, base))
}

/// A tower with coverage above `1 - eps` whose base avoids `avoid`.
///
/// Requires `μ(avoid) < eps/2`. `W` is a tiling base covering more than
/// `1 - eps/2`; `t₀` is the first tile element in canonical order
/// minimizing `|t₀W ∩ avoid|`; the base is `t₀W ∖ avoid`.
pub fn rohlin_avoiding(f: &FactorAction, tile: &Tile, eps: RationalMass, avoid: &PointSet) -> Result<Tower> {
    let space = f.space();
    space.check_same(&avoid.space())?;
    let half = eps.div_int(2);
    if avoid.measure() >= half {
        return Err(Error::HypothesisViolated(format!(
            "avoid set has mass {} but must be below {}",
            avoid.measure(),
            half
        )));
    }
    let w = tiling_base(f, tile, Some(RationalMass::one().saturating_sub(half)))?;
    let mask = avoid.mask();
    let elems = tile.elements();
    let mut best: Option<(usize, usize)> = None;
    for (k, t) in elems.iter().enumerate() {
        let hits = w.members().iter().filter(|&&x| mask[f.act_unchecked(t, x)]).count();
        if best.is_none_or(|(_, h)| hits < h) {
            best = Some((k, hits));
        }
    }
    let (k0, _) = best.expect("tile is non-empty");
    let t0 = &elems[k0];
    let mut members: Vec<usize> = w
        .members()
        .iter()
        .map(|&x| f.act_unchecked(t0, x))
        .filter(|&y| !mask[y])
        .collect();
    members.sort_unstable();
    let base = PointSet::from_sorted_unchecked(space, members);
    let coverage = space.mass_of(base.len() * elems.len());
    let floor = RationalMass::one().saturating_sub(eps);
    if coverage <= floor {
        return Err(Error::CoverageShortfall {
            achieved: coverage.to_string(),
            required: floor.to_string(),
        });
    }
    let tower = Tower {
        factor_index: None,
        tile: tile.clone(),
        base,
        coverage,
    };
    let report = verify_tower(&tower, f, Some(avoid));
    if let Some(x) = report.first_overlap {
        return Err(Error::LevelOverlap(x));
    }
    Ok(tower)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TowerReport {
    pub disjoint: bool,
    pub first_overlap: Option<usize>,
    pub coverage: RationalMass,
    pub avoids: Option<bool>,
}

impl TowerReport {
    pub fn passed(&self) -> bool {
        self.disjoint && self.avoids != Some(false)
    }
}

/// Recomputes disjointness, coverage, and optionally avoidance.
pub fn verify_tower(tw: &Tower, f: &FactorAction, avoid: Option<&PointSet>) -> TowerReport {
    let space: FiniteSpace = f.space();
    let mut hit = vec![false; space.n_points()];
    let mut first_overlap = None;
    let mut count = 0usize;
    for t in tw.tile.elements() {
        for &b in tw.base.members() {
            let y = f.act_unchecked(&t, b);
            if hit[y] {
                first_overlap.get_or_insert(y);
            } else {
                hit[y] = true;
                count += 1;
            }
        }
    }
    TowerReport {
        disjoint: first_overlap.is_none(),
        first_overlap,
        coverage: space.mass_of(count),
        avoids: avoid.map(|a| tw.base.members().iter().all(|&b| !a.contains(b))),
    }
}
