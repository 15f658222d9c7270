//! Paired Rohlin towers for the conjugated source factor and the target
//! factor over one tile.

use serde::Serialize;

use crate::actions::{orbit_decomposition, tile_freeness_defect, FactorAction, WindowCounter};
use crate::error::{Error, Result};
use crate::groups::{folner_tile, invariance_defect, AbelianElement, Tile};
use crate::rohlin::{rohlin_avoiding, tiling_base, verify_tower, Tower};
use crate::space::{pushforward, within, within_pair, Labeling, PointSet, RationalMass};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TowerPairReport {
    pub m: u64,
    pub tile_size: usize,
    pub candidates_tried: u64,
    pub good_alpha: RationalMass,
    pub good_beta: RationalMass,
    pub avoid: RationalMass,
    pub coverage_alpha: RationalMass,
    pub coverage_beta: RationalMass,
    pub trimmed: usize,
    pub base_size: usize,
    pub worst_invariance: RationalMass,
    pub worst_base_deviation_alpha: RationalMass,
    pub worst_base_deviation_beta: RationalMass,
}

#[derive(Debug, Clone)]
pub struct TowerPair {
    pub tile: Tile,
    pub alpha: Tower,
    pub beta: Tower,
    pub report: TowerPairReport,
}

/// Level-set masks of `phi`.
pub(crate) fn symbol_masks(phi: &Labeling) -> Vec<Vec<bool>> {
    let mut masks = vec![vec![false; phi.space().n_points()]; phi.alphabet_size()];
    for (x, &l) in phi.labels().iter().enumerate() {
        masks[l as usize][x] = true;
    }
    masks
}

/// Points whose tile averages of every `phi` cell are within `3·eps'` of
/// the cell mass. Returns `None` as soon as the complement reaches
/// `limit` points.
fn beta_good(wc: &WindowCounter<'_>, tile: &Tile, cell: &[usize], n: usize, tol: RationalMass, limit: usize) -> Option<Vec<bool>> {
    let size = tile.len() as u64;
    let mut out = vec![0u32; cell.len()];
    let mut good = vec![false; n];
    let mut bad = 0;
    for (x, g) in good.iter_mut().enumerate() {
        wc.counts_at(tile, x, &mut out);
        let ok = out
            .iter()
            .zip(cell)
            .all(|(&c, &m)| within_pair(c as u64, size, m as u64, n as u64, tol));
        if ok {
            *g = true;
        } else {
            bad += 1;
            if bad >= limit {
                return None;
            }
        }
    }
    Some(good)
}

/// Points whose tile averages are within `eps'` of their orbit means, on
/// orbits whose label distribution is within `2·eps'` of the global one.
#[allow(clippy::too_many_arguments)]
fn alpha_good(
    wc: &WindowCounter<'_>,
    tile: &Tile,
    orbit_id: &[usize],
    orbit_counts: &[Vec<usize>],
    orbit_sizes: &[usize],
    orbit_ok: &[bool],
    n: usize,
    eps_prime: RationalMass,
    limit: usize,
) -> Option<Vec<bool>> {
    let size = tile.len() as u64;
    let k = orbit_counts.first().map_or(0, Vec::len);
    let mut out = vec![0u32; k];
    let mut good = vec![false; n];
    let mut bad = 0;
    for (x, g) in good.iter_mut().enumerate() {
        let o = orbit_id[x];
        let ok = orbit_ok[o] && {
            wc.counts_at(tile, x, &mut out);
            out.iter()
                .zip(&orbit_counts[o])
                .all(|(&c, &m)| within_pair(c as u64, size, m as u64, orbit_sizes[o] as u64, eps_prime))
        };
        if ok {
            *g = true;
        } else {
            bad += 1;
            if bad >= limit {
                return None;
            }
        }
    }
    Some(good)
}

/// Drops the highest-index points of `base` until it has `keep` points.
pub fn trim_base(base: &PointSet, keep: usize) -> PointSet {
    let members = base.members()[..keep.min(base.len())].to_vec();
    PointSet::from_sorted_unchecked(base.space(), members)
}

/// Searches box tiles `D_m = [-m, m]^r ⊕ C` for the smallest `m` meeting
/// every threshold of the tower construction, and builds both towers.
///
/// Thresholds: `(F_i, eps')`-invariance, `|D_m| > 1/eps'`, both good sets of
/// mass above `1 - 2eps'`, and tiling coverage above `1 - 4eps'` on both
/// sides so that the avoidance step can succeed with `eps = 8eps'`.
pub fn tower_pair(
    alpha_i: &FactorAction,
    beta_i: &FactorAction,
    phi: &Labeling,
    f_i: &[AbelianElement],
    eps_prime: RationalMass,
    tile_cap: u128,
) -> Result<TowerPair> {
    let space = alpha_i.space();
    space.check_same(&beta_i.space())?;
    space.check_same(&phi.space())?;
    if alpha_i.spec() != beta_i.spec() {
        return Err(Error::SpecMismatch("source and target factors differ".into()));
    }
    for g in f_i {
        g.check(alpha_i.spec())?;
    }
    if eps_prime.is_zero() {
        return Err(Error::Config("eps' must be positive".into()));
    }
    let spec = alpha_i.spec();
    let n = space.n_points();
    let beta_orbits = orbit_decomposition(beta_i);
    if beta_orbits.len() != 1 {
        return Err(Error::NotTransitive {
            factor: 0,
            orbits: beta_orbits.len(),
        });
    }
    let alpha_orbits = orbit_decomposition(alpha_i);
    let max_size = alpha_orbits.min_orbit_len().min(n);

    let masks = symbol_masks(phi);
    let cell: Vec<usize> = phi.counts();
    let wc_alpha = WindowCounter::new(alpha_i, &masks)?;
    let wc_beta = WindowCounter::new(beta_i, &masks)?;

    let pi = pushforward(phi);
    let two = eps_prime.scale(2);
    let three = eps_prime.scale(3);
    let k = phi.alphabet_size();
    let orbit_counts: Vec<Vec<usize>> = alpha_orbits
        .orbits
        .iter()
        .map(|o| crate::actions::orbit_label_counts(o, phi))
        .collect();
    let orbit_sizes: Vec<usize> = alpha_orbits.orbits.iter().map(Vec::len).collect();
    let orbit_ok: Vec<bool> = orbit_counts
        .iter()
        .zip(&orbit_sizes)
        .map(|(c, &size)| (0..k).all(|a| within(c[a] as u64, size as u64, pi.mass(a), two)))
        .collect();

    // good sets need mass > 1 - 2eps', i.e. fewer than 2eps'·N bad points
    let bad_limit = {
        let b = two.scale(n as u64);
        let whole = (b.numer() / b.denom()) as usize;
        if b.denom() == 1 {
            whole
        } else {
            whole + 1
        }
    };
    let cover_floor = RationalMass::one().saturating_sub(eps_prime.scale(4));
    let inv_size = eps_prime.recip().expect("positive");

    let mut tried = 0u64;
    let mut m = 0u64;
    let chosen = loop {
        m += 1;
        let tile = match folner_tile(spec, m, tile_cap) {
            Ok(t) => t,
            Err(Error::TileTooLarge { .. }) => {
                return Err(Error::NoGoodTile(format!("tile cap {tile_cap} reached at m = {m}")));
            }
            Err(e) => return Err(e),
        };
        if tile.len() > max_size {
            return Err(Error::NoGoodTile(format!(
                "tile D_{m} has {} elements, more than the smallest orbit ({max_size})",
                tile.len()
            )));
        }
        if RationalMass::integer(tile.len() as i128) <= inv_size {
            continue;
        }
        let mut worst_inv = RationalMass::zero();
        let mut invariant = true;
        for g in f_i {
            let d = invariance_defect(&tile, g)?;
            worst_inv = worst_inv.max(d);
            if d >= eps_prime {
                invariant = false;
                break;
            }
        }
        if !invariant {
            continue;
        }
        // each orbit holds at most ⌊|O|/|T|⌋ disjoint translates
        let capacity = |sizes: &[usize]| sizes.iter().map(|&s| s / tile.len() * tile.len()).sum::<usize>();
        if space.mass_of(capacity(&orbit_sizes)) <= cover_floor || space.mass_of(capacity(&[n])) <= cover_floor {
            continue;
        }
        tried += 1;
        let Some(gb) = beta_good(&wc_beta, &tile, &cell, n, three, bad_limit) else {
            continue;
        };
        let Some(ga) = alpha_good(
            &wc_alpha,
            &tile,
            &alpha_orbits.orbit_id,
            &orbit_counts,
            &orbit_sizes,
            &orbit_ok,
            n,
            eps_prime,
            bad_limit,
        ) else {
            continue;
        };
        let feasible = [alpha_i, beta_i]
            .iter()
            .all(|f| tiling_base(f, &tile, Some(cover_floor)).is_ok());
        if !feasible {
            continue;
        }
        break (tile, ga, gb, worst_inv);
    };
    let (tile, ga, gb, worst_invariance) = chosen;
    log::debug!("tower tile D_{m} with {} elements after {tried} candidates", tile.len());

    let freeness = tile_freeness_defect(alpha_i, &tile)?;
    if !freeness.is_zero() {
        return Err(Error::NotFree(freeness.to_string()));
    }

    let good_alpha = space.mass_of(ga.iter().filter(|&&b| b).count());
    let good_beta = space.mass_of(gb.iter().filter(|&&b| b).count());
    let avoid = PointSet::new(space, (0..n).filter(|&x| !(ga[x] && gb[x])))?;
    let eps8 = eps_prime.scale(8);
    let mut ta = rohlin_avoiding(alpha_i, &tile, eps8, &avoid)?;
    let mut tb = rohlin_avoiding(beta_i, &tile, eps8, &avoid)?;

    let keep = ta.base.len().min(tb.base.len());
    let trimmed = ta.base.len() + tb.base.len() - 2 * keep;
    for tw in [&mut ta, &mut tb] {
        if tw.base.len() > keep {
            tw.base = trim_base(&tw.base, keep);
            tw.coverage = space.mass_of(keep * tile.len());
        }
    }
    for (tw, f) in [(&ta, alpha_i), (&tb, beta_i)] {
        let r = verify_tower(tw, f, Some(&avoid));
        if !r.passed() {
            return Err(Error::LevelOverlap(r.first_overlap.unwrap_or(0)));
        }
        if r.coverage <= RationalMass::one().saturating_sub(eps8) {
            return Err(Error::CoverageShortfall {
                achieved: r.coverage.to_string(),
                required: RationalMass::one().saturating_sub(eps8).to_string(),
            });
        }
    }

    let worst_a = worst_base_deviation(&wc_alpha, &tile, &ta.base, &cell, n);
    let worst_b = worst_base_deviation(&wc_beta, &tile, &tb.base, &cell, n);
    for (w, side) in [(worst_a, "alpha"), (worst_b, "beta")] {
        if w > three {
            return Err(Error::BudgetViolated {
                component: format!("base name distribution ({side})"),
                value: w.to_string(),
                bound: three.to_string(),
            });
        }
    }

    let report = TowerPairReport {
        m,
        tile_size: tile.len(),
        candidates_tried: tried,
        good_alpha,
        good_beta,
        avoid: avoid.measure(),
        coverage_alpha: ta.coverage,
        coverage_beta: tb.coverage,
        trimmed,
        base_size: keep,
        worst_invariance,
        worst_base_deviation_alpha: worst_a,
        worst_base_deviation_beta: worst_b,
    };
    Ok(TowerPair {
        tile,
        alpha: ta,
        beta: tb,
        report,
    })
}

/// `max_{x ∈ base, a} |count_a(x)/|T| - μ(φ⁻¹(a))|`.
fn worst_base_deviation(wc: &WindowCounter<'_>, tile: &Tile, base: &PointSet, cell: &[usize], n: usize) -> RationalMass {
    let size = tile.len() as i128;
    let mut out = vec![0u32; cell.len()];
    let mut worst = RationalMass::zero();
    for &x in base.members() {
        wc.counts_at(tile, x, &mut out);
        for (&c, &m) in out.iter().zip(cell) {
            let d = RationalMass::ratio(c as i128, size).abs_diff(RationalMass::ratio(m as i128, n as i128));
            worst = worst.max(d);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rewiring::match_labels_conjugator;
    use crate::space::{FiniteSpace, Permutation};
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rot(n: usize, a: usize) -> FactorAction {
        FactorAction::cyclic(Permutation::from_fn(FiniteSpace::new(n).unwrap(), |x| (x + a) % n).unwrap()).unwrap()
    }

    fn good_alpha_set(f: &FactorAction, tile: &Tile, l: &Labeling, eps_prime: RationalMass) -> Vec<bool> {
        let orbits = orbit_decomposition(f);
        let counts: Vec<Vec<usize>> = orbits
            .orbits
            .iter()
            .map(|o| crate::actions::orbit_label_counts(o, l))
            .collect();
        let sizes: Vec<usize> = orbits.orbits.iter().map(Vec::len).collect();
        let pi = pushforward(l);
        let ok: Vec<bool> = counts
            .iter()
            .zip(&sizes)
            .map(|(c, &s)| (0..c.len()).all(|a| within(c[a] as u64, s as u64, pi.mass(a), eps_prime.scale(2))))
            .collect();
        let wc = WindowCounter::new(f, &symbol_masks(l)).unwrap();
        let n = f.space().n_points();
        alpha_good(&wc, tile, &orbits.orbit_id, &counts, &sizes, &ok, n, eps_prime, n + 1).unwrap()
    }

    #[test]
    fn trim_drops_highest() {
        let space = FiniteSpace::new(20).unwrap();
        let b = PointSet::new(space, [1, 4, 9, 12, 17]).unwrap();
        assert_eq!(trim_base(&b, 4).members(), &[1, 4, 9, 12]);
        assert_eq!(trim_base(&b, 9).len(), 5);
    }

    #[test]
    fn parity_windows_are_exact() {
        let n = 40;
        let f = rot(n, 1);
        let phi = Labeling::new(f.space(), vec!["0".into(), "1".into()], (0..n).map(|x| (x % 2) as u32).collect()).unwrap();
        let wc = WindowCounter::new(&f, &symbol_masks(&phi)).unwrap();
        for m in 1..5 {
            let tile = Tile::interval(0, 2 * m - 1).unwrap();
            let mut out = vec![0u32; 2];
            for x in 0..n {
                wc.counts_at(&tile, x, &mut out);
                assert_eq!(out, vec![m as u32, m as u32]);
            }
            let good = beta_good(&wc, &tile, &phi.counts(), n, RationalMass::zero(), n + 1).unwrap();
            assert!(good.iter().all(|&b| b));
        }
    }

    #[test]
    fn constant_names_trivial_pair() {
        let n = 400;
        let f = rot(n, 1);
        let phi = Labeling::constant(f.space(), "a");
        let tp = tower_pair(&f, &f, &phi, &[AbelianElement::integer(1)], RationalMass::ratio(1, 20), crate::groups::DEFAULT_TILE_CAP).unwrap();
        assert!(tp.report.worst_base_deviation_alpha.is_zero());
        assert!(tp.report.worst_base_deviation_beta.is_zero());
        assert_eq!(tp.alpha.base.len(), tp.beta.base.len());
        assert!(RationalMass::integer(tp.tile.len() as i128) > RationalMass::integer(20));
    }

    #[test]
    fn direct_good_set_matches_transport() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 600;
        let space = FiniteSpace::new(n).unwrap();
        let tile = Tile::interval(-6, 6).unwrap();
        for _ in 0..20 {
            // α with several orbits, ψ random, φ a random rearrangement of ψ
            let splits = [150usize, 200, 250];
            let mut fwd = vec![0usize; n];
            let mut start = 0;
            for &len in &splits {
                for k in 0..len {
                    fwd[start + k] = start + (k + 1) % len;
                }
                start += len;
            }
            let mut relabel: Vec<usize> = (0..n).collect();
            relabel.shuffle(&mut rng);
            let scramble = Permutation::from_forward(relabel).unwrap();
            let alpha = FactorAction::cyclic(Permutation::from_forward(fwd).unwrap().conjugate_by(&scramble).unwrap()).unwrap();
            let mut labels: Vec<u32> = (0..n).map(|x| (x % 3 == 0) as u32 + (x % 7 == 0) as u32).collect();
            labels.shuffle(&mut rng);
            let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
            let psi = Labeling::new(space, names.clone(), labels.clone()).unwrap();
            labels.shuffle(&mut rng);
            let phi = Labeling::new(space, names, labels).unwrap();
            let r = match_labels_conjugator(&psi, &phi).unwrap();
            let alpha_prime = alpha.conjugate(&r).unwrap();
            let ep = RationalMass::ratio(1, 10);
            let on_alpha = good_alpha_set(&alpha, &tile, &psi, ep);
            let direct = good_alpha_set(&alpha_prime, &tile, &phi, ep);
            for x in 0..n {
                assert_eq!(direct[r.apply(x)], on_alpha[x]);
            }
        }
    }
}
