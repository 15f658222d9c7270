//! The tower rewiring map and the per-letter discrepancy budget.

use serde::Serialize;

use crate::actions::{orbit_decomposition, FactorAction};
use crate::error::{Error, Result};
use crate::groups::AbelianElement;
use crate::rewiring::columns::ColumnData;
use crate::rohlin::TowerMap;
use crate::space::{Labeling, Permutation, PointSet, RationalMass};

#[derive(Debug, Clone)]
pub struct Rewiring {
    pub s: Permutation,
    pub alpha_double_prime: FactorAction,
    pub moved: usize,
}

/// `S(t·q) = σ_s(t)·q` for `q ∈ Q_s`, identity off the tower, and
/// `α″ = S α′ S⁻¹`.
///
/// Checks that `S` keeps every point in its orbit, fixes every base point,
/// and that `t^{α″} q` carries the target name for `t ∈ T_s`.
pub fn build_rewiring(alpha_i: &FactorAction, cd: &ColumnData, phi: &Labeling) -> Result<Rewiring> {
    let space = alpha_i.space();
    let n = space.n_points();
    let elems = cd.tile.elements();
    if cd.columns.iter().any(|c| c.sigma.len() != elems.len()) {
        return Err(Error::UnsupportedTile("columns are not matched".into()));
    }
    let mut forward: Vec<usize> = (0..n).collect();
    let mut written = vec![false; n];
    for col in &cd.columns {
        for &q in &col.q_alpha {
            for (k, t) in elems.iter().enumerate() {
                let x = alpha_i.act_unchecked(t, q);
                if written[x] {
                    return Err(Error::LevelOverlap(x));
                }
                written[x] = true;
                forward[x] = alpha_i.act_unchecked(&elems[col.sigma[k] as usize], q);
            }
        }
    }
    let s = Permutation::from_forward(forward).map_err(|_| Error::LevelOverlap(usize::MAX))?;

    let orbits = orbit_decomposition(alpha_i);
    if let Some(x) = (0..n).find(|&x| orbits.orbit_id[x] != orbits.orbit_id[s.apply(x)]) {
        return Err(Error::BudgetViolated {
            component: "orbit preservation".into(),
            value: format!("point {x}"),
            bound: "same orbit".into(),
        });
    }
    if let Some(&q) = cd.base_alpha.members().iter().find(|&&q| s.apply(q) != q) {
        return Err(Error::BudgetViolated {
            component: "base cells fixed".into(),
            value: format!("point {q}"),
            bound: "S(q) = q".into(),
        });
    }
    let alpha_double_prime = alpha_i.conjugate(&s)?;
    for (c, col) in cd.columns.iter().enumerate() {
        for (k, t) in elems.iter().enumerate() {
            if !col.matched[k] {
                continue;
            }
            let want = col.name_beta[k];
            if let Some(&q) = col
                .q_alpha
                .iter()
                .find(|&&q| phi.label(alpha_double_prime.act_unchecked(t, q)) != want)
            {
                return Err(Error::BudgetViolated {
                    component: format!("matched names in column {c}"),
                    value: format!("point {q}, tile index {k}"),
                    bound: "equal names".into(),
                });
            }
        }
    }
    let moved = (0..n).filter(|&x| s.apply(x) != x).count();
    Ok(Rewiring {
        s,
        alpha_double_prime,
        moved,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LetterBudget {
    pub letter: AbelianElement,
    pub l0: RationalMass,
    pub l1: RationalMass,
    pub l2: RationalMass,
    pub discrepancy: Vec<RationalMass>,
    pub residual_points: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BudgetReport {
    pub bound_l0: RationalMass,
    pub bound_l1: RationalMass,
    pub bound_l2: RationalMass,
    pub letters: Vec<LetterBudget>,
}

/// Exact masses of `L₀` (off the tower), `L₁` (levels `T ∖ gT`) and `L₂`
/// (levels outside `T_s ∩ gT_s`) for each letter `g`, measured in the
/// levels of `α″`, plus the check that `g^{α″}A △ g^β A` lies inside
/// their union.
pub fn discrepancy_budget(
    alpha_double_prime: &FactorAction,
    alpha_prime: &FactorAction,
    beta_i: &FactorAction,
    cd: &ColumnData,
    f_i: &[AbelianElement],
    sets: &[PointSet],
    eps_prime: RationalMass,
) -> Result<BudgetReport> {
    let space = beta_i.space();
    let n = space.n_points();
    let tile = &cd.tile;
    let elems = tile.elements();
    let map = TowerMap::new(alpha_prime, tile, &cd.base_alpha)?;
    let mut col_of = vec![u32::MAX; n];
    for (c, col) in cd.columns.iter().enumerate() {
        for &q in &col.q_alpha {
            col_of[q] = c as u32;
        }
    }
    let inverse_sigma: Vec<Vec<u32>> = cd
        .columns
        .iter()
        .map(|col| {
            let mut inv = vec![0u32; col.sigma.len()];
            for (t, &u) in col.sigma.iter().enumerate() {
                inv[u as usize] = t as u32;
            }
            inv
        })
        .collect();
    // α″-level of each tower point, and its column
    let mut level2 = vec![u32::MAX; n];
    for x in 0..n {
        if let (Some(k), Some(q)) = (map.level_of(x), map.base_of(x)) {
            let c = col_of[q] as usize;
            level2[x] = inverse_sigma[c][k];
            col_of[x] = c as u32;
        }
    }
    let bound_l0 = eps_prime.scale(8);
    let bound_l1 = eps_prime;
    let bound_l2 = eps_prime.scale(15 * cd.alphabet_size as u64);
    let mut letters = Vec::with_capacity(f_i.len());
    for g in f_i {
        let shift: Vec<Option<usize>> = elems.iter().map(|t| tile.index_of(&t.sub(g, tile.spec()))).collect();
        let mut in_l = vec![false; n];
        let (mut l0, mut l1, mut l2) = (0usize, 0usize, 0usize);
        for x in 0..n {
            let k = level2[x];
            if k == u32::MAX {
                l0 += 1;
                in_l[x] = true;
                continue;
            }
            let k = k as usize;
            let col = &cd.columns[col_of[x] as usize];
            if shift[k].is_none() {
                l1 += 1;
                in_l[x] = true;
            }
            let keep = col.matched[k] && shift[k].is_some_and(|u| col.matched[u]);
            if !keep {
                l2 += 1;
                in_l[x] = true;
            }
        }
        let mut discrepancy = Vec::with_capacity(sets.len());
        let mut residual = 0usize;
        for a in sets {
            let mut mark = vec![0u8; n];
            for &y in a.members() {
                mark[alpha_double_prime.act_unchecked(g, y)] ^= 1;
                mark[beta_i.act_unchecked(g, y)] ^= 2;
            }
            let mut d = 0usize;
            for x in 0..n {
                if mark[x] == 1 || mark[x] == 2 {
                    d += 1;
                    if !in_l[x] {
                        residual += 1;
                    }
                }
            }
            discrepancy.push(space.mass_of(d));
        }
        let lb = LetterBudget {
            letter: g.clone(),
            l0: space.mass_of(l0),
            l1: space.mass_of(l1),
            l2: space.mass_of(l2),
            discrepancy,
            residual_points: residual,
        };
        for (name, value, bound) in [("L0", lb.l0, bound_l0), ("L1", lb.l1, bound_l1), ("L2", lb.l2, bound_l2)] {
            if value >= bound {
                return Err(Error::BudgetViolated {
                    component: format!("{name} for letter {g}"),
                    value: value.to_string(),
                    bound: bound.to_string(),
                });
            }
        }
        if residual > 0 {
            return Err(Error::BudgetViolated {
                component: format!("residual for letter {g}"),
                value: residual.to_string(),
                bound: "0".into(),
            });
        }
        letters.push(lb);
    }
    Ok(BudgetReport {
        bound_l0,
        bound_l1,
        bound_l2,
        letters,
    })
}
