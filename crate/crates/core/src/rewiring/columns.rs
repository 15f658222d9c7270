//! Base partitions by tile names and the per-column tile permutations.

use serde::Serialize;

use crate::actions::FactorAction;
use crate::error::{Error, Result};
use crate::groups::Tile;
use crate::rohlin::Tower;
use crate::space::{Labeling, PointSet, RationalMass};

/// One matched pair of base cells. Names are `phi` labels along the tile in
/// canonical order and are constant on each cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Column {
    pub q_alpha: Vec<usize>,
    pub q_beta: Vec<usize>,
    pub name_alpha: Vec<u32>,
    pub name_beta: Vec<u32>,
    /// `sigma[t]` is the tile index `σ_s(t)`; empty until matched.
    pub sigma: Vec<u32>,
    /// Membership flags of `T_s`; empty until matched.
    pub matched: Vec<bool>,
}

impl Column {
    pub fn defect(&self) -> usize {
        self.matched.iter().filter(|&&b| !b).count()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ColumnData {
    pub factor_index: Option<usize>,
    pub tile: Tile,
    pub base_alpha: PointSet,
    pub base_beta: PointSet,
    pub alphabet_size: usize,
    pub columns: Vec<Column>,
}

impl ColumnData {
    pub fn max_defect(&self) -> usize {
        self.columns.iter().map(Column::defect).max().unwrap_or(0)
    }
}

/// Tile name of every base point, in base order.
fn names(f: &FactorAction, tile: &Tile, base: &PointSet, phi: &Labeling) -> Vec<Vec<u32>> {
    let elems = tile.elements();
    base.members()
        .iter()
        .map(|&x| elems.iter().map(|t| phi.label(f.act_unchecked(t, x))).collect())
        .collect()
}

/// Base points grouped by name, classes sorted by name, points ascending.
fn name_classes(base: &PointSet, names: Vec<Vec<u32>>) -> Vec<(Vec<u32>, Vec<usize>)> {
    let mut keyed: Vec<(Vec<u32>, usize)> = names.into_iter().zip(base.members().iter().copied()).collect();
    keyed.sort();
    let mut classes: Vec<(Vec<u32>, Vec<usize>)> = Vec::new();
    for (name, x) in keyed {
        match classes.last_mut() {
            Some((n, pts)) if *n == name => pts.push(x),
            _ => classes.push((name, vec![x])),
        }
    }
    classes
}

/// Refines both bases into equal-size cells on which tile names are
/// constant. Classes are walked in name order on both sides; each step
/// splits off `min(remaining_alpha, remaining_beta)` lowest-index points.
pub fn column_partitions(
    tw_alpha: &Tower,
    tw_beta: &Tower,
    phi: &Labeling,
    alpha_i: &FactorAction,
    beta_i: &FactorAction,
) -> Result<ColumnData> {
    if tw_alpha.base.len() != tw_beta.base.len() {
        return Err(Error::BaseSizeMismatch {
            alpha: tw_alpha.base.len(),
            beta: tw_beta.base.len(),
        });
    }
    if tw_alpha.tile != tw_beta.tile {
        return Err(Error::UnsupportedTile("towers use different tiles".into()));
    }
    let tile = &tw_alpha.tile;
    let ca = name_classes(&tw_alpha.base, names(alpha_i, tile, &tw_alpha.base, phi));
    let cb = name_classes(&tw_beta.base, names(beta_i, tile, &tw_beta.base, phi));
    let mut columns = Vec::new();
    let (mut i, mut j) = (0, 0);
    let (mut oi, mut oj) = (0, 0);
    while i < ca.len() && j < cb.len() {
        let ra = ca[i].1.len() - oi;
        let rb = cb[j].1.len() - oj;
        let take = ra.min(rb);
        columns.push(Column {
            q_alpha: ca[i].1[oi..oi + take].to_vec(),
            q_beta: cb[j].1[oj..oj + take].to_vec(),
            name_alpha: ca[i].0.clone(),
            name_beta: cb[j].0.clone(),
            sigma: Vec::new(),
            matched: Vec::new(),
        });
        oi += take;
        oj += take;
        if oi == ca[i].1.len() {
            i += 1;
            oi = 0;
        }
        if oj == cb[j].1.len() {
            j += 1;
            oj = 0;
        }
    }
    Ok(ColumnData {
        factor_index: tw_alpha.factor_index,
        tile: tile.clone(),
        base_alpha: tw_alpha.base.clone(),
        base_beta: tw_beta.base.clone(),
        alphabet_size: phi.alphabet_size(),
        columns,
    })
}

/// `σ` with `σ(e) = e`, matching tile positions symbol by symbol in
/// canonical order, then completing on the leftovers in canonical order.
/// Returns `σ` and the agreement flags `name_alpha(σ(t)) = name_beta(t)`.
pub fn match_names(name_alpha: &[u32], name_beta: &[u32], identity_index: usize, alphabet_size: usize) -> (Vec<u32>, Vec<bool>) {
    let n = name_alpha.len();
    let mut sigma = vec![u32::MAX; n];
    let mut used = vec![false; n];
    sigma[identity_index] = identity_index as u32;
    used[identity_index] = true;
    let mut by_symbol: Vec<Vec<usize>> = vec![Vec::new(); alphabet_size];
    for (u, &a) in name_alpha.iter().enumerate() {
        if u != identity_index {
            by_symbol[a as usize].push(u);
        }
    }
    let mut next = vec![0usize; alphabet_size];
    for (t, &a) in name_beta.iter().enumerate() {
        if t == identity_index {
            continue;
        }
        let a = a as usize;
        if let Some(&u) = by_symbol[a].get(next[a]) {
            next[a] += 1;
            sigma[t] = u as u32;
            used[u] = true;
        }
    }
    let mut free = (0..n).filter(|&u| !used[u]);
    for s in sigma.iter_mut() {
        if *s == u32::MAX {
            *s = free.next().expect("bijection completes") as u32;
        }
    }
    let matched = (0..n).map(|t| name_alpha[sigma[t] as usize] == name_beta[t]).collect();
    (sigma, matched)
}

/// Completes every column with `σ_s` and `T_s`, and checks
/// `|T ∖ T_s| < 7·eps'·|alphabet|·|T|`.
pub fn tile_matching(mut cd: ColumnData, eps_prime: RationalMass) -> Result<ColumnData> {
    let e = cd
        .tile
        .identity_index()
        .ok_or_else(|| Error::UnsupportedTile("tile does not contain the identity".into()))?;
    let size = cd.tile.len();
    let bound = eps_prime.scale(7 * cd.alphabet_size as u64 * size as u64);
    for (s, col) in cd.columns.iter_mut().enumerate() {
        let (sigma, matched) = match_names(&col.name_alpha, &col.name_beta, e, cd.alphabet_size);
        col.sigma = sigma;
        col.matched = matched;
        let defect = col.defect();
        if RationalMass::integer(defect as i128) >= bound {
            return Err(Error::DefectBoundViolated {
                column: s,
                defect,
                bound: bound.to_string(),
            });
        }
    }
    Ok(cd)
}
