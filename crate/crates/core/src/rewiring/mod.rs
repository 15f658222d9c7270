//! The rewiring construction: an action orbit equivalent to a free source
//! action whose factor letters move the target sets almost as a given
//! target action does.

pub mod columns;
pub mod rewire;
pub mod towers;

use serde::Serialize;

use crate::actions::{system_orbits, weak_discrepancy, FactorAction, FreeProductSystem};
use crate::error::{Error, Result, StageExt};
use crate::good_partition::{good_partition, GoodPartitionOptions, GoodPartitionReport};
use crate::groups::{AbelianElement, FreeWord, DEFAULT_TILE_CAP};
use crate::space::{generated_partition, pushforward, Labeling, Permutation, PointSet, RationalMass};

pub use columns::{column_partitions, match_names, tile_matching, Column, ColumnData};
pub use rewire::{build_rewiring, discrepancy_budget, BudgetReport, LetterBudget, Rewiring};
pub use towers::{tower_pair, trim_base, TowerPair, TowerPairReport};

/// `eps / (24·|alphabet|)`.
pub fn eps_prime(eps: RationalMass, alphabet_size: usize) -> RationalMass {
    eps.div_int(24 * alphabet_size.max(1) as u64)
}

/// `R` sending each `psi` cell onto the `phi` cell with the same label,
/// matching points in increasing index order.
pub fn match_labels_conjugator(psi: &Labeling, phi: &Labeling) -> Result<Permutation> {
    psi.space().check_same(&phi.space())?;
    if psi.alphabet() != phi.alphabet() || psi.counts() != phi.counts() {
        return Err(Error::PushforwardMismatch);
    }
    let k = psi.alphabet_size();
    let mut targets: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (x, &l) in phi.labels().iter().enumerate() {
        targets[l as usize].push(x);
    }
    let mut next = vec![0usize; k];
    let forward = psi
        .labels()
        .iter()
        .map(|&l| {
            let l = l as usize;
            let y = targets[l][next[l]];
            next[l] += 1;
            y
        })
        .collect();
    Permutation::from_forward(forward)
}

#[derive(Debug, Clone)]
pub struct Ergodized {
    pub factor: FactorAction,
    pub merges: usize,
    pub changed_points: usize,
}

/// Merges cycles of a single-permutation factor until it is transitive.
/// Each merge swaps the images of one point in each of the two largest
/// cycles, preferring the lowest-index point not changed before.
pub fn make_factor_ergodic(beta_i: &FactorAction, budget: RationalMass) -> Result<Ergodized> {
    let spec = beta_i.spec();
    if spec.rank != 1 || !spec.torsion.is_empty() {
        return Err(Error::RankUnsupported);
    }
    let p = beta_i.generator(0);
    let n = p.len();
    let mut seen = vec![false; n];
    let mut cycles: Vec<Vec<usize>> = Vec::new();
    for x in 0..n {
        if seen[x] {
            continue;
        }
        let mut c = Vec::new();
        let mut y = x;
        while !seen[y] {
            seen[y] = true;
            c.push(y);
            y = p.apply(y);
        }
        cycles.push(c);
    }
    let k = cycles.len();
    if k == 1 {
        return Ok(Ergodized {
            factor: beta_i.clone(),
            merges: 0,
            changed_points: 0,
        });
    }
    let needed = 2 * (k - 1);
    if beta_i.space().mass_of(needed) > budget {
        return Err(Error::BudgetExceeded {
            needed,
            allowed: budget.scale(n as u64).to_string(),
        });
    }
    let mut forward = p.forward().to_vec();
    let mut changed = vec![false; n];
    // cycles stay sorted; each entry keeps its members sorted
    for c in cycles.iter_mut() {
        c.sort_unstable();
    }
    let pick = |c: &[usize], changed: &[bool]| c.iter().copied().find(|&x| !changed[x]).unwrap_or(c[0]);
    while cycles.len() > 1 {
        // two largest, ties broken by smallest member
        cycles.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
        let second = cycles.remove(1);
        let first = &mut cycles[0];
        let x = pick(first, &changed);
        let y = pick(&second, &changed);
        forward.swap(x, y);
        changed[x] = true;
        changed[y] = true;
        first.extend(second);
        first.sort_unstable();
    }
    let q = Permutation::from_forward(forward)?;
    let changed_points = q.disagreement(p)?;
    let factor = FactorAction::cyclic(q)?;
    Ok(Ergodized {
        factor,
        merges: k - 1,
        changed_points,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OrbitCheck {
    pub equal: bool,
    pub first_mismatch: Option<usize>,
    pub orbits_gamma: usize,
    pub orbits_reference: usize,
}

/// Compares the orbit partition of `gamma` with that of `R α R⁻¹`.
pub fn verify_orbit_equivalence(alpha: &FreeProductSystem, gamma: &FreeProductSystem, r: &Permutation) -> Result<OrbitCheck> {
    let reference = alpha.conjugate(r)?;
    gamma.space().check_same(&reference.space())?;
    let a = system_orbits(gamma);
    let b = system_orbits(&reference);
    // orbit ids are assigned in order of first point, so equal partitions
    // give equal id arrays
    let first_mismatch = (0..a.orbit_id.len()).find(|&x| a.orbit_id[x] != b.orbit_id[x]);
    Ok(OrbitCheck {
        equal: first_mismatch.is_none(),
        first_mismatch,
        orbits_gamma: a.len(),
        orbits_reference: b.len(),
    })
}

/// Factors `0..k` from `gamma_head`, the rest conjugated from `alpha` by `R`.
pub fn chain_extension(
    alpha: &FreeProductSystem,
    gamma_head: &FreeProductSystem,
    r: &Permutation,
    k: usize,
) -> Result<FreeProductSystem> {
    if gamma_head.factor_count() < k || alpha.factor_count() < k {
        return Err(Error::FactorCountMismatch(format!(
            "k = {k} with {} head factors and {} source factors",
            gamma_head.factor_count(),
            alpha.factor_count()
        )));
    }
    alpha.space().check_same(&gamma_head.space())?;
    let mut factors: Vec<FactorAction> = gamma_head.factors()[..k].to_vec();
    for f in &alpha.factors()[k..] {
        factors.push(f.conjugate(r)?);
    }
    FreeProductSystem::new(alpha.space(), factors)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PipelineOptions {
    pub eps_prime_override: Option<RationalMass>,
    pub good_partition: GoodPartitionOptions,
    pub tile_cap: u128,
    /// Budget for merging cycles of non-transitive target factors.
    pub ergodize_budget: Option<RationalMass>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            eps_prime_override: None,
            good_partition: GoodPartitionOptions::default(),
            tile_cap: DEFAULT_TILE_CAP,
            ergodize_budget: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ColumnSummary {
    pub columns: usize,
    pub max_defect: usize,
    pub defect_bound: RationalMass,
    pub defects: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FactorReport {
    pub factor: usize,
    pub letters: Vec<AbelianElement>,
    pub ergodized_changed_points: usize,
    pub towers: Option<TowerPairReport>,
    pub columns: Option<ColumnSummary>,
    pub moved_points: usize,
    pub budget: Option<BudgetReport>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PipelineReport {
    pub n_points: usize,
    pub eps: RationalMass,
    pub eps_effective: RationalMass,
    pub target_shift: RationalMass,
    pub alphabet_size: usize,
    pub eps_prime: RationalMass,
    pub eps_prime_overridden: bool,
    pub good_partition_attempts: u32,
    pub good_partition_seed: u64,
    pub good_partition: GoodPartitionReport,
    pub factors: Vec<FactorReport>,
    pub final_discrepancy: RationalMass,
    pub orbit_check: OrbitCheck,
}

#[derive(Debug, Clone)]
pub struct OeWitness {
    pub r: Permutation,
    pub rewirings: Vec<Permutation>,
    pub orbit_check: OrbitCheck,
}

#[derive(Debug, Clone)]
pub struct OeResult {
    pub gamma: FreeProductSystem,
    pub witness: OeWitness,
    pub phi: Labeling,
    pub psi: Labeling,
    pub report: PipelineReport,
}

/// Splits single-letter words by factor. Identity words are dropped.
pub fn letters_by_factor(words: &[FreeWord], factor_count: usize) -> Result<Vec<Vec<AbelianElement>>> {
    let mut out = vec![Vec::new(); factor_count];
    for (w_idx, w) in words.iter().enumerate() {
        match w.letters() {
            [] => {}
            [(i, g)] => {
                if *i >= factor_count {
                    return Err(Error::FactorIndexOutOfRange {
                        index: *i,
                        count: factor_count,
                    });
                }
                if !out[*i].contains(g) {
                    out[*i].push(g.clone());
                }
            }
            _ => return Err(Error::NotALetter(w_idx)),
        }
    }
    Ok(out)
}

/// Builds `γ` orbit equivalent to `alpha` with
/// `μ(w^γ A △ w^β A) < eps` for every word `w` (a single factor letter)
/// and target set `A`.
pub fn oe_approximate(
    alpha: &FreeProductSystem,
    beta: &FreeProductSystem,
    words: &[FreeWord],
    eps: RationalMass,
    sets: &[PointSet],
    seed: u64,
    opts: &PipelineOptions,
) -> Result<OeResult> {
    let space = alpha.space();
    space.check_same(&beta.space()).stage("input")?;
    if alpha.specs() != beta.specs() {
        return Err(Error::FactorCountMismatch("source and target factor specs differ".into()).at("input"));
    }
    if eps.is_zero() || eps >= RationalMass::one() {
        return Err(Error::Config(format!("eps must lie in (0, 1), got {eps}")).at("input"));
    }
    for s in sets {
        space.check_same(&s.space()).stage("input")?;
    }
    let k = alpha.factor_count();
    let letters = letters_by_factor(words, k).stage("input")?;

    // Make every target factor transitive, paying for it out of eps.
    let mut beta_factors = Vec::with_capacity(k);
    let mut changed = vec![0usize; k];
    for (i, f) in beta.factors().iter().enumerate() {
        if f.is_transitive() {
            beta_factors.push(f.clone());
            continue;
        }
        let Some(budget) = opts.ergodize_budget else {
            let orbits = crate::actions::orbit_decomposition(f).len();
            return Err(Error::NotTransitive { factor: i, orbits }.at("ergodize"));
        };
        let e = make_factor_ergodic(f, budget).stage("ergodize")?;
        changed[i] = e.changed_points;
        beta_factors.push(e.factor);
    }
    let beta_t = FreeProductSystem::new(space, beta_factors).stage("ergodize")?;
    let target_shift = if &beta_t == beta {
        RationalMass::zero()
    } else {
        weak_discrepancy(&beta_t, beta, words, sets).stage("ergodize")?
    };
    let eps_effective = eps
        .checked_sub(target_shift)
        .filter(|e| !e.is_zero())
        .ok_or_else(|| Error::BudgetExceeded {
            needed: 0,
            allowed: format!("ergodization used {target_shift} of {eps}"),
        })
        .stage("ergodize")?;

    // φ: partition generated by the target images of every set, including
    // the sets themselves.
    let mut family: Vec<PointSet> = sets.to_vec();
    for w in words {
        for a in sets {
            family.push(beta_t.word_image(w, a).stage("partition")?);
        }
    }
    let phi = generated_partition(space, &family).stage("partition")?;
    let pi = pushforward(&phi);
    let alphabet_size = phi.alphabet_size();
    let ep = opts.eps_prime_override.unwrap_or_else(|| eps_prime(eps_effective, alphabet_size));

    let gp = good_partition(alpha, &pi, ep, seed, &opts.good_partition).stage("good_partition")?;
    let r = match_labels_conjugator(&gp.psi, &phi).stage("conjugator")?;
    let alpha_prime = alpha.conjugate(&r).stage("conjugator")?;

    let mut gamma_factors = Vec::with_capacity(k);
    let mut rewirings = Vec::with_capacity(k);
    let mut factor_reports = Vec::with_capacity(k);
    for i in 0..k {
        let a_i = &alpha_prime.factors()[i];
        let b_i = &beta_t.factors()[i];
        if letters[i].is_empty() {
            gamma_factors.push(a_i.clone());
            rewirings.push(Permutation::identity(space));
            factor_reports.push(FactorReport {
                factor: i,
                letters: Vec::new(),
                ergodized_changed_points: changed[i],
                towers: None,
                columns: None,
                moved_points: 0,
                budget: None,
            });
            continue;
        }
        let mut tp = tower_pair(a_i, b_i, &phi, &letters[i], ep, opts.tile_cap)
            .map_err(|e| match e {
                Error::NotTransitive { orbits, .. } => Error::NotTransitive { factor: i, orbits },
                e => e,
            })
            .stage("tower_pair")?;
        tp.alpha.factor_index = Some(i);
        tp.beta.factor_index = Some(i);
        let cd = column_partitions(&tp.alpha, &tp.beta, &phi, a_i, b_i).stage("column_partitions")?;
        let cd = tile_matching(cd, ep).stage("tile_matching")?;
        let rw = build_rewiring(a_i, &cd, &phi).stage("build_rewiring")?;
        let budget = discrepancy_budget(&rw.alpha_double_prime, a_i, b_i, &cd, &letters[i], sets, ep)
            .stage("discrepancy_budget")?;
        let defect_bound = ep.scale(7 * alphabet_size as u64 * cd.tile.len() as u64);
        factor_reports.push(FactorReport {
            factor: i,
            letters: letters[i].clone(),
            ergodized_changed_points: changed[i],
            towers: Some(tp.report),
            columns: Some(ColumnSummary {
                columns: cd.columns.len(),
                max_defect: cd.max_defect(),
                defect_bound,
                defects: cd.columns.iter().map(Column::defect).collect(),
            }),
            moved_points: rw.moved,
            budget: Some(budget),
        });
        gamma_factors.push(rw.alpha_double_prime);
        rewirings.push(rw.s);
    }
    let gamma = FreeProductSystem::new(space, gamma_factors).stage("assemble")?;
    let final_discrepancy = weak_discrepancy(&gamma, beta, words, sets).stage("final_check")?;
    if final_discrepancy >= eps {
        return Err(Error::FinalDiscrepancyExceeded {
            value: final_discrepancy.to_string(),
            eps: eps.to_string(),
        }
        .at("final_check"));
    }
    let orbit_check = verify_orbit_equivalence(alpha, &gamma, &r).stage("orbit_check")?;
    if !orbit_check.equal {
        return Err(Error::BudgetViolated {
            component: "orbit equivalence".into(),
            value: format!("first mismatch at {:?}", orbit_check.first_mismatch),
            bound: "equal partitions".into(),
        }
        .at("orbit_check"));
    }
    let report = PipelineReport {
        n_points: space.n_points(),
        eps,
        eps_effective,
        target_shift,
        alphabet_size,
        eps_prime: ep,
        eps_prime_overridden: opts.eps_prime_override.is_some(),
        good_partition_attempts: gp.attempts,
        good_partition_seed: gp.seed_used,
        good_partition: gp.report,
        factors: factor_reports,
        final_discrepancy,
        orbit_check: orbit_check.clone(),
    };
    Ok(OeResult {
        gamma,
        witness: OeWitness {
            r,
            rewirings,
            orbit_check,
        },
        phi,
        psi: gp.psi,
        report,
    })
}
