//! Labelings with an exact global distribution that is also close to the
//! target on most orbits of every factor at once.

use rand::distributions::{Distribution as _, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::actions::{orbit_decomposition, FreeProductSystem, OrbitDecomposition};
use crate::error::{Error, Result};
use crate::space::{Distribution, Labeling, RationalMass};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GoodPartitionOptions {
    /// Extra attempts after the first, each with the seed incremented.
    pub max_retries: u32,
    /// Run the count-preserving swap search after balancing.
    pub refine: bool,
    /// Cap on refinement passes over the bad orbits.
    pub refine_rounds: u32,
}

impl Default for GoodPartitionOptions {
    fn default() -> Self {
        GoodPartitionOptions {
            max_retries: 3,
            refine: true,
            refine_rounds: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HistogramBin {
    /// Upper edge of the bin as a multiple of eps; `None` is unbounded.
    pub upper_in_eps: Option<String>,
    pub mass: RationalMass,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FactorGoodness {
    pub factor: usize,
    pub orbits: usize,
    pub bad_mass: RationalMass,
    pub worst_deviation: RationalMass,
    pub histogram: Vec<HistogramBin>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GoodPartitionReport {
    pub eps: RationalMass,
    pub factors: Vec<FactorGoodness>,
    pub passed: bool,
}

impl GoodPartitionReport {
    pub fn worst_bad_mass(&self) -> RationalMass {
        self.factors
            .iter()
            .map(|f| f.bad_mass)
            .max()
            .unwrap_or_else(RationalMass::zero)
    }
}

#[derive(Debug, Clone)]
pub struct GoodPartition {
    pub psi: Labeling,
    pub attempts: u32,
    pub seed_used: u64,
    pub relabeled: usize,
    pub swaps: usize,
    pub report: GoodPartitionReport,
}

/// Exact label counts `N·pi(a)`, or an error if some are not integers.
pub fn target_counts(n: usize, pi: &Distribution) -> Result<Vec<usize>> {
    pi.masses()
        .iter()
        .zip(pi.alphabet())
        .map(|(m, a)| {
            let scaled = m.scale(n as u64);
            if scaled.denom() == 1 {
                Ok(scaled.numer() as usize)
            } else {
                Err(Error::InfeasiblePi {
                    n_points: n,
                    detail: format!("mass {m} of {a:?} is not a multiple of 1/{n}"),
                })
            }
        })
        .collect()
}

/// Sup-norm distance between the label distribution of `counts` and `pi`.
fn sup_deviation(counts: &[usize], size: usize, pi: &Distribution) -> RationalMass {
    counts
        .iter()
        .zip(pi.masses())
        .map(|(&c, &p)| RationalMass::ratio(c as i128, size as i128).abs_diff(p))
        .max()
        .unwrap_or_else(RationalMass::zero)
}

pub fn verify_good_partition(
    s: &FreeProductSystem,
    psi: &Labeling,
    pi: &Distribution,
    eps: RationalMass,
) -> Result<GoodPartitionReport> {
    let decomps: Vec<OrbitDecomposition> = s.factors().iter().map(orbit_decomposition).collect();
    verify_with(s, &decomps, psi, pi, eps)
}

fn verify_with(
    s: &FreeProductSystem,
    decomps: &[OrbitDecomposition],
    psi: &Labeling,
    pi: &Distribution,
    eps: RationalMass,
) -> Result<GoodPartitionReport> {
    s.space().check_same(&psi.space())?;
    if psi.alphabet() != pi.alphabet() {
        return Err(Error::AlphabetMismatch);
    }
    let space = s.space();
    let edges: Vec<(RationalMass, &str)> = vec![
        (RationalMass::zero(), "0"),
        (eps.div_int(2), "1/2"),
        (eps, "1"),
        (eps.scale(2), "2"),
        (eps.scale(4), "4"),
    ];
    let mut factors = Vec::with_capacity(decomps.len());
    for (i, d) in decomps.iter().enumerate() {
        let mut bins = vec![0usize; edges.len() + 1];
        let mut bad = 0usize;
        let mut worst = RationalMass::zero();
        for orbit in &d.orbits {
            let mut counts = vec![0usize; pi.alphabet().len()];
            for &y in orbit {
                counts[psi.label(y) as usize] += 1;
            }
            let dev = sup_deviation(&counts, orbit.len(), pi);
            worst = worst.max(dev);
            if dev > eps.scale(2) {
                bad += orbit.len();
            }
            let bin = edges.iter().position(|(e, _)| dev <= *e).unwrap_or(edges.len());
            bins[bin] += orbit.len();
        }
        let histogram = bins
            .iter()
            .enumerate()
            .map(|(k, &c)| HistogramBin {
                upper_in_eps: edges.get(k).map(|(_, name)| name.to_string()),
                mass: space.mass_of(c),
            })
            .collect();
        factors.push(FactorGoodness {
            factor: i,
            orbits: d.len(),
            bad_mass: space.mass_of(bad),
            worst_deviation: worst,
            histogram,
        });
    }
    let passed = factors.iter().all(|f| f.bad_mass < eps);
    Ok(GoodPartitionReport { eps, factors, passed })
}

/// Per-factor orbit label counts, kept in step with the labeling.
struct OrbitCounts<'a> {
    decomps: &'a [OrbitDecomposition],
    /// `counts[i][orbit * k + a]`
    counts: Vec<Vec<i64>>,
    pi: Vec<f64>,
    k: usize,
}

impl<'a> OrbitCounts<'a> {
    fn new(decomps: &'a [OrbitDecomposition], labels: &[u32], pi: &Distribution) -> Self {
        let k = pi.alphabet().len();
        let counts = decomps
            .iter()
            .map(|d| {
                let mut c = vec![0i64; d.len() * k];
                for (x, &l) in labels.iter().enumerate() {
                    c[d.orbit_id[x] * k + l as usize] += 1;
                }
                c
            })
            .collect();
        OrbitCounts {
            decomps,
            counts,
            pi: pi.masses().iter().map(RationalMass::to_f64).collect(),
            k,
        }
    }

    /// Signed excess of symbol `a` on orbit `o` of factor `i`, in points.
    fn excess(&self, i: usize, o: usize, a: usize) -> f64 {
        let size = self.decomps[i].orbits[o].len() as f64;
        self.counts[i][o * self.k + a] as f64 - size * self.pi[a]
    }

    fn relabel(&mut self, x: usize, from: usize, to: usize) {
        for (i, d) in self.decomps.iter().enumerate() {
            let o = d.orbit_id[x];
            self.counts[i][o * self.k + from] -= 1;
            self.counts[i][o * self.k + to] += 1;
        }
    }

    /// Change of `Σ excess² / |O|` if `x` is relabeled `from → to`.
    fn relabel_delta(&self, x: usize, from: usize, to: usize) -> f64 {
        let mut delta = 0.0;
        for (i, d) in self.decomps.iter().enumerate() {
            let o = d.orbit_id[x];
            let size = d.orbits[o].len() as f64;
            let ef = self.excess(i, o, from);
            let et = self.excess(i, o, to);
            delta += (2.0 - 2.0 * ef + 2.0 * et) / size;
        }
        delta
    }

    /// Change of the objective for swapping the labels of `x` (label `a`)
    /// and `y` (label `b`).
    fn swap_delta(&self, x: usize, a: usize, y: usize, b: usize) -> f64 {
        let mut delta = 0.0;
        for (i, d) in self.decomps.iter().enumerate() {
            let (ox, oy) = (d.orbit_id[x], d.orbit_id[y]);
            if ox == oy {
                continue;
            }
            let sx = d.orbits[ox].len() as f64;
            let sy = d.orbits[oy].len() as f64;
            delta += (2.0 - 2.0 * self.excess(i, ox, a) + 2.0 * self.excess(i, ox, b)) / sx;
            delta += (2.0 - 2.0 * self.excess(i, oy, b) + 2.0 * self.excess(i, oy, a)) / sy;
        }
        delta
    }

    /// Largest |excess|/|O| on the orbit and the most over- and
    /// under-represented symbols.
    fn orbit_state(&self, i: usize, o: usize) -> (f64, usize, usize) {
        let size = self.decomps[i].orbits[o].len() as f64;
        let (mut over, mut under) = (0, 0);
        let (mut hi, mut lo) = (f64::NEG_INFINITY, f64::INFINITY);
        for a in 0..self.k {
            let e = self.excess(i, o, a);
            if e > hi {
                hi = e;
                over = a;
            }
            if e < lo {
                lo = e;
                under = a;
            }
        }
        (hi.max(-lo) / size, over, under)
    }
}

/// Moves labels until every count equals its target, preferring points
/// whose orbits are over-represented in the old label and
/// under-represented in the new one.
fn rebalance(labels: &mut [u32], target: &[usize], oc: &mut OrbitCounts<'_>) -> usize {
    let k = target.len();
    let mut have = vec![0usize; k];
    for &l in labels.iter() {
        have[l as usize] += 1;
    }
    let mut moved = 0;
    for a in 0..k {
        while have[a] > target[a] {
            let b = (0..k).find(|&b| have[b] < target[b]).expect("counts sum to N");
            let m = (have[a] - target[a]).min(target[b] - have[b]);
            let mut cands: Vec<(f64, usize)> = labels
                .iter()
                .enumerate()
                .filter(|(_, &l)| l as usize == a)
                .map(|(x, _)| (oc.relabel_delta(x, a, b), x))
                .collect();
            cands.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)));
            for &(_, x) in cands.iter().take(m) {
                labels[x] = b as u32;
                oc.relabel(x, a, b);
            }
            have[a] -= m;
            have[b] += m;
            moved += m;
        }
    }
    moved
}

/// Count-preserving swaps that lower `Σ_i Σ_O Σ_a excess² / |O|`, driven
/// by orbits whose sup deviation exceeds `goal`.
fn refine(labels: &mut [u32], oc: &mut OrbitCounts<'_>, goal: f64, rounds: u32, rng: &mut ChaCha8Rng) -> usize {
    const X_CANDIDATES: usize = 16;
    const Y_CANDIDATES: usize = 64;
    let n = labels.len();
    let mut swaps = 0;
    for _ in 0..rounds {
        let mut improved = false;
        let mut any_bad = false;
        for i in 0..oc.decomps.len() {
            for o in 0..oc.decomps[i].len() {
                loop {
                    let (dev, a, b) = oc.orbit_state(i, o);
                    if dev <= goal || a == b {
                        break;
                    }
                    any_bad = true;
                    let xs: Vec<usize> = oc.decomps[i].orbits[o]
                        .iter()
                        .copied()
                        .filter(|&x| labels[x] as usize == a)
                        .take(X_CANDIDATES)
                        .collect();
                    let mut ys = Vec::with_capacity(Y_CANDIDATES);
                    for _ in 0..Y_CANDIDATES * oc.k * 4 {
                        if ys.len() == Y_CANDIDATES {
                            break;
                        }
                        let y = rng.gen_range(0..n);
                        if labels[y] as usize == b && oc.decomps[i].orbit_id[y] != o {
                            ys.push(y);
                        }
                    }
                    let mut best: Option<(f64, usize, usize)> = None;
                    for &x in &xs {
                        for &y in &ys {
                            let d = oc.swap_delta(x, a, y, b);
                            if d < -1e-12 && best.is_none_or(|(bd, _, _)| d < bd) {
                                best = Some((d, x, y));
                            }
                        }
                    }
                    let Some((_, x, y)) = best else { break };
                    labels[x] = b as u32;
                    labels[y] = a as u32;
                    oc.relabel(x, a, b);
                    oc.relabel(y, b, a);
                    swaps += 1;
                    improved = true;
                }
            }
        }
        if !any_bad || !improved {
            break;
        }
    }
    swaps
}

/// A labeling `psi` with `psi_*μ = pi` whose orbit distributions are within
/// `2·eps` of `pi` outside a set of mass below `eps`, for every factor.
///
/// Labels are drawn i.i.d. from `pi`, rebalanced to exact counts, refined by
/// swaps, and then verified exactly; failed attempts retry with the next seed.
pub fn good_partition(
    s: &FreeProductSystem,
    pi: &Distribution,
    eps: RationalMass,
    seed: u64,
    opts: &GoodPartitionOptions,
) -> Result<GoodPartition> {
    if eps.is_zero() {
        return Err(Error::Config("eps must be positive".into()));
    }
    let n = s.space().n_points();
    let target = target_counts(n, pi)?;
    let decomps: Vec<OrbitDecomposition> = s.factors().iter().map(orbit_decomposition).collect();
    let alphabet = pi.alphabet().to_vec();
    let weights: Vec<usize> = target.clone();
    let sampler = WeightedIndex::new(&weights).map_err(|e| Error::InfeasiblePi {
        n_points: n,
        detail: e.to_string(),
    })?;
    let goal = eps.to_f64();
    let mut worst = RationalMass::one();
    for attempt in 0..=opts.max_retries {
        let seed_used = seed.wrapping_add(attempt as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed_used);
        let mut labels: Vec<u32> = (0..n).map(|_| sampler.sample(&mut rng) as u32).collect();
        let mut oc = OrbitCounts::new(&decomps, &labels, pi);
        let relabeled = rebalance(&mut labels, &target, &mut oc);
        let swaps = if opts.refine {
            refine(&mut labels, &mut oc, goal, opts.refine_rounds, &mut rng)
        } else {
            0
        };
        let psi = Labeling::new(s.space(), alphabet.clone(), labels)?;
        let report = verify_with(s, &decomps, &psi, pi, eps)?;
        log::debug!(
            "good partition attempt {attempt}: relabeled {relabeled}, swaps {swaps}, worst bad mass {}",
            report.worst_bad_mass()
        );
        if report.passed {
            return Ok(GoodPartition {
                psi,
                attempts: attempt + 1,
                seed_used,
                relabeled,
                swaps,
                report,
            });
        }
        worst = worst.min(report.worst_bad_mass());
    }
    Err(Error::VerificationFailed {
        attempts: opts.max_retries + 1,
        worst: worst.to_string(),
    })
}
