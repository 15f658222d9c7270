//! Instance generation: systems from templates, target sets, word lists.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::actions::{freeness_defect, orbit_decomposition, FactorAction, FreeProductSystem};
use crate::error::{Error, Result};
use crate::groups::{folner_tile, AbelianElement, AbelianGroupSpec, FreeWord};
use crate::harness::config::{parse_word, FactorConfig, LetterConfig, SetConfig, Template, WordConfig, WordsConfig};
use crate::space::{FiniteSpace, Permutation, PointSet, RationalMass};

/// Mixes a run seed with a stream tag so that each random draw in the
/// harness has its own reproducible stream.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn cfg_err(m: impl Into<String>) -> Error {
    Error::Config(m.into())
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn template_generators(t: &Template, space: FiniteSpace, rng_seed: u64) -> Result<Vec<Permutation>> {
    let n = space.n_points();
    match t {
        Template::Rotation { steps } => {
            if steps.is_empty() {
                return Err(cfg_err("rotation needs at least one step"));
            }
            steps
                .iter()
                .map(|&a| {
                    let a = a.rem_euclid(n as i64) as usize;
                    Permutation::from_fn(space, |x| (x + a) % n)
                })
                .collect()
        }
        Template::BlockRotation { block } => {
            if *block == 0 || n % block != 0 {
                return Err(cfg_err(format!("block {block} does not divide {n}")));
            }
            let b = *block;
            Ok(vec![Permutation::from_fn(space, |x| x / b * b + (x % b + 1) % b)?])
        }
        Template::GridShift { dims } => {
            let total = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
            if dims.is_empty() || dims.contains(&0) || total != Some(n) {
                return Err(cfg_err(format!("grid dims {dims:?} do not multiply to {n}")));
            }
            let mut gens = Vec::with_capacity(dims.len());
            let mut stride = n;
            for &d in dims {
                stride /= d;
                let s = stride;
                gens.push(Permutation::from_fn(space, |x| {
                    let c = x / s % d;
                    x - c * s + (c + 1) % d * s
                })?);
            }
            Ok(gens)
        }
        Template::Cycles { lengths } => {
            if lengths.contains(&0) || lengths.iter().try_fold(0usize, |a, &l| a.checked_add(l)) != Some(n) {
                return Err(cfg_err(format!("cycle lengths do not sum to {n}")));
            }
            let mut fwd = vec![0usize; n];
            let mut start = 0;
            for &l in lengths {
                for k in 0..l {
                    fwd[start + k] = start + (k + 1) % l;
                }
                start += l;
            }
            Ok(vec![Permutation::from_forward(fwd)?])
        }
        Template::BernoulliNames { alphabet, length } => {
            let k = *alphabet;
            let size = u32::try_from(*length).ok().and_then(|l| k.checked_pow(l));
            if k < 2 || *length == 0 || size != Some(n) {
                return Err(cfg_err(format!("{k}^{length} is not {n}")));
            }
            // x has base-k digits d_0 … d_{L-1}, most significant first;
            // the shift moves d_0 to the end
            let top = n / k;
            Ok(vec![Permutation::from_fn(space, |x| x % top * k + x / top)?])
        }
        Template::Random { salt } => {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(rng_seed, *salt));
            let mut v: Vec<usize> = (0..n).collect();
            v.shuffle(&mut rng);
            Ok(vec![Permutation::from_forward(v)?])
        }
        Template::Explicit { generators } => {
            if generators.is_empty() {
                return Err(cfg_err("explicit factor needs a generator"));
            }
            generators
                .iter()
                .map(|g| {
                    if g.len() != n {
                        return Err(cfg_err(format!("generator has {} entries, expected {n}", g.len())));
                    }
                    Permutation::from_forward(g.clone())
                })
                .collect()
        }
    }
}

/// Builds one factor. `rng_seed` is only read by random templates.
pub fn generate_factor(fc: &FactorConfig, space: FiniteSpace, rng_seed: u64) -> Result<FactorAction> {
    let n = space.n_points();
    let mut gens = template_generators(&fc.template, space, rng_seed)?;
    if fc.scramble != 1 {
        let u = fc.scramble % n.max(1);
        if gcd(u, n) != 1 {
            return Err(cfg_err(format!("scramble {} is not a unit mod {n}", fc.scramble)));
        }
        let r = Permutation::from_fn(space, |x| ((x as u128 * u as u128) % n as u128) as usize)?;
        gens = gens.iter().map(|g| g.conjugate_by(&r)).collect::<Result<_>>()?;
    }
    let spec = match &fc.spec {
        Some(s) => s.clone(),
        None => AbelianGroupSpec::new(gens.len(), vec![])?,
    };
    FactorAction::new(spec, space, gens).map_err(|e| cfg_err(format!("factor template: {e}")))
}

/// Builds a system. `side` separates the random streams of different systems.
pub fn generate_system(factors: &[FactorConfig], n_points: usize, seed: u64, side: u64) -> Result<FreeProductSystem> {
    let space = FiniteSpace::new(n_points)?;
    let fs = factors
        .iter()
        .enumerate()
        .map(|(i, fc)| generate_factor(fc, space, derive_seed(seed, side << 32 | i as u64)))
        .collect::<Result<Vec<_>>>()?;
    FreeProductSystem::new(space, fs)
}

pub fn generate_set(sc: &SetConfig, space: FiniteSpace, rng_seed: u64) -> Result<PointSet> {
    let n = space.n_points();
    match sc {
        SetConfig::Periodic { modulus, residues } => {
            if *modulus == 0 || residues.iter().any(|&r| r >= *modulus) {
                return Err(cfg_err("periodic set needs residues below a positive modulus"));
            }
            let mut keep = vec![false; *modulus];
            for &r in residues {
                keep[r] = true;
            }
            PointSet::new(space, (0..n).filter(|x| keep[x % modulus]))
        }
        SetConfig::Interval { lo, hi } => {
            if lo > hi || *hi > n {
                return Err(cfg_err(format!("interval [{lo}, {hi}) is not inside 0..{n}")));
            }
            PointSet::new(space, *lo..*hi)
        }
        SetConfig::Explicit { points } => PointSet::new(space, points.iter().copied()).map_err(|e| cfg_err(e.to_string())),
        SetConfig::Random { density, salt } => {
            if *density > RationalMass::one() {
                return Err(cfg_err("density above 1"));
            }
            let (p, q) = (density.numer() as u128, density.denom() as u128);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(rng_seed, *salt));
            let mask: Vec<bool> = (0..n).map(|_| rng.gen_range(0..q) < p).collect();
            PointSet::from_mask(space, &mask)
        }
    }
}

pub fn generate_sets(sets: &[SetConfig], space: FiniteSpace, seed: u64) -> Result<Vec<PointSet>> {
    sets.iter()
        .enumerate()
        .map(|(j, s)| generate_set(s, space, derive_seed(seed, 1 << 40 | j as u64)))
        .collect()
}

fn letter_word(l: &LetterConfig, specs: &[AbelianGroupSpec]) -> Result<FreeWord> {
    let spec = specs
        .get(l.factor)
        .ok_or_else(|| cfg_err(format!("letter on factor {} of {}", l.factor, specs.len())))?;
    let free = if l.free.is_empty() { vec![0; spec.rank] } else { l.free.clone() };
    let torsion = if l.torsion.is_empty() { vec![0; spec.torsion.len()] } else { l.torsion.clone() };
    let g = AbelianElement::new(spec, free, torsion).map_err(|e| cfg_err(e.to_string()))?;
    FreeWord::letter(specs, l.factor, g)
}

/// The word list `F`.
pub fn build_words(w: &WordsConfig, specs: &[AbelianGroupSpec]) -> Result<Vec<FreeWord>> {
    match w {
        WordsConfig::Named(_) => {
            let mut out = Vec::new();
            for (i, spec) in specs.iter().enumerate() {
                for j in 0..spec.generator_count() {
                    out.push(FreeWord::letter(specs, i, AbelianElement::generator(spec, j)?)?);
                }
            }
            Ok(out)
        }
        WordsConfig::List(list) => list
            .iter()
            .map(|wc| match wc {
                WordConfig::Text(t) => parse_word(t, specs),
                WordConfig::Letters(ls) => {
                    let mut acc = FreeWord::identity();
                    for l in ls {
                        acc = acc.multiply(&letter_word(l, specs)?, specs)?;
                    }
                    Ok(acc)
                }
            })
            .collect(),
    }
}

/// Nonidentity elements of `D_2`, the window on which generated systems
/// report their freeness.
pub fn default_window(spec: &AbelianGroupSpec) -> Result<Vec<AbelianElement>> {
    Ok(folner_tile(spec, 2, 1 << 20)?
        .elements()
        .into_iter()
        .filter(|g| !g.is_identity())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FactorSummary {
    pub factor: usize,
    pub spec: AbelianGroupSpec,
    pub orbits: usize,
    pub min_orbit: usize,
    pub transitive: bool,
    pub freeness_defect: RationalMass,
}

pub fn summarize(s: &FreeProductSystem) -> Result<Vec<FactorSummary>> {
    s.factors()
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let d = orbit_decomposition(f);
            Ok(FactorSummary {
                factor: i,
                spec: f.spec().clone(),
                orbits: d.len(),
                min_orbit: d.min_orbit_len(),
                transitive: d.len() == 1,
                freeness_defect: freeness_defect(f, &default_window(f.spec())?)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actions::system_orbits;

    fn fc(t: Template) -> FactorConfig {
        FactorConfig {
            spec: None,
            template: t,
            scramble: 1,
        }
    }

    #[test]
    fn rotation_is_transitive_and_free() {
        let s = generate_system(&[fc(Template::Rotation { steps: vec![1] })], 50, 0, 0).unwrap();
        let sum = summarize(&s).unwrap();
        assert!(sum[0].transitive);
        assert!(sum[0].freeness_defect.is_zero());
    }

    #[test]
    fn two_rotations_on_ten() {
        let s = generate_system(
            &[fc(Template::Rotation { steps: vec![1] }), fc(Template::Rotation { steps: vec![3] })],
            10,
            0,
            0,
        )
        .unwrap();
        assert!(summarize(&s).unwrap().iter().all(|f| f.orbits == 1));
    }

    #[test]
    fn coprime_grid_is_transitive() {
        let s = generate_system(&[fc(Template::GridShift { dims: vec![12, 12] })], 144, 0, 0).unwrap();
        let f = &s.factors()[0];
        assert_eq!(f.spec().rank, 2);
        assert!(f.is_transitive());
        assert_eq!(system_orbits(&s).len(), 1);
    }

    #[test]
    fn templates_validate() {
        let space = FiniteSpace::new(12).unwrap();
        for t in [
            Template::BlockRotation { block: 5 },
            Template::GridShift { dims: vec![5, 2] },
            Template::Cycles { lengths: vec![5, 5] },
            Template::BernoulliNames { alphabet: 2, length: 3 },
            Template::Explicit { generators: vec![vec![0, 1]] },
        ] {
            assert!(matches!(generate_factor(&fc(t), space, 0), Err(Error::Config(_))));
        }
        let mut bad = fc(Template::Rotation { steps: vec![1] });
        bad.scramble = 4;
        assert!(generate_factor(&bad, space, 0).is_err());
    }

    #[test]
    fn bernoulli_names_rotate_words() {
        let space = FiniteSpace::new(8).unwrap();
        let f = generate_factor(&fc(Template::BernoulliNames { alphabet: 2, length: 3 }), space, 0).unwrap();
        // 0b110 -> 0b101
        assert_eq!(f.generator(0).apply(6), 5);
        // necklaces of length 3 over two letters
        assert_eq!(orbit_decomposition(&f).len(), 4);
    }

    #[test]
    fn scrambled_blocks_keep_cycle_lengths() {
        let space = FiniteSpace::new(100).unwrap();
        let mut c = fc(Template::BlockRotation { block: 25 });
        c.scramble = 7;
        let f = generate_factor(&c, space, 0).unwrap();
        let d = orbit_decomposition(&f);
        assert_eq!(d.len(), 4);
        assert!(d.orbits.iter().all(|o| o.len() == 25));
        // 0 ↦ 7 under the scrambled block rotation
        assert_eq!(f.generator(0).apply(0), 7);
    }

    #[test]
    fn random_sets_reproduce() {
        let space = FiniteSpace::new(500).unwrap();
        let sc = SetConfig::Random {
            density: RationalMass::ratio(1, 3),
            salt: 2,
        };
        let a = generate_set(&sc, space, 9).unwrap();
        assert_eq!(a, generate_set(&sc, space, 9).unwrap());
        assert_ne!(a, generate_set(&sc, space, 10).unwrap());
        assert!(a.len() > 100 && a.len() < 240);
    }

    #[test]
    fn generator_words() {
        let specs = vec![AbelianGroupSpec::new(2, vec![]).unwrap(), AbelianGroupSpec::integers()];
        let w = build_words(&WordsConfig::default(), &specs).unwrap();
        assert_eq!(w.len(), 3);
        let list = WordsConfig::List(vec![
            WordConfig::Text("1:2".into()),
            WordConfig::Letters(vec![LetterConfig {
                factor: 0,
                free: vec![0, 1],
                torsion: vec![],
            }]),
        ]);
        let w = build_words(&list, &specs).unwrap();
        assert_eq!(w[1], FreeWord::letter(&specs, 0, AbelianElement::generator(&specs[0], 1).unwrap()).unwrap());
    }
}
