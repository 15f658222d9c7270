//! Finitely generated abelian groups `Z^r ⊕ C`, box tiles, and free-product
//! words in normal form.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::RationalMass;

/// Default cap on tile cardinality.
pub const DEFAULT_TILE_CAP: u128 = 1 << 26;

/// `Z^rank ⊕ Z/c_1 ⊕ … ⊕ Z/c_m`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AbelianGroupSpec {
    pub rank: usize,
    #[serde(default)]
    pub torsion: Vec<u64>,
}

impl AbelianGroupSpec {
    pub fn new(rank: usize, torsion: Vec<u64>) -> Result<Self> {
        if let Some(&c) = torsion.iter().find(|&&c| c < 2) {
            return Err(Error::SpecMismatch(format!("torsion modulus {c} must be at least 2")));
        }
        Ok(AbelianGroupSpec { rank, torsion })
    }

    pub fn integers() -> Self {
        AbelianGroupSpec {
            rank: 1,
            torsion: Vec::new(),
        }
    }

    pub fn generator_count(&self) -> usize {
        self.rank + self.torsion.len()
    }

    pub fn is_finite(&self) -> bool {
        self.rank == 0
    }

    pub fn validate(&self) -> Result<()> {
        AbelianGroupSpec::new(self.rank, self.torsion.clone()).map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AbelianElement {
    pub free: Vec<i64>,
    #[serde(default)]
    pub torsion: Vec<u64>,
}

impl AbelianElement {
    pub fn identity(spec: &AbelianGroupSpec) -> Self {
        AbelianElement {
            free: vec![0; spec.rank],
            torsion: vec![0; spec.torsion.len()],
        }
    }

    /// Builds an element, reducing torsion residues.
    pub fn new(spec: &AbelianGroupSpec, free: Vec<i64>, torsion: Vec<i64>) -> Result<Self> {
        if free.len() != spec.rank || torsion.len() != spec.torsion.len() {
            return Err(Error::SpecMismatch(format!(
                "expected {} free and {} torsion coordinates",
                spec.rank,
                spec.torsion.len()
            )));
        }
        let torsion = torsion
            .iter()
            .zip(&spec.torsion)
            .map(|(&t, &c)| t.rem_euclid(c as i64) as u64)
            .collect();
        Ok(AbelianElement { free, torsion })
    }

    pub fn integer(k: i64) -> Self {
        AbelianElement {
            free: vec![k],
            torsion: Vec::new(),
        }
    }

    /// The `j`-th generator: free generators first, then torsion generators.
    pub fn generator(spec: &AbelianGroupSpec, j: usize) -> Result<Self> {
        let mut g = AbelianElement::identity(spec);
        if j < spec.rank {
            g.free[j] = 1;
        } else if j < spec.generator_count() {
            g.torsion[j - spec.rank] = 1;
        } else {
            return Err(Error::SpecMismatch(format!("no generator {j}")));
        }
        Ok(g)
    }

    pub fn check(&self, spec: &AbelianGroupSpec) -> Result<()> {
        let ok = self.free.len() == spec.rank
            && self.torsion.len() == spec.torsion.len()
            && self.torsion.iter().zip(&spec.torsion).all(|(&t, &c)| t < c);
        if ok {
            Ok(())
        } else {
            Err(Error::SpecMismatch(format!("{self} not in Z^{} ⊕ {:?}", spec.rank, spec.torsion)))
        }
    }

    pub fn is_identity(&self) -> bool {
        self.free.iter().all(|&v| v == 0) && self.torsion.iter().all(|&v| v == 0)
    }

    pub fn add(&self, other: &AbelianElement, spec: &AbelianGroupSpec) -> AbelianElement {
        AbelianElement {
            free: self.free.iter().zip(&other.free).map(|(a, b)| a + b).collect(),
            torsion: self
                .torsion
                .iter()
                .zip(&other.torsion)
                .zip(&spec.torsion)
                .map(|((a, b), c)| (a + b) % c)
                .collect(),
        }
    }

    pub fn neg(&self, spec: &AbelianGroupSpec) -> AbelianElement {
        AbelianElement {
            free: self.free.iter().map(|a| -a).collect(),
            torsion: self
                .torsion
                .iter()
                .zip(&spec.torsion)
                .map(|(a, c)| (c - a) % c)
                .collect(),
        }
    }

    pub fn sub(&self, other: &AbelianElement, spec: &AbelianGroupSpec) -> AbelianElement {
        self.add(&other.neg(spec), spec)
    }

    /// Exponent of each generator, free coordinates first.
    pub fn exponents(&self) -> Vec<i64> {
        self.free
            .iter()
            .copied()
            .chain(self.torsion.iter().map(|&t| t as i64))
            .collect()
    }
}

impl fmt::Display for AbelianElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        let mut first = true;
        for v in self.free.iter().map(|v| v.to_string()).chain(self.torsion.iter().map(|t| format!("{t}̄"))) {
            if !first {
                write!(f, ",")?;
            }
            first = false;
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

/// A box `∏ [lo_i, hi_i] ⊕ C`: an interval in every free coordinate and the
/// whole torsion part. Translates of a box by the lattice `∏ side_i Z ⊕ {0}`
/// partition the group.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Tile {
    spec: AbelianGroupSpec,
    lo: Vec<i64>,
    hi: Vec<i64>,
}

impl Tile {
    pub fn boxed(spec: &AbelianGroupSpec, lo: Vec<i64>, hi: Vec<i64>, cap: u128) -> Result<Self> {
        if lo.len() != spec.rank || hi.len() != spec.rank {
            return Err(Error::UnsupportedTile(format!("box needs {} bounds per side", spec.rank)));
        }
        if lo.iter().zip(&hi).any(|(l, h)| l > h) {
            return Err(Error::UnsupportedTile("empty box".into()));
        }
        let tile = Tile {
            spec: spec.clone(),
            lo,
            hi,
        };
        let size = tile.cardinality();
        if size > cap {
            return Err(Error::TileTooLarge { size, limit: cap });
        }
        Ok(tile)
    }

    /// Interval tile `[lo, hi]` in `Z`.
    pub fn interval(lo: i64, hi: i64) -> Result<Self> {
        Tile::boxed(&AbelianGroupSpec::integers(), vec![lo], vec![hi], DEFAULT_TILE_CAP)
    }

    pub fn spec(&self) -> &AbelianGroupSpec {
        &self.spec
    }

    pub fn lo(&self) -> &[i64] {
        &self.lo
    }

    pub fn hi(&self) -> &[i64] {
        &self.hi
    }

    pub fn sides(&self) -> Vec<u64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| (h - l + 1) as u64).collect()
    }

    fn cardinality(&self) -> u128 {
        self.sides()
            .iter()
            .map(|&s| s as u128)
            .chain(self.spec.torsion.iter().map(|&c| c as u128))
            .fold(1u128, |acc, s| acc.saturating_mul(s))
    }

    pub fn len(&self) -> usize {
        self.cardinality() as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Per-generator exponent ranges, free generators first; torsion
    /// generators cover `[0, c_j - 1]`.
    pub fn ranges(&self) -> Vec<(i64, i64)> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(&l, &h)| (l, h))
            .chain(self.spec.torsion.iter().map(|&c| (0, c as i64 - 1)))
            .collect()
    }

    pub fn contains(&self, g: &AbelianElement) -> bool {
        g.free.len() == self.lo.len()
            && g.free
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (l, h))| l <= v && v <= h)
    }

    /// Elements in canonical order: lexicographic on coordinates, first
    /// coordinate most significant.
    pub fn elements(&self) -> Vec<AbelianElement> {
        let ranges = self.ranges();
        let mut out = Vec::with_capacity(self.len());
        let mut cur: Vec<i64> = ranges.iter().map(|r| r.0).collect();
        loop {
            out.push(AbelianElement {
                free: cur[..self.spec.rank].to_vec(),
                torsion: cur[self.spec.rank..].iter().map(|&v| v as u64).collect(),
            });
            let mut k = ranges.len();
            loop {
                if k == 0 {
                    return out;
                }
                k -= 1;
                if cur[k] < ranges[k].1 {
                    cur[k] += 1;
                    break;
                }
                cur[k] = ranges[k].0;
            }
        }
    }

    /// Position of `g` in canonical order.
    pub fn index_of(&self, g: &AbelianElement) -> Option<usize> {
        if !self.contains(g) || g.torsion.len() != self.spec.torsion.len() {
            return None;
        }
        let mut idx = 0usize;
        for (v, (l, h)) in g.free.iter().zip(self.lo.iter().zip(&self.hi)) {
            idx = idx * (h - l + 1) as usize + (v - l) as usize;
        }
        for (&t, &c) in g.torsion.iter().zip(&self.spec.torsion) {
            if t >= c {
                return None;
            }
            idx = idx * c as usize + t as usize;
        }
        Some(idx)
    }

    pub fn identity_index(&self) -> Option<usize> {
        self.index_of(&AbelianElement::identity(&self.spec))
    }

    /// Membership flags of `T ∖ gT = {t ∈ T : t - g ∉ T}`, in canonical order.
    pub fn outside_translate(&self, g: &AbelianElement) -> Vec<bool> {
        self.elements()
            .iter()
            .map(|t| !self.contains(&t.sub(g, &self.spec)))
            .collect()
    }
}

/// The box `[-n, n]^r ⊕ C`, which contains the identity.
pub fn folner_tile(spec: &AbelianGroupSpec, n: u64, cap: u128) -> Result<Tile> {
    if n == 0 {
        return Err(Error::UnsupportedTile("folner tile index must be at least 1".into()));
    }
    spec.validate()?;
    let n = i64::try_from(n).map_err(|_| Error::TileTooLarge { size: u128::MAX, limit: cap })?;
    Tile::boxed(spec, vec![-n; spec.rank], vec![n; spec.rank], cap)
}

/// `|T △ gT| / |T|`, exact.
pub fn invariance_defect(t: &Tile, g: &AbelianElement) -> Result<RationalMass> {
    g.check(&t.spec)?;
    let size = t.len() as i128;
    let overlap: i128 = t
        .sides()
        .iter()
        .zip(&g.free)
        .map(|(&s, &v)| (s as i128 - v.unsigned_abs() as i128).max(0))
        .chain(t.spec.torsion.iter().map(|&c| c as i128))
        .product();
    Ok(RationalMass::ratio(2 * (size - overlap), size))
}

/// A free-product element in normal form: no identity letters and no two
/// adjacent letters from the same factor. Letters are applied right to left.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct FreeWord {
    letters: Vec<(usize, AbelianElement)>,
}

impl FreeWord {
    pub fn identity() -> Self {
        FreeWord::default()
    }

    pub fn letter(factors: &[AbelianGroupSpec], factor: usize, g: AbelianElement) -> Result<Self> {
        FreeWord::from_letters(factors, vec![(factor, g)])
    }

    /// Normalizes an arbitrary letter sequence.
    pub fn from_letters(factors: &[AbelianGroupSpec], letters: Vec<(usize, AbelianElement)>) -> Result<Self> {
        let mut out: Vec<(usize, AbelianElement)> = Vec::with_capacity(letters.len());
        for (factor, g) in letters {
            let spec = factors.get(factor).ok_or(Error::FactorIndexOutOfRange {
                index: factor,
                count: factors.len(),
            })?;
            g.check(spec)?;
            push_reduced(&mut out, factors, factor, g);
        }
        Ok(FreeWord { letters: out })
    }

    pub fn letters(&self) -> &[(usize, AbelianElement)] {
        &self.letters
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn multiply(&self, other: &FreeWord, factors: &[AbelianGroupSpec]) -> Result<FreeWord> {
        let mut out = self.letters.clone();
        for (factor, g) in &other.letters {
            if *factor >= factors.len() {
                return Err(Error::FactorIndexOutOfRange {
                    index: *factor,
                    count: factors.len(),
                });
            }
            push_reduced(&mut out, factors, *factor, g.clone());
        }
        Ok(FreeWord { letters: out })
    }

    pub fn invert(&self, factors: &[AbelianGroupSpec]) -> Result<FreeWord> {
        let mut letters = Vec::with_capacity(self.letters.len());
        for (factor, g) in self.letters.iter().rev() {
            let spec = factors.get(*factor).ok_or(Error::FactorIndexOutOfRange {
                index: *factor,
                count: factors.len(),
            })?;
            letters.push((*factor, g.neg(spec)));
        }
        Ok(FreeWord { letters })
    }

    pub fn is_normal(&self) -> bool {
        self.letters.iter().all(|(_, g)| !g.is_identity())
            && self.letters.windows(2).all(|w| w[0].0 != w[1].0)
    }
}

fn push_reduced(
    out: &mut Vec<(usize, AbelianElement)>,
    factors: &[AbelianGroupSpec],
    factor: usize,
    g: AbelianElement,
) {
    if g.is_identity() {
        return;
    }
    match out.last_mut() {
        Some((f, h)) if *f == factor => {
            let merged = h.add(&g, &factors[factor]);
            if merged.is_identity() {
                out.pop();
            } else {
                *h = merged;
            }
        }
        _ => out.push((factor, g)),
    }
}
