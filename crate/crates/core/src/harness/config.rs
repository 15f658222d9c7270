//! JSON run configuration.

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::groups::{AbelianElement, AbelianGroupSpec, FreeWord, DEFAULT_TILE_CAP};
use crate::space::RationalMass;

/// Accepts `"p/q"`, `"0.2"`, a JSON number, or `{"num": p, "den": q}`.
fn rational_from_value<E: serde::de::Error>(v: serde_json::Value) -> std::result::Result<RationalMass, E> {
    match v {
        serde_json::Value::String(s) => RationalMass::parse(&s).map_err(E::custom),
        serde_json::Value::Number(n) => RationalMass::parse(&n.to_string()).map_err(E::custom),
        serde_json::Value::Object(m) => {
            let get = |k: &str| m.get(k).and_then(serde_json::Value::as_i64);
            match (get("num"), get("den")) {
                (Some(p), Some(q)) => RationalMass::new(p as i128, q as i128).map_err(E::custom),
                _ => Err(E::custom("rational object needs integer num and den")),
            }
        }
        other => Err(E::custom(format!("expected a rational, got {other}"))),
    }
}

fn de_rational<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<RationalMass, D::Error> {
    rational_from_value(serde_json::Value::deserialize(d)?)
}

fn de_rational_opt<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<RationalMass>, D::Error> {
    match serde_json::Value::deserialize(d)? {
        serde_json::Value::Null => Ok(None),
        v => rational_from_value(v).map(Some),
    }
}

fn one() -> usize {
    1
}

/// Generator templates. All maps act on points `0..N`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Template {
    /// Generator `j` is `x ↦ x + steps[j] mod N`.
    Rotation { steps: Vec<i64> },
    /// `x ↦ x + 1` inside consecutive blocks of length `block`.
    BlockRotation { block: usize },
    /// Unit shifts on the coordinates of `Z/d_1 × ⋯ × Z/d_r`, first
    /// coordinate most significant.
    GridShift { dims: Vec<usize> },
    /// One permutation whose cycles are consecutive runs of the given lengths.
    Cycles { lengths: Vec<usize> },
    /// Cyclic shift of words of length `length` over `alphabet` letters.
    BernoulliNames { alphabet: usize, length: usize },
    /// Uniformly random permutation.
    Random {
        #[serde(default)]
        salt: u64,
    },
    Explicit { generators: Vec<Vec<usize>> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorConfig {
    /// Defaults to `Z^r` with `r` the number of generators.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<AbelianGroupSpec>,
    pub template: Template,
    /// Conjugates the template by `x ↦ u·x mod N`.
    #[serde(default = "one")]
    pub scramble: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SetConfig {
    Periodic { modulus: usize, residues: Vec<usize> },
    /// Half-open `[lo, hi)`.
    Interval { lo: usize, hi: usize },
    Explicit { points: Vec<usize> },
    Random {
        #[serde(deserialize_with = "de_rational")]
        density: RationalMass,
        #[serde(default)]
        salt: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WordConfig {
    /// Text form, see [`parse_word`].
    Text(String),
    Letters(Vec<LetterConfig>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LetterConfig {
    pub factor: usize,
    #[serde(default)]
    pub free: Vec<i64>,
    #[serde(default)]
    pub torsion: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WordsConfig {
    /// Only `"generators"`: every generator of every factor.
    Named(String),
    List(Vec<WordConfig>),
}

impl Default for WordsConfig {
    fn default() -> Self {
        WordsConfig::Named("generators".into())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageOptions {
    #[serde(default, deserialize_with = "de_rational_opt", skip_serializing_if = "Option::is_none")]
    pub eps_prime_override: Option<RationalMass>,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_tile_cap")]
    pub tile_cap: u64,
    #[serde(default, deserialize_with = "de_rational_opt", skip_serializing_if = "Option::is_none")]
    pub ergodize_budget: Option<RationalMass>,
    #[serde(default = "yes")]
    pub refine: bool,
    /// Run the construction on factors `0..k` only and extend by conjugation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain_k: Option<usize>,
}

fn default_retries() -> u32 {
    3
}

fn default_tile_cap() -> u64 {
    DEFAULT_TILE_CAP as u64
}

fn yes() -> bool {
    true
}

impl Default for StageOptions {
    fn default() -> Self {
        StageOptions {
            eps_prime_override: None,
            max_retries: default_retries(),
            tile_cap: default_tile_cap(),
            ergodize_budget: None,
            refine: true,
            chain_k: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub n_points: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(deserialize_with = "de_rational")]
    pub epsilon: RationalMass,
    pub alpha: Vec<FactorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<FactorConfig>>,
    #[serde(default)]
    pub words: WordsConfig,
    pub sets: Vec<SetConfig>,
    #[serde(default)]
    pub options: StageOptions,
}

/// Command-line overrides applied on top of a parsed config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub epsilon: Option<RationalMass>,
    pub n_points: Option<usize>,
    pub eps_prime: Option<RationalMass>,
    pub max_retries: Option<u32>,
}

/// Largest space the harness will build.
pub const MAX_POINTS: usize = 1 << 24;

impl RunConfig {
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(e) = o.epsilon {
            self.epsilon = e;
        }
        if let Some(n) = o.n_points {
            self.n_points = n;
        }
        if let Some(e) = o.eps_prime {
            self.options.eps_prime_override = Some(e);
        }
        if let Some(r) = o.max_retries {
            self.options.max_retries = r;
        }
    }

    /// Checks everything that can be checked without building the instance.
    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.n_points == 0 || self.n_points > MAX_POINTS {
            return cfg(format!("n_points must lie in 1..={MAX_POINTS}, got {}", self.n_points));
        }
        if self.epsilon.is_zero() || self.epsilon >= RationalMass::one() {
            return cfg(format!("epsilon must lie in (0, 1), got {}", self.epsilon));
        }
        let Some(beta) = &self.beta else {
            return cfg("missing beta".into());
        };
        if self.alpha.is_empty() {
            return cfg("alpha needs at least one factor".into());
        }
        if beta.len() != self.alpha.len() {
            return cfg(format!("alpha has {} factors, beta has {}", self.alpha.len(), beta.len()));
        }
        if self.sets.is_empty() {
            return cfg("at least one target set is required".into());
        }
        if let Some(e) = self.options.eps_prime_override {
            if e.is_zero() {
                return cfg("eps_prime_override must be positive".into());
            }
        }
        if let Some(k) = self.options.chain_k {
            if k == 0 || k > self.alpha.len() {
                return cfg(format!("chain_k must lie in 1..={}", self.alpha.len()));
            }
        }
        if let WordsConfig::Named(name) = &self.words {
            if name != "generators" {
                return cfg(format!("unknown word family {name:?}"));
            }
        }
        Ok(())
    }
}

impl RunConfig {
    /// Parses without validating, so overrides can be applied first.
    pub fn from_json(text: &str) -> Result<RunConfig> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}

/// Parses and validates a JSON config.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg = RunConfig::from_json(text)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Parses a word such as `"0:1 1:-2"` or `"0:1,0 * 2:3"`. Each letter is
/// `factor:exponents`, listing free exponents then torsion exponents;
/// letters are separated by spaces or `*`. `"e"` is the identity.
pub fn parse_word(text: &str, specs: &[AbelianGroupSpec]) -> Result<FreeWord> {
    let bad = |m: &str| Error::Config(format!("word {text:?}: {m}"));
    let t = text.trim();
    if t == "e" || t.is_empty() {
        return Ok(FreeWord::identity());
    }
    let mut letters = Vec::new();
    for tok in t.split(|c: char| c.is_whitespace() || c == '*').filter(|s| !s.is_empty()) {
        let (f, exps) = tok.split_once(':').ok_or_else(|| bad("letters look like factor:exponents"))?;
        let f: usize = f.parse().map_err(|_| bad("bad factor index"))?;
        let spec = specs.get(f).ok_or_else(|| bad("factor index out of range"))?;
        let exps: Vec<i64> = exps
            .split(',')
            .map(|e| e.trim().parse::<i64>().map_err(|_| bad("bad exponent")))
            .collect::<Result<_>>()?;
        if exps.len() != spec.generator_count() {
            return Err(bad("exponent count does not match the factor"));
        }
        let (free, torsion) = exps.split_at(spec.rank);
        letters.push((f, AbelianElement::new(spec, free.to_vec(), torsion.to_vec())?));
    }
    FreeWord::from_letters(specs, letters)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "n_points": 100,
        "epsilon": "1/5",
        "alpha": [{"template": {"kind": "rotation", "steps": [1]}}],
        "beta": [{"template": {"kind": "rotation", "steps": [3]}}],
        "sets": [{"kind": "periodic", "modulus": 2, "residues": [0]}]
    }"#;

    #[test]
    fn parses_minimal() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.epsilon, RationalMass::ratio(1, 5));
        assert_eq!(c.options.max_retries, 3);
        assert_eq!(c.words, WordsConfig::Named("generators".into()));
        let again = parse_config(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn rational_forms() {
        for (s, want) in [("0.2", (1, 5)), ("\"0.25\"", (1, 4)), ("{\"num\": 3, \"den\": 9}", (1, 3))] {
            let text = MINIMAL.replace("\"1/5\"", s);
            assert_eq!(parse_config(&text).unwrap().epsilon, RationalMass::ratio(want.0, want.1));
        }
    }

    #[test]
    fn rejects_bad_configs() {
        for (from, to) in [
            ("\"1/5\"", "0"),
            ("\"1/5\"", "\"1\""),
            ("\"n_points\": 100", "\"n_points\": 0"),
            ("\"n_points\": 100", "\"n_points\": 100, \"colour\": 1"),
        ] {
            let text = MINIMAL.replace(from, to);
            assert!(matches!(parse_config(&text), Err(Error::Config(_))), "{text}");
        }
        let no_beta: serde_json::Value = {
            let mut v: serde_json::Value = serde_json::from_str(MINIMAL).unwrap();
            v.as_object_mut().unwrap().remove("beta");
            v
        };
        let err = parse_config(&no_beta.to_string()).unwrap_err();
        assert!(err.to_string().contains("beta"));
    }

    #[test]
    fn words() {
        let specs = vec![AbelianGroupSpec::integers(), AbelianGroupSpec::new(1, vec![3]).unwrap()];
        let w = parse_word("0:2 * 1:-1,4", &specs).unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(w.letters()[1].1.torsion, vec![1]);
        assert!(parse_word("e", &specs).unwrap().is_identity());
        assert!(parse_word("2:1", &specs).is_err());
        assert!(parse_word("1:1", &specs).is_err());
        assert!(parse_word("0:x", &specs).is_err());
    }
}
