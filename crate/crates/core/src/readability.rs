//! Complexity and readability statistics.
//!
//! Each formula's coefficients come from a [`FormulaRegistry`], so they
//! can be audited or recalibrated without code changes. The bundled
//! registry carries the published coefficient sets with a source note per
//! entry. The Spanish-calibrated formulas (Fernandez Huerta, Szigriszt,
//! Gutierrez, mu, minimum age, SOL) are applied unchanged to any language.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::annotate::{AnnotatedDoc, Pos};
use crate::error::{Error, Result};

const BUNDLED_REGISTRY: &str = include_str!("../data/readability_registry.jsonl");
const BUNDLED_COMMON_WORDS: &str = include_str!("../data/common_words.txt");

pub const METRIC_NAMES: [&str; 12] = [
    "lexical_complexity",
    "spaulding",
    "sentence_complexity",
    "ari",
    "dep_tree_height_mean",
    "punctuation_marks",
    "fernandez_huerta",
    "flesch_szigriszt",
    "gutierrez",
    "mu_readability",
    "min_age",
    "sol",
];

/// Coefficient keys each formula must carry.
fn required_keys(name: &str) -> &'static [&'static str] {
    match name {
        "lexical_complexity" => &[
            "distribution_weight",
            "low_frequency_weight",
            "low_frequency_scale",
        ],
        "spaulding" => &["words_per_sentence", "rare_word_proportion", "intercept"],
        "sentence_complexity" => &["words_per_sentence"],
        "ari" => &["letters_per_word", "words_per_sentence", "intercept"],
        "fernandez_huerta" => &[
            "intercept",
            "syllables_per_100_words",
            "sentences_per_100_words",
        ],
        "flesch_szigriszt" => &["intercept", "syllables_per_word", "words_per_sentence"],
        "gutierrez" => &["intercept", "letters_per_word", "words_per_sentence"],
        "mu_readability" => &["scale"],
        "min_age" => &["intercept", "words_per_sentence", "syllables_per_word"],
        "sol" => &[
            "polysyllable_min_syllables",
            "smog_sample_sentences",
            "smog_intercept",
            "smog_slope",
            "intercept",
            "smog_weight",
        ],
        _ => &[],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Formula {
    pub name: String,
    pub coefficients: BTreeMap<String, f64>,
    pub source: String,
}

#[derive(Debug, Clone)]
pub struct FormulaRegistry {
    formulas: BTreeMap<String, Formula>,
    common_words: Option<HashSet<String>>,
}

impl FormulaRegistry {
    /// The registry and common-word list shipped with the crate.
    pub fn bundled() -> Self {
        let formulas = parse_registry(BUNDLED_REGISTRY).expect("bundled registry is valid");
        FormulaRegistry::new(formulas, Some(parse_word_list(BUNDLED_COMMON_WORDS)))
            .expect("bundled registry is complete")
    }

    pub fn new(formulas: Vec<Formula>, common_words: Option<HashSet<String>>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for f in formulas {
            if !METRIC_NAMES.contains(&f.name.as_str()) {
                return Err(Error::Config(format!("unknown readability formula {:?}", f.name)));
            }
            if f.source.trim().is_empty() {
                return Err(Error::Config(format!("formula {:?} lacks a source note", f.name)));
            }
            for key in required_keys(&f.name) {
                match f.coefficients.get(*key) {
                    Some(v) if v.is_finite() => {}
                    _ => {
                        return Err(Error::Config(format!(
                            "formula {:?} is missing coefficient {key:?}",
                            f.name
                        )))
                    }
                }
            }
            if map.insert(f.name.clone(), f).is_some() {
                return Err(Error::Config("duplicate readability formula".into()));
            }
        }
        if let Some(missing) = METRIC_NAMES.iter().find(|n| !map.contains_key(**n)) {
            return Err(Error::Config(format!("registry lacks formula {missing:?}")));
        }
        Ok(FormulaRegistry {
            formulas: map,
            common_words,
        })
    }

    /// Load a registry file (one JSON object per line) and an optional
    /// newline-separated common-word list.
    pub fn load(registry: &Path, common_words: Option<&Path>) -> Result<Self> {
        let text = fs::read_to_string(registry).map_err(|e| Error::io(registry, e))?;
        let words = common_words
            .map(|p| {
                fs::read_to_string(p)
                    .map(|s| parse_word_list(&s))
                    .map_err(|e| Error::io(p, e))
            })
            .transpose()?;
        FormulaRegistry::new(parse_registry(&text)?, words)
    }

    pub fn without_word_list(mut self) -> Self {
        self.common_words = None;
        self
    }

    pub fn formula(&self, name: &str) -> Option<&Formula> {
        self.formulas.get(name)
    }

    fn coef(&self, name: &str, key: &str) -> f64 {
        self.formulas[name].coefficients[key]
    }

    pub fn common_words(&self) -> Option<&HashSet<String>> {
        self.common_words.as_ref()
    }
}

fn parse_registry(text: &str) -> Result<Vec<Formula>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

fn parse_word_list(text: &str) -> HashSet<String> {
    text.lines()
        .map(|l| l.trim().to_lowercase())
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect()
}

/// Surface counts the formulas are evaluated on.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TextStats {
    pub words: usize,
    pub sentences: usize,
    pub syllables: usize,
    pub letters: usize,
    /// Words with at least the registry's polysyllable threshold.
    pub polysyllables: usize,
    /// Words absent from the common-word list, if one was available.
    pub rare_words: Option<usize>,
    pub content_words: usize,
    pub distinct_content_words: usize,
    pub low_frequency_content_words: usize,
    pub word_length_mean: f64,
    pub word_length_variance: f64,
    pub punctuation: usize,
    pub dep_tree_height_mean: f64,
}

impl TextStats {
    pub fn from_doc(doc: &AnnotatedDoc, registry: &FormulaRegistry) -> Self {
        let poly_min = registry.coef("sol", "polysyllable_min_syllables") as usize;
        let common = registry.common_words();
        let is_rare = |w: &str| common.map(|c| !c.contains(&w.to_lowercase()));

        let words: Vec<_> = doc.words().collect();
        let n = words.len();
        let lengths: Vec<f64> = words.iter().map(|t| t.letters as f64).collect();
        let mean = if n == 0 { 0.0 } else { lengths.iter().sum::<f64>() / n as f64 };
        // sample variance, matching the n/(n-1) correction in mu
        let variance = if n < 2 {
            0.0
        } else {
            lengths.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / (n - 1) as f64
        };

        let content: Vec<_> = words.iter().filter(|t| t.pos.is_content()).collect();
        let distinct_content: HashSet<&str> = content.iter().map(|t| t.lemma.as_str()).collect();
        let low_freq = content
            .iter()
            .filter(|t| is_rare(&t.surface).unwrap_or(false))
            .count();
        let rare_words = common.map(|_| {
            words
                .iter()
                .filter(|t| is_rare(&t.surface).unwrap_or(false))
                .count()
        });

        let heights = &doc.dep_tree_heights;
        TextStats {
            words: n,
            sentences: doc.sentence_count(),
            syllables: words.iter().map(|t| t.syllables).sum(),
            letters: words.iter().map(|t| t.letters).sum(),
            polysyllables: words.iter().filter(|t| t.syllables >= poly_min).count(),
            rare_words,
            content_words: content.len(),
            distinct_content_words: distinct_content.len(),
            low_frequency_content_words: low_freq,
            word_length_mean: mean,
            word_length_variance: variance,
            punctuation: doc
                .tokens
                .iter()
                .filter(|t| t.pos == Pos::Punct)
                .count()
                .max(doc.punctuation_count),
            dep_tree_height_mean: if heights.is_empty() {
                0.0
            } else {
                heights.iter().sum::<usize>() as f64 / heights.len() as f64
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ReadabilityScores {
    pub lexical_complexity: f64,
    pub spaulding: f64,
    pub sentence_complexity: f64,
    pub ari: f64,
    pub dep_tree_height_mean: f64,
    pub punctuation_marks: f64,
    pub fernandez_huerta: f64,
    pub flesch_szigriszt: f64,
    pub gutierrez: f64,
    pub mu_readability: f64,
    pub min_age: f64,
    pub sol: f64,
}

impl ReadabilityScores {
    pub fn to_array(&self) -> [f64; 12] {
        [
            self.lexical_complexity,
            self.spaulding,
            self.sentence_complexity,
            self.ari,
            self.dep_tree_height_mean,
            self.punctuation_marks,
            self.fernandez_huerta,
            self.flesch_szigriszt,
            self.gutierrez,
            self.mu_readability,
            self.min_age,
            self.sol,
        ]
    }
}

/// Evaluate all twelve measures over an annotated document.
pub fn readability(doc: &AnnotatedDoc, registry: &FormulaRegistry) -> Result<ReadabilityScores> {
    from_stats(&TextStats::from_doc(doc, registry), registry)
}

pub fn from_stats(s: &TextStats, reg: &FormulaRegistry) -> Result<ReadabilityScores> {
    if s.words == 0 || s.sentences == 0 {
        return Err(Error::Domain(
            "readability needs at least one word and one sentence".into(),
        ));
    }
    let rare = s.rare_words.ok_or_else(|| {
        Error::Config("Spaulding's formula needs a common-word list".into())
    })?;
    let w = s.words as f64;
    let sent = s.sentences as f64;
    let wps = w / sent;
    let spw = s.syllables as f64 / w;
    let lpw = s.letters as f64 / w;
    let c = |name: &str, key: &str| reg.coef(name, key);

    let ldi = s.distinct_content_words as f64 / sent;
    let ilfw = if s.content_words == 0 {
        0.0
    } else {
        c("lexical_complexity", "low_frequency_scale") * s.low_frequency_content_words as f64
            / s.content_words as f64
    };
    let lexical_complexity = c("lexical_complexity", "distribution_weight") * ldi
        + c("lexical_complexity", "low_frequency_weight") * ilfw;

    // mu is undefined for a single word or zero length variance
    let mu_readability = if s.words < 2 || s.word_length_variance == 0.0 {
        0.0
    } else {
        (w / (w - 1.0)) * (s.word_length_mean / s.word_length_variance)
            * c("mu_readability", "scale")
    };

    let smog = c("sol", "smog_intercept")
        + c("sol", "smog_slope")
            * (s.polysyllables as f64 * c("sol", "smog_sample_sentences") / sent).sqrt();

    Ok(ReadabilityScores {
        lexical_complexity,
        spaulding: c("spaulding", "words_per_sentence") * wps
            + c("spaulding", "rare_word_proportion") * (rare as f64 / w)
            + c("spaulding", "intercept"),
        sentence_complexity: c("sentence_complexity", "words_per_sentence") * wps,
        ari: c("ari", "letters_per_word") * lpw
            + c("ari", "words_per_sentence") * wps
            + c("ari", "intercept"),
        dep_tree_height_mean: s.dep_tree_height_mean,
        punctuation_marks: s.punctuation as f64,
        fernandez_huerta: c("fernandez_huerta", "intercept")
            + c("fernandez_huerta", "syllables_per_100_words") * (100.0 * spw)
            + c("fernandez_huerta", "sentences_per_100_words") * (100.0 * sent / w),
        flesch_szigriszt: c("flesch_szigriszt", "intercept")
            + c("flesch_szigriszt", "syllables_per_word") * spw
            + c("flesch_szigriszt", "words_per_sentence") * wps,
        gutierrez: c("gutierrez", "intercept")
            + c("gutierrez", "letters_per_word") * lpw
            + c("gutierrez", "words_per_sentence") * wps,
        mu_readability,
        min_age: c("min_age", "intercept")
            + c("min_age", "words_per_sentence") * wps
            + c("min_age", "syllables_per_word") * spw,
        sol: c("sol", "intercept") + c("sol", "smog_weight") * smog,
    })
}
