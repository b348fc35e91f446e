//! Token, sentence, lemma, POS and syllable annotation.
//!
//! Annotation goes through the [`Annotator`] trait so that a real NLP
//! pipeline can be plugged in. The `builtin` annotator is rule-based and
//! deterministic; it cannot parse dependencies and reports every sentence
//! with a synthetic tree height of 0.

use std::collections::BTreeMap;
use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use unicode_segmentation::UnicodeSegmentation;

use crate::error::{Error, Result};

/// The 17 Universal POS tags, `SPACE`, and an overflow slot for tags an
/// external annotator emits outside that set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Pos {
    Adj,
    Adp,
    Adv,
    Aux,
    Cconj,
    Det,
    Intj,
    Noun,
    Num,
    Part,
    Pron,
    Propn,
    Punct,
    Sconj,
    Sym,
    Verb,
    X,
    Space,
    Other,
}

impl Pos {
    pub const COUNT: usize = 19;

    pub const ALL: [Pos; Pos::COUNT] = [
        Pos::Adj,
        Pos::Adp,
        Pos::Adv,
        Pos::Aux,
        Pos::Cconj,
        Pos::Det,
        Pos::Intj,
        Pos::Noun,
        Pos::Num,
        Pos::Part,
        Pos::Pron,
        Pos::Propn,
        Pos::Punct,
        Pos::Sconj,
        Pos::Sym,
        Pos::Verb,
        Pos::X,
        Pos::Space,
        Pos::Other,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Pos::Adj => "ADJ",
            Pos::Adp => "ADP",
            Pos::Adv => "ADV",
            Pos::Aux => "AUX",
            Pos::Cconj => "CCONJ",
            Pos::Det => "DET",
            Pos::Intj => "INTJ",
            Pos::Noun => "NOUN",
            Pos::Num => "NUM",
            Pos::Part => "PART",
            Pos::Pron => "PRON",
            Pos::Propn => "PROPN",
            Pos::Punct => "PUNCT",
            Pos::Sconj => "SCONJ",
            Pos::Sym => "SYM",
            Pos::Verb => "VERB",
            Pos::X => "X",
            Pos::Space => "SPACE",
            Pos::Other => "OTHER",
        }
    }

    /// Map an arbitrary tag string onto the inventory; unknown tags land in
    /// [`Pos::Other`].
    pub fn from_tag(tag: &str) -> Pos {
        Pos::ALL
            .iter()
            .copied()
            .find(|p| p.name().eq_ignore_ascii_case(tag))
            .unwrap_or(Pos::Other)
    }

    pub fn is_content(self) -> bool {
        matches!(self, Pos::Noun | Pos::Verb | Pos::Adj | Pos::Adv | Pos::Propn)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub lemma: String,
    pub pos: Pos,
    pub is_word: bool,
    /// Vowel-group count for words, 0 for punctuation and symbols.
    pub syllables: usize,
    pub letters: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AnnotatedDoc {
    pub tokens: Vec<Token>,
    pub sentences: Vec<Range<usize>>,
    pub dep_tree_heights: Vec<usize>,
    /// True when the heights are placeholders rather than parser output.
    pub dep_heights_synthetic: bool,
    pub punctuation_count: usize,
}

impl AnnotatedDoc {
    pub fn words(&self) -> impl Iterator<Item = &Token> {
        self.tokens.iter().filter(|t| t.is_word)
    }

    pub fn word_count(&self) -> usize {
        self.words().count()
    }

    pub fn sentence_count(&self) -> usize {
        self.sentences.len()
    }

    pub fn syllable_count(&self) -> usize {
        self.words().map(|t| t.syllables).sum()
    }

    pub fn letter_count(&self) -> usize {
        self.words().map(|t| t.letters).sum()
    }

    /// Lowercased word tokens, the input expected by the lexical diversity
    /// measures.
    pub fn word_forms(&self) -> Vec<String> {
        self.words().map(|t| t.surface.to_lowercase()).collect()
    }
}

pub trait Annotator: Send + Sync {
    fn annotate(&self, text: &str) -> AnnotatedDoc;
}

/// Registry of annotators keyed by provider id. `builtin` is always present.
#[derive(Clone)]
pub struct AnnotatorRegistry {
    providers: BTreeMap<String, Arc<dyn Annotator>>,
}

impl Default for AnnotatorRegistry {
    fn default() -> Self {
        let mut providers: BTreeMap<String, Arc<dyn Annotator>> = BTreeMap::new();
        providers.insert("builtin".into(), Arc::new(BuiltinAnnotator));
        AnnotatorRegistry { providers }
    }
}

impl AnnotatorRegistry {
    pub fn register(&mut self, id: impl Into<String>, annotator: Arc<dyn Annotator>) {
        self.providers.insert(id.into(), annotator);
    }

    pub fn get(&self, id: &str) -> Result<Arc<dyn Annotator>> {
        self.providers
            .get(id)
            .cloned()
            .ok_or_else(|| Error::Config(format!("unknown annotator provider {id:?}")))
    }

    pub fn annotate(&self, text: &str, provider: &str) -> Result<AnnotatedDoc> {
        Ok(self.get(provider)?.annotate(text))
    }
}

/// Annotate with the `builtin` rules.
pub fn annotate(text: &str) -> AnnotatedDoc {
    BuiltinAnnotator.annotate(text)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BuiltinAnnotator;

const SYMBOLS: &str = "$%&@#+=<>^|~`*";

fn is_punct_char(c: char) -> bool {
    (c.is_ascii_punctuation() && !SYMBOLS.contains(c))
        || matches!(c, '¡' | '¿' | '«' | '»' | '“' | '”' | '‘' | '’' | '…' | '–' | '—' | '·')
}

const VOWELS: &str = "aeiouyáéíóúàèìòùâêîôûäëïöüý";

/// Number of maximal vowel runs, at least 1.
pub fn count_syllables(word: &str) -> usize {
    let mut groups = 0;
    let mut in_group = false;
    for c in word.chars().flat_map(char::to_lowercase) {
        let v = VOWELS.contains(c);
        if v && !in_group {
            groups += 1;
        }
        in_group = v;
    }
    groups.max(1)
}

fn closed_class(lower: &str) -> Option<Pos> {
    let pos = match lower {
        "the" | "a" | "an" | "this" | "that" | "these" | "those" | "my" | "your" | "his"
        | "its" | "our" | "their" | "some" | "any" | "every" | "each" | "no" | "all"
        | "both" | "either" | "neither" | "another" => Pos::Det,
        "i" | "you" | "he" | "she" | "it" | "we" | "they" | "me" | "him" | "her" | "us"
        | "them" | "myself" | "yourself" | "himself" | "herself" | "itself" | "ourselves"
        | "themselves" | "mine" | "yours" | "hers" | "ours" | "theirs" | "who" | "whom"
        | "what" | "which" | "someone" | "something" | "anyone" | "anything" | "everyone"
        | "everything" | "nothing" | "nobody" | "somebody" => Pos::Pron,
        "in" | "on" | "at" | "by" | "for" | "with" | "about" | "from" | "of" | "into"
        | "onto" | "over" | "under" | "after" | "before" | "between" | "through" | "during"
        | "without" | "within" | "against" | "among" | "around" | "across" | "behind"
        | "beyond" | "near" | "off" | "up" | "down" | "out" | "per" | "via" | "since"
        | "until" | "towards" | "toward" | "upon" => Pos::Adp,
        "and" | "or" | "but" | "nor" | "yet" | "so" | "plus" => Pos::Cconj,
        "because" | "if" | "while" | "although" | "though" | "unless" | "whether"
        | "whereas" | "once" | "than" | "when" | "where" | "whenever" | "wherever" => {
            Pos::Sconj
        }
        "is" | "am" | "are" | "was" | "were" | "be" | "been" | "being" | "have" | "has"
        | "had" | "do" | "does" | "did" | "will" | "would" | "can" | "could" | "should"
        | "may" | "might" | "must" | "shall" | "'s" | "'re" | "'m" | "'ve" | "'ll" | "'d"
        | "ca" | "wo" => Pos::Aux,
        "not" | "n't" | "to" => Pos::Part,
        "very" | "really" | "just" | "too" | "also" | "never" | "always" | "often"
        | "now" | "then" | "here" | "there" | "again" | "still" | "already" | "even"
        | "only" | "soon" | "maybe" | "perhaps" | "quite" | "almost" | "ever" | "sometimes"
        | "usually" | "today" | "yesterday" | "tomorrow" | "actually" | "probably" => Pos::Adv,
        "oh" | "wow" | "hey" | "lol" | "yes" | "yeah" | "ok" | "okay" | "hi" | "hello"
        | "thanks" | "please" | "ugh" | "haha" | "omg" => Pos::Intj,
        "one" | "two" | "three" | "four" | "five" | "six" | "seven" | "eight" | "nine"
        | "ten" | "hundred" | "thousand" | "million" => Pos::Num,
        _ => return None,
    };
    Some(pos)
}

fn is_terminal(surface: &str) -> bool {
    matches!(surface, "." | "!" | "?")
}

impl BuiltinAnnotator {
    fn token(surface: &str) -> Token {
        let is_word = surface.chars().any(char::is_alphanumeric);
        let lemma = surface.to_lowercase();
        let pos = if is_word {
            if surface.chars().all(|c| c.is_numeric() || c == '.' || c == ',') {
                Pos::Num
            } else {
                closed_class(&lemma).unwrap_or(Pos::Noun)
            }
        } else if surface.chars().all(is_punct_char) {
            Pos::Punct
        } else {
            Pos::Sym
        };
        Token {
            syllables: if is_word { count_syllables(surface) } else { 0 },
            letters: surface.chars().filter(|c| c.is_alphabetic()).count(),
            surface: surface.to_string(),
            lemma,
            pos,
            is_word,
        }
    }
}

impl Annotator for BuiltinAnnotator {
    fn annotate(&self, text: &str) -> AnnotatedDoc {
        let tokens: Vec<Token> = text
            .split_word_bounds()
            .filter(|s| !s.trim().is_empty())
            .map(Self::token)
            .collect();

        let mut sentences = Vec::new();
        let mut start = 0;
        for i in 0..tokens.len() {
            let ends_here = is_terminal(&tokens[i].surface)
                && tokens
                    .get(i + 1)
                    .map_or(true, |next| !is_terminal(&next.surface));
            if ends_here {
                sentences.push(start..i + 1);
                start = i + 1;
            }
        }
        if start < tokens.len() {
            sentences.push(start..tokens.len());
        }

        let punctuation_count = tokens.iter().filter(|t| t.pos == Pos::Punct).count();
        AnnotatedDoc {
            dep_tree_heights: vec![0; sentences.len()],
            dep_heights_synthetic: true,
            tokens,
            sentences,
            punctuation_count,
        }
    }
}
