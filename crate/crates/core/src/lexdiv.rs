//! Lexical diversity: TTR family, MSTTR, MATTR, HD-D and MTLD.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LexDivConfig {
    /// Segment length for MSTTR.
    pub segment_len: usize,
    /// Window length for MATTR.
    pub window_len: usize,
    /// Sample size for HD-D.
    pub hdd_sample: usize,
    /// Factor-closing TTR threshold for MTLD.
    pub mtld_threshold: f64,
}

impl Default for LexDivConfig {
    fn default() -> Self {
        LexDivConfig {
            segment_len: 50,
            window_len: 50,
            hdd_sample: 42,
            mtld_threshold: 0.72,
        }
    }
}

impl LexDivConfig {
    pub fn validate(&self) -> Result<()> {
        if self.segment_len == 0 || self.window_len == 0 || self.hdd_sample == 0 {
            return Err(Error::Config(
                "segment_len, window_len and hdd_sample must be positive".into(),
            ));
        }
        if !(self.mtld_threshold > 0.0 && self.mtld_threshold < 1.0) {
            return Err(Error::Config("mtld_threshold must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LexDivScores {
    pub ttr: f64,
    pub root_ttr: f64,
    pub log_ttr: f64,
    pub maas: f64,
    pub msttr: f64,
    pub mattr: f64,
    pub hdd: f64,
    pub mtld: f64,
}

impl LexDivScores {
    pub const NAMES: [&'static str; 8] =
        ["ttr", "root_ttr", "log_ttr", "maas", "msttr", "mattr", "hdd", "mtld"];

    pub fn to_array(&self) -> [f64; 8] {
        [
            self.ttr,
            self.root_ttr,
            self.log_ttr,
            self.maas,
            self.msttr,
            self.mattr,
            self.hdd,
            self.mtld,
        ]
    }
}

fn type_counts<S: AsRef<str>>(tokens: &[S]) -> HashMap<&str, usize> {
    let mut counts = HashMap::new();
    for t in tokens {
        *counts.entry(t.as_ref()).or_insert(0) += 1;
    }
    counts
}

fn ttr_of<S: AsRef<str>>(tokens: &[S]) -> f64 {
    type_counts(tokens).len() as f64 / tokens.len() as f64
}

/// Compute all eight measures. `tokens` should already be lowercased word
/// forms with punctuation removed.
pub fn lexdiv<S: AsRef<str>>(tokens: &[S], cfg: &LexDivConfig) -> Result<LexDivScores> {
    cfg.validate()?;
    if tokens.is_empty() {
        return Err(Error::Domain("lexical diversity of an empty token list".into()));
    }
    let counts = type_counts(tokens);
    let n = tokens.len() as f64;
    let v = counts.len() as f64;
    let ttr = v / n;
    let (log_ttr, maas) = if tokens.len() == 1 {
        (1.0, 0.0)
    } else {
        (v.ln() / n.ln(), (n.ln() - v.ln()) / (n.ln() * n.ln()))
    };
    Ok(LexDivScores {
        ttr,
        root_ttr: v / n.sqrt(),
        log_ttr,
        maas,
        msttr: msttr(tokens, cfg.segment_len),
        mattr: mattr(tokens, cfg.window_len),
        hdd: hdd(&counts, tokens.len(), cfg.hdd_sample),
        mtld: mtld(tokens, cfg.mtld_threshold),
    })
}

/// Mean TTR over disjoint segments; the trailing partial segment is dropped.
fn msttr<S: AsRef<str>>(tokens: &[S], segment_len: usize) -> f64 {
    if tokens.len() < segment_len {
        return ttr_of(tokens);
    }
    let segments: Vec<f64> = tokens.chunks_exact(segment_len).map(ttr_of).collect();
    segments.iter().sum::<f64>() / segments.len() as f64
}

/// Mean TTR over every window of `window_len` consecutive tokens.
fn mattr<S: AsRef<str>>(tokens: &[S], window_len: usize) -> f64 {
    if tokens.len() < window_len {
        return ttr_of(tokens);
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &tokens[..window_len] {
        *counts.entry(t.as_ref()).or_insert(0) += 1;
    }
    let mut distinct_sum = counts.len();
    for i in window_len..tokens.len() {
        let out = tokens[i - window_len].as_ref();
        let slot = counts.get_mut(out).expect("outgoing token was counted");
        *slot -= 1;
        if *slot == 0 {
            counts.remove(out);
        }
        *counts.entry(tokens[i].as_ref()).or_insert(0) += 1;
        distinct_sum += counts.len();
    }
    let windows = tokens.len() - window_len + 1;
    distinct_sum as f64 / (windows * window_len) as f64
}

/// P(a type with `freq` occurrences is absent from a sample of `s` drawn
/// without replacement from `n` tokens) = C(n-freq, s) / C(n, s), evaluated
/// as a product of ratios so it never overflows.
fn absent_probability(n: usize, freq: usize, s: usize) -> f64 {
    if n - freq < s {
        return 0.0;
    }
    let mut log_p = 0.0;
    for i in 0..s {
        log_p += ((n - freq - i) as f64).ln() - ((n - i) as f64).ln();
    }
    log_p.exp()
}

fn hdd(counts: &HashMap<&str, usize>, n: usize, sample: usize) -> f64 {
    let s = sample.min(n);
    let mut types: Vec<usize> = counts.values().copied().collect();
    // fixed summation order
    types.sort_unstable();
    let total: f64 = types
        .iter()
        .map(|&freq| 1.0 - absent_probability(n, freq, s))
        .sum();
    total / s as f64
}

fn mtld_pass<'a, I>(tokens: I, n: usize, threshold: f64) -> f64
where
    I: Iterator<Item = &'a str>,
{
    let mut factors = 0.0;
    let mut seen: HashMap<&str, ()> = HashMap::new();
    let mut len = 0usize;
    for t in tokens {
        seen.insert(t, ());
        len += 1;
        let ttr = seen.len() as f64 / len as f64;
        if ttr < threshold {
            factors += 1.0;
            seen.clear();
            len = 0;
        }
    }
    if len > 0 {
        let ttr = seen.len() as f64 / len as f64;
        factors += (1.0 - ttr) / (1.0 - threshold);
    }
    if factors == 0.0 {
        n as f64
    } else {
        n as f64 / factors
    }
}

fn mtld<S: AsRef<str>>(tokens: &[S], threshold: f64) -> f64 {
    let n = tokens.len();
    let forward = mtld_pass(tokens.iter().map(AsRef::as_ref), n, threshold);
    let backward = mtld_pass(tokens.iter().rev().map(AsRef::as_ref), n, threshold);
    (forward + backward) / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    fn cfg() -> LexDivConfig {
        LexDivConfig::default()
    }

    #[test]
    fn basic_ratios() {
        let s = lexdiv(&toks("a b a c"), &cfg()).unwrap();
        assert_eq!(s.ttr, 0.75);
        assert_eq!(s.root_ttr, 1.5);
    }

    #[test]
    fn all_distinct() {
        let s = lexdiv(&toks("a b c d e f"), &cfg()).unwrap();
        assert_eq!(s.maas, 0.0);
        assert_eq!(s.log_ttr, 1.0);
        assert_eq!(s.mtld, 6.0);
    }

    #[test]
    fn single_token() {
        let s = lexdiv(&["x"], &cfg()).unwrap();
        assert_eq!((s.ttr, s.log_ttr, s.maas, s.hdd), (1.0, 1.0, 0.0, 1.0));
    }

    #[test]
    fn msttr_segments() {
        let c = LexDivConfig { segment_len: 2, ..cfg() };
        assert_eq!(lexdiv(&toks("a a b c"), &c).unwrap().msttr, 0.75);
        // remainder discarded: segments "a a", "b c", drop "d"
        assert_eq!(lexdiv(&toks("a a b c d"), &c).unwrap().msttr, 0.75);
    }

    #[test]
    fn mattr_windows() {
        let c = LexDivConfig { window_len: 2, ..cfg() };
        assert_eq!(lexdiv(&toks("a a b"), &c).unwrap().mattr, 0.75);
    }

    #[test]
    fn short_text_hdd_is_ttr() {
        let t = toks("a b a c b a d");
        let s = lexdiv(&t, &cfg()).unwrap();
        assert!((s.hdd - s.ttr).abs() < 1e-15);
    }

    #[test]
    fn mtld_hand_example() {
        // threshold 0.72: "a b a" -> running ttr 1, 1, 0.667 -> factor closes.
        // remainder "c c": ttr 1 then 0.5 -> closes. nothing left.
        // forward: 5 / 2 = 2.5
        // backward "c c a b a": c 1, c 0.5 closes; a 1, b 1, a 0.667 closes -> 5/2
        let s = lexdiv(&toks("a b a c c"), &cfg()).unwrap();
        assert!((s.mtld - 2.5).abs() < 1e-12);
    }

    #[test]
    fn empty_and_bad_config() {
        let empty: [&str; 0] = [];
        assert!(matches!(lexdiv(&empty, &cfg()), Err(Error::Domain(_))));
        let bad = LexDivConfig { mtld_threshold: 1.0, ..cfg() };
        assert!(matches!(lexdiv(&["a"], &bad), Err(Error::Config(_))));
    }

    fn token_seq() -> impl Strategy<Value = Vec<String>> {
        prop::collection::vec((0u8..20).prop_map(|i| format!("w{i}")), 1..120)
    }

    proptest! {
        #[test]
        fn ranges_and_permutation_invariance(mut t in token_seq(), seed in any::<u64>()) {
            let s = lexdiv(&t, &cfg()).unwrap();
            for v in [s.ttr, s.msttr, s.mattr, s.hdd] {
                prop_assert!(v > 0.0 && v <= 1.0 + 1e-12);
            }
            prop_assert!(s.mtld >= 0.0);
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            t.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let p = lexdiv(&t, &cfg()).unwrap();
            prop_assert_eq!(s.ttr, p.ttr);
            prop_assert_eq!(s.root_ttr, p.root_ttr);
            prop_assert_eq!(s.log_ttr, p.log_ttr);
            prop_assert_eq!(s.maas, p.maas);
            prop_assert!((s.hdd - p.hdd).abs() < 1e-12);
        }

        #[test]
        fn length_identities(t in token_seq()) {
            let n = t.len();
            let c = LexDivConfig { window_len: n, segment_len: n, ..cfg() };
            let s = lexdiv(&t, &c).unwrap();
            prop_assert!((s.mattr - s.ttr).abs() < 1e-15);
            prop_assert!((s.msttr - s.ttr).abs() < 1e-15);
        }

        #[test]
        fn doubling_never_raises_ttr(t in token_seq()) {
            let doubled: Vec<String> = t.iter().flat_map(|x| [x.clone(), x.clone()]).collect();
            let a = lexdiv(&t, &cfg()).unwrap().ttr;
            let b = lexdiv(&doubled, &cfg()).unwrap().ttr;
            prop_assert!(b <= a);
        }
    }
}
