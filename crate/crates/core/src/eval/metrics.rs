//! Lexical metrics over normalised whitespace tokens.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

/// Lowercase, split on whitespace, trim punctuation from both ends of each token and drop
/// tokens that end up empty.
pub fn tokenize(s: &str) -> Vec<String> {
    s.split_whitespace()
        .map(|t| t.trim_matches(|c: char| c.is_ascii_punctuation()).to_lowercase())
        .filter(|t| !t.is_empty())
        .collect()
}

fn ngram_counts<T: AsRef<str>>(tokens: &[T], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut out = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *out.entry(w.iter().map(|t| t.as_ref()).collect()).or_insert(0) += 1;
        }
    }
    out
}

/// Sentence BLEU up to 4-grams. Orders `n >= 2` whose clipped match count is zero use
/// `(0 + 1) / (total + 1)`; the brevity penalty is `exp(1 - |ref| / |cand|)` for short
/// candidates. An empty candidate scores 0.
pub fn bleu<T: AsRef<str>>(cand: &[T], reference: &[T]) -> f64 {
    bleu_n(cand, reference, 4)
}

pub fn bleu_n<T: AsRef<str>>(cand: &[T], reference: &[T], max_n: usize) -> f64 {
    if cand.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let c = ngram_counts(cand, n);
        let r = ngram_counts(reference, n);
        let total = cand.len().saturating_sub(n - 1);
        let matched: usize = c.iter().map(|(g, &k)| k.min(r.get(g).copied().unwrap_or(0))).sum();
        let p = if matched == 0 && n >= 2 {
            1.0 / (total + 1) as f64
        } else if total == 0 {
            0.0
        } else {
            matched as f64 / total as f64
        };
        if p == 0.0 {
            return 0.0;
        }
        log_sum += p.ln();
    }
    let bp = if cand.len() < reference.len() {
        (1.0 - reference.len() as f64 / cand.len() as f64).exp()
    } else {
        1.0
    };
    bp * (log_sum / max_n as f64).exp()
}

fn f1(overlap: usize, cand: usize, reference: usize) -> f64 {
    if overlap == 0 || cand == 0 || reference == 0 {
        return 0.0;
    }
    let p = overlap as f64 / cand as f64;
    let r = overlap as f64 / reference as f64;
    2.0 * p * r / (p + r)
}

pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F1 from the longest common subsequence.
pub fn rouge_l<T: AsRef<str> + PartialEq>(cand: &[T], reference: &[T]) -> f64 {
    f1(lcs_len(cand, reference), cand.len(), reference.len())
}

/// F1 of the multiset token overlap.
pub fn token_f1<T: AsRef<str>>(cand: &[T], reference: &[T]) -> f64 {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in reference {
        *counts.entry(t.as_ref()).or_insert(0) += 1;
    }
    let mut overlap = 0;
    for t in cand {
        if let Some(k) = counts.get_mut(t.as_ref()) {
            if *k > 0 {
                *k -= 1;
                overlap += 1;
            }
        }
    }
    f1(overlap, cand.len(), reference.len())
}

/// Weights of the open-ended composite. They are normalised by their sum when applied.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompositeWeights {
    pub bleu: f64,
    pub rouge_l: f64,
    pub token_f1: f64,
}

impl Default for CompositeWeights {
    fn default() -> Self {
        Self {
            bleu: 1.0 / 3.0,
            rouge_l: 1.0 / 3.0,
            token_f1: 1.0 / 3.0,
        }
    }
}

impl CompositeWeights {
    pub fn validate(&self) -> crate::Result<()> {
        let w = [self.bleu, self.rouge_l, self.token_f1];
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) || w.iter().sum::<f64>() <= 0.0 {
            return Err(crate::Error::Config(format!("invalid composite weights {w:?}")));
        }
        Ok(())
    }
}

/// Weighted mean of BLEU, ROUGE-L and Token-F1 on raw strings.
pub fn composite_open(cand: &str, reference: &str, w: &CompositeWeights) -> f64 {
    let (c, r) = (tokenize(cand), tokenize(reference));
    let total = w.bleu + w.rouge_l + w.token_f1;
    (w.bleu * bleu(&c, &r) + w.rouge_l * rouge_l(&c, &r) + w.token_f1 * token_f1(&c, &r)) / total
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn tokenization() {
        assert_eq!(toks("  The Liver, is (enlarged). "), vec!["the", "liver", "is", "enlarged"]);
        assert_eq!(toks("... -- !"), Vec::<String>::new());
        assert_eq!(toks("3.5cm x-ray"), vec!["3.5cm", "x-ray"]);
    }

    #[test]
    fn bleu_fixtures() {
        let a = toks("a b c d e f");
        assert_eq!(bleu(&a, &a), 1.0);
        let short = toks("no");
        assert_eq!(bleu(&short, &short), 1.0);
        // precisions 1, brevity penalty exp(1 - 5/4)
        let v = bleu(&toks("a b c d"), &toks("a b c d e"));
        assert!((v - (-0.25f64).exp()).abs() < 1e-12);
        assert!((v - 0.7788).abs() < 1e-4);
        assert_eq!(bleu(&toks("x y"), &toks("a b")), 0.0);
        assert_eq!(bleu(&toks(""), &toks("a b")), 0.0);
    }

    #[test]
    fn bleu_smoothing_hand_case() {
        // cand "a x b": p1 = 2/3, p2..p4 smoothed to 1/3, 1/2, 1/1; no brevity penalty
        let v = bleu(&toks("a x b"), &toks("a b"));
        let expected = ((2.0f64 / 3.0).ln() + (1.0f64 / 3.0).ln() + 0.5f64.ln() + 0.0) / 4.0;
        assert!((v - expected.exp()).abs() < 1e-12);
    }

    #[test]
    fn rouge_fixtures() {
        assert!((rouge_l(&toks("a b"), &toks("a c b")) - 0.8).abs() < 1e-12);
        assert_eq!(rouge_l(&toks("a b c"), &toks("a b c")), 1.0);
        assert_eq!(rouge_l(&toks("a b"), &toks("c d")), 0.0);
        assert_eq!(lcs_len(&[1, 3, 4, 1, 2], &[3, 4, 1, 2, 1, 3]), 4);
    }

    #[test]
    fn token_f1_fixtures() {
        assert_eq!(token_f1(&toks("a b"), &toks("a b")), 1.0);
        assert!((token_f1(&toks("a b"), &toks("b c")) - 0.5).abs() < 1e-12);
        assert_eq!(token_f1(&toks(""), &toks("b c")), 0.0);
        // multiset: one "a" in the reference matches only once
        assert!((token_f1(&toks("a a"), &toks("a b")) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn composite_fixtures() {
        let w = CompositeWeights::default();
        assert!((composite_open("left kidney cyst", "Left kidney cyst.", &w) - 1.0).abs() < 1e-12);
        assert_eq!(composite_open("a b", "c d", &w), 0.0);
        let only_bleu = CompositeWeights {
            bleu: 1.0,
            rouge_l: 0.0,
            token_f1: 0.0,
        };
        let (c, r) = ("a b c d", "a b c d e");
        assert_eq!(composite_open(c, r, &only_bleu), bleu(&toks(c), &toks(r)));
        assert!(CompositeWeights { bleu: -1.0, ..w }.validate().is_err());
    }

    fn words() -> impl Strategy<Value = Vec<String>> {
        prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d"]), 0..9)
            .prop_map(|v| v.into_iter().map(String::from).collect())
    }

    proptest! {
        #[test]
        fn metrics_in_unit_interval(c in words(), r in words()) {
            for v in [bleu(&c, &r), rouge_l(&c, &r), token_f1(&c, &r)] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }

        #[test]
        fn identical_scores_one(c in words()) {
            prop_assume!(!c.is_empty());
            prop_assert_eq!(bleu(&c, &c), 1.0);
            prop_assert_eq!(rouge_l(&c, &c), 1.0);
            prop_assert_eq!(token_f1(&c, &c), 1.0);
        }

        #[test]
        fn f1_metrics_symmetric(c in words(), r in words()) {
            prop_assert!((token_f1(&c, &r) - token_f1(&r, &c)).abs() < 1e-12);
            prop_assert!((rouge_l(&c, &r) - rouge_l(&r, &c)).abs() < 1e-12);
        }

        #[test]
        fn bleu_does_not_grow_when_a_match_is_removed(
            c in words(), r in words(), pick in any::<prop::sample::Index>()
        ) {
            let matched: Vec<usize> = (0..c.len()).filter(|&i| r.contains(&c[i])).collect();
            prop_assume!(!matched.is_empty());
            let i = matched[pick.index(matched.len())];
            let mut worse = c.clone();
            worse[i] = "zz".into();
            prop_assert!(bleu(&worse, &r) <= bleu(&c, &r) + 1e-12);
        }
    }
}
