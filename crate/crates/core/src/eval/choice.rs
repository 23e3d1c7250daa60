//! Closed-ended scoring: choice letters and yes/no judgments.

use super::metrics::tokenize;

const LETTERS: &str = "ABCDEF";

/// Parse a choice letter. A prediction that is a lone letter after stripping punctuation and
/// whitespace may be in either case (`" (b) "`); in longer text the first standalone capital
/// A–F counts, so the article "a" is not mistaken for an answer.
pub fn parse_choice(s: &str) -> Option<char> {
    let stripped: String = s
        .chars()
        .filter(|c| !c.is_whitespace() && !c.is_ascii_punctuation())
        .collect();
    let mut it = stripped.chars();
    if let (Some(c), None) = (it.next(), it.next()) {
        let up = c.to_ascii_uppercase();
        return LETTERS.contains(up).then_some(up);
    }
    s.split_whitespace()
        .map(|w| w.trim_matches(|c: char| c.is_ascii_punctuation()))
        .find_map(|w| {
            let mut cs = w.chars();
            match (cs.next(), cs.next()) {
                (Some(c), None) if LETTERS.contains(c) => Some(c),
                _ => None,
            }
        })
}

/// Outcome of a closed-ended comparison; `parsed` is false when the prediction had no
/// recognisable answer (the sample is then scored 0 and flagged).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChoiceOutcome {
    pub correct: bool,
    pub parsed: bool,
}

pub fn choice_accuracy(pred: &str, gold: &str) -> ChoiceOutcome {
    match (parse_choice(pred), parse_choice(gold)) {
        (Some(p), Some(g)) => ChoiceOutcome {
            correct: p == g,
            parsed: true,
        },
        (p, _) => ChoiceOutcome {
            correct: false,
            parsed: p.is_some(),
        },
    }
}

/// Judgment answers match when their first normalised tokens agree ("Yes, enlarged" vs
/// "yes"). An empty prediction is unparseable.
pub fn judgment_accuracy(pred: &str, gold: &str) -> ChoiceOutcome {
    let (p, g) = (tokenize(pred), tokenize(gold));
    match p.first() {
        Some(first) => ChoiceOutcome {
            correct: g.first() == Some(first),
            parsed: true,
        },
        None => ChoiceOutcome {
            correct: false,
            parsed: false,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures() {
        assert!(choice_accuracy("B", "B").correct);
        assert!(choice_accuracy(" (b) ", "B").correct);
        let o = choice_accuracy("The answer is C", "B");
        assert!(!o.correct && o.parsed);
    }

    #[test]
    fn parsing() {
        assert_eq!(parse_choice("b."), Some('B'));
        assert_eq!(parse_choice("Answer: D) fibrosis"), Some('D'));
        assert_eq!(parse_choice("a small cyst, so E"), Some('E'));
        assert_eq!(parse_choice("G"), None);
        assert_eq!(parse_choice("no letter here"), None);
        assert_eq!(parse_choice(""), None);
    }

    #[test]
    fn unparseable_is_flagged() {
        let o = choice_accuracy("unsure", "A");
        assert_eq!(o, ChoiceOutcome { correct: false, parsed: false });
    }

    #[test]
    fn judgments() {
        assert!(judgment_accuracy("Yes, the liver is enlarged.", "yes").correct);
        assert!(!judgment_accuracy("no", "Yes").correct);
        assert!(!judgment_accuracy("  ", "yes").parsed);
    }
}
