//! Toxicity scoring modes: sidecar passthrough or a bundled lexicon model.
//!
//! Corpora scored offline carry their seven-dimension scores as a `tox`
//! sidecar on every post create; that is the default mode and any post
//! without scores is a hard error naming the event. The lexicon mode is a
//! tiny deterministic stand-in for a neural scorer so pipelines without
//! sidecar scores still run end to end: each dimension gets a score from
//! the density of matched terms squashed through a logistic curve, strictly
//! inside (0, 1).

use crate::ingest::ToxicityScores;

/// Pluggable text scorer producing the seven toxicity dimensions.
pub trait ToxicityScorer: Send + Sync {
    fn score(&self, text: &str) -> ToxicityScores;
    fn name(&self) -> &'static str;
}

/// How posts get their toxicity scores.
pub enum ToxicityMode {
    /// Read the `tox` sidecar from each post; missing scores are an error.
    Sidecar,
    /// Score each post's text with the given scorer.
    Scorer(Box<dyn ToxicityScorer>),
}

impl ToxicityMode {
    pub fn lexicon() -> Self {
        ToxicityMode::Scorer(Box::new(LexiconScorer))
    }

    pub fn label(&self) -> &'static str {
        match self {
            ToxicityMode::Sidecar => "sidecar",
            ToxicityMode::Scorer(s) => s.name(),
        }
    }
}

impl std::fmt::Debug for ToxicityMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ToxicityMode({})", self.label())
    }
}

/// Term-list scorer. Tokenizes on non-alphanumeric boundaries, counts
/// matches per dimension, and squashes match density through a logistic
/// curve calibrated to a low base rate on clean text.
pub struct LexiconScorer;

const IDENTITY_ATTACK: &[&str] = &[
    "subhuman", "vermin", "degenerate", "invader", "heathen", "savages",
];
const INSULT: &[&str] = &[
    "idiot", "moron", "stupid", "loser", "clown", "pathetic", "dumb", "fool",
];
const OBSCENE: &[&str] = &["crap", "damn", "filth", "hell", "sleaze", "smut"];
const TOXIC: &[&str] = &[
    "hate", "trash", "garbage", "disgusting", "awful", "worst", "shut", "liar",
    "idiot", "stupid", "scum",
];
const SEVERE_TOXIC: &[&str] = &["die", "rot", "scum", "despise", "loathe"];
const THREAT: &[&str] = &["kill", "hurt", "destroy", "beat", "hunt", "burn"];
const SEXUALLY_EXPLICIT: &[&str] = &["nude", "lewd", "explicit", "obscene"];

impl LexiconScorer {
    fn dimension_terms() -> [&'static [&'static str]; 7] {
        [
            IDENTITY_ATTACK,
            INSULT,
            OBSCENE,
            TOXIC,
            SEVERE_TOXIC,
            THREAT,
            SEXUALLY_EXPLICIT,
        ]
    }

    /// Logistic squash of match density into (0, 1); zero density maps to a
    /// small but positive base rate.
    fn squash(density: f64) -> f64 {
        let z = 9.0 * density - 3.0;
        1.0 / (1.0 + (-z).exp())
    }
}

impl ToxicityScorer for LexiconScorer {
    fn score(&self, text: &str) -> ToxicityScores {
        let tokens: Vec<String> = text
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(|t| t.to_lowercase())
            .collect();
        let total = tokens.len().max(1) as f64;
        let mut densities = [0.0f64; 7];
        for (dim, terms) in Self::dimension_terms().iter().enumerate() {
            let hits = tokens.iter().filter(|t| terms.contains(&t.as_str())).count();
            densities[dim] = hits as f64 / total;
        }
        ToxicityScores {
            identity_attack: Self::squash(densities[0]),
            insult: Self::squash(densities[1]),
            obscene: Self::squash(densities[2]),
            toxicity: Self::squash(densities[3]),
            severe_toxicity: Self::squash(densities[4]),
            threat: Self::squash(densities[5]),
            sexually_explicit: Self::squash(densities[6]),
        }
    }

    fn name(&self) -> &'static str {
        "lexicon"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scores_stay_inside_open_unit_interval() {
        for text in ["", "a perfectly nice day", "kill kill kill", "hate StUpId liar"] {
            let s = LexiconScorer.score(text);
            for v in s.values() {
                assert!(v > 0.0 && v < 1.0, "{text:?} -> {v}");
            }
        }
    }

    #[test]
    fn toxic_text_scores_higher_than_clean_text() {
        let clean = LexiconScorer.score("what a lovely morning for a walk");
        let toxic = LexiconScorer.score("you stupid pathetic liar, I hate you");
        assert!(toxic.toxicity > clean.toxicity);
        assert!(toxic.insult > clean.insult);
    }

    #[test]
    fn matching_is_case_insensitive_and_token_bounded() {
        let upper = LexiconScorer.score("HATE");
        let lower = LexiconScorer.score("hate");
        assert_eq!(upper.toxicity, lower.toxicity);
        // "hateful" is a different token and must not match "hate".
        let derived = LexiconScorer.score("hateful");
        assert!(derived.toxicity < lower.toxicity);
    }

    #[test]
    fn deterministic() {
        let a = LexiconScorer.score("some text with hate and kill");
        let b = LexiconScorer.score("some text with hate and kill");
        assert_eq!(a, b);
    }
}
