//! Character-trigram language identification.
//!
//! Profiles are ranked trigram lists; a text is assigned the language whose
//! profile has the smallest out-of-place distance to the text's own profile.
//! Both sides go through the same folding as the normalizer, so Cyrillic
//! text is compared in its transliterated form.

use std::collections::HashMap;
use std::sync::OnceLock;

use crate::normalize::{normalize_text, NormalizedParagraph};

/// Number of ranked trigrams kept per profile.
pub const PROFILE_SIZE: usize = 300;
/// Texts with fewer narrative words than this are not classified.
pub const MIN_WORDS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Language {
    English,
    French,
    German,
    Spanish,
    Russian,
}

impl Language {
    pub const ALL: [Language; 5] = [
        Language::English,
        Language::French,
        Language::German,
        Language::Spanish,
        Language::Russian,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Language::English => "english",
            Language::French => "french",
            Language::German => "german",
            Language::Spanish => "spanish",
            Language::Russian => "russian",
        }
    }

    fn sample(self) -> &'static str {
        match self {
            Language::English => include_str!("../data/lang/english.txt"),
            Language::French => include_str!("../data/lang/french.txt"),
            Language::German => include_str!("../data/lang/german.txt"),
            Language::Spanish => include_str!("../data/lang/spanish.txt"),
            Language::Russian => include_str!("../data/lang/russian.txt"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Detection {
    /// Too little text, or a tie for the best language.
    Undetermined,
    Language {
        language: Language,
        distance: usize,
        /// Relative margin to the runner-up, in `[0, 1]`.
        confidence: f64,
    },
}

impl Detection {
    pub fn language(&self) -> Option<Language> {
        match self {
            Detection::Language { language, .. } => Some(*language),
            Detection::Undetermined => None,
        }
    }
}

/// Ranked trigram profile.
#[derive(Clone, Debug)]
pub struct Profile {
    ranks: HashMap<String, usize>,
    ordered: Vec<String>,
}

impl Profile {
    pub fn from_words<'a>(words: impl IntoIterator<Item = &'a str>) -> Self {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for word in words {
            let padded: Vec<char> = std::iter::once(' ')
                .chain(word.chars())
                .chain(std::iter::once(' '))
                .collect();
            for w in padded.windows(3) {
                *counts.entry(w.iter().collect()).or_default() += 1;
            }
        }
        let mut ordered: Vec<(String, usize)> = counts.into_iter().collect();
        ordered.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ordered.truncate(PROFILE_SIZE);
        let ordered: Vec<String> = ordered.into_iter().map(|(t, _)| t).collect();
        let ranks = ordered
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Profile { ranks, ordered }
    }

    pub fn trigrams(&self) -> &[String] {
        &self.ordered
    }

    /// Out-of-place distance from `doc` to this profile.
    pub fn distance(&self, doc: &Profile) -> usize {
        doc.ordered
            .iter()
            .enumerate()
            .map(|(i, t)| match self.ranks.get(t) {
                Some(&r) => r.abs_diff(i),
                None => PROFILE_SIZE,
            })
            .sum()
    }
}

pub struct LanguageDetector {
    profiles: Vec<(Language, Profile)>,
}

impl LanguageDetector {
    /// Detector over the bundled language samples, built once.
    pub fn bundled() -> &'static LanguageDetector {
        static DETECTOR: OnceLock<LanguageDetector> = OnceLock::new();
        DETECTOR.get_or_init(|| {
            LanguageDetector::from_samples(Language::ALL.iter().map(|&l| (l, l.sample())))
        })
    }

    pub fn from_samples<'a>(samples: impl IntoIterator<Item = (Language, &'a str)>) -> Self {
        let profiles = samples
            .into_iter()
            .map(|(lang, text)| {
                let p = normalize_text(text);
                (lang, Profile::from_words(p.narrative_words()))
            })
            .collect();
        LanguageDetector { profiles }
    }

    pub fn detect(&self, para: &NormalizedParagraph) -> Detection {
        self.detect_words(&para.narrative_words().collect::<Vec<_>>())
    }

    pub fn detect_text(&self, text: &str) -> Detection {
        self.detect(&normalize_text(text))
    }

    pub fn detect_words(&self, words: &[&str]) -> Detection {
        if words.len() < MIN_WORDS || self.profiles.is_empty() {
            return Detection::Undetermined;
        }
        let doc = Profile::from_words(words.iter().copied());
        let mut scored: Vec<(usize, Language)> = self
            .profiles
            .iter()
            .map(|(l, p)| (p.distance(&doc), *l))
            .collect();
        scored.sort();
        let (best, language) = scored[0];
        let runner_up = scored.get(1).map(|s| s.0);
        if runner_up == Some(best) {
            return Detection::Undetermined;
        }
        let confidence = match runner_up {
            Some(r) if r > 0 => (r - best) as f64 / r as f64,
            _ => 1.0,
        };
        Detection::Language {
            language,
            distance: best,
            confidence,
        }
    }
}
