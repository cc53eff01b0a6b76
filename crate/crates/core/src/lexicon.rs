//! Phrase tables shared by the context resolver and the parser.

use std::collections::HashMap;

use regex::{Regex, RegexBuilder};
use serde::Deserialize;
use thiserror::Error;

use crate::logic::Relation;

const DEFAULT_LEXICON: &str = include_str!("../data/lexicon.toml");

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("lexicon config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("lexicon config: {0}")]
    Invalid(String),
    #[error("lexicon pattern: {0}")]
    Regex(#[from] regex::Error),
}

/// How a phrase is read relative to the speaker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Deserialize, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum UserRelation {
    FrontOf,
    RightOf,
    Behind,
    LeftOf,
    Near,
}

impl UserRelation {
    pub const DIRECTIONAL: [UserRelation; 4] =
        [UserRelation::FrontOf, UserRelation::RightOf, UserRelation::Behind, UserRelation::LeftOf];

    /// The relation predicate this phrase means under the canonical frame
    /// (front = north, right = east).
    pub fn canonical_predicate(self) -> Relation {
        match self {
            UserRelation::FrontOf => Relation::FrontOf,
            UserRelation::RightOf => Relation::RightOf,
            UserRelation::Behind => Relation::Behind,
            UserRelation::LeftOf => Relation::LeftOf,
            UserRelation::Near => Relation::Near,
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            UserRelation::FrontOf => "front_of",
            UserRelation::RightOf => "right_of",
            UserRelation::Behind => "behind",
            UserRelation::LeftOf => "left_of",
            UserRelation::Near => "near",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeUnit {
    Day,
    Week,
    Month,
    Year,
}

impl TimeUnit {
    pub fn word(self) -> &'static str {
        match self {
            TimeUnit::Day => "day",
            TimeUnit::Week => "week",
            TimeUnit::Month => "month",
            TimeUnit::Year => "year",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            TimeUnit::Day => "days_ago",
            TimeUnit::Week => "weeks_ago",
            TimeUnit::Month => "months_ago",
            TimeUnit::Year => "years_ago",
        }
    }
}

#[derive(Debug, Deserialize)]
struct SpatialEntry {
    phrase: String,
    relation: UserRelation,
    triggers: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct LexiconFile {
    wh_words: Vec<String>,
    deixis: Vec<String>,
    months: Vec<String>,
    time_units: Vec<TimeUnit>,
    number_words: Vec<String>,
    rewrite: HashMap<UserRelation, String>,
    spatial: Vec<SpatialEntry>,
}

/// One spatial phrase, as lowercase words.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialPhrase {
    pub words: Vec<String>,
    pub relation: UserRelation,
    pub triggers: Vec<Relation>,
}

impl SpatialPhrase {
    /// Feature key, e.g. `on_the_right_of`.
    pub fn key(&self) -> String {
        self.words.join("_")
    }
}

/// Compiled lexicon.
#[derive(Debug, Clone)]
pub struct Lexicon {
    pub spatial: Vec<SpatialPhrase>,
    pub wh_words: Vec<String>,
    pub deixis: Vec<Vec<String>>,
    pub months: Vec<String>,
    pub time_units: Vec<TimeUnit>,
    /// Number words with their value; multiword entries are space separated.
    pub numbers: Vec<(Vec<String>, u32)>,
    rewrite: HashMap<UserRelation, String>,
    spatial_re: Regex,
    deixis_re: Regex,
    ago_re: Regex,
    month_re: Regex,
}

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_lowercase).collect()
}

/// Alternation of phrases, longest first, allowing any run of whitespace
/// between words.
fn alternation<'a>(phrases: impl IntoIterator<Item = &'a Vec<String>>) -> String {
    let mut ps: Vec<&Vec<String>> = phrases.into_iter().collect();
    ps.sort_by(|a, b| b.iter().map(String::len).sum::<usize>().cmp(&a.iter().map(String::len).sum()).then(b.len().cmp(&a.len())));
    ps.iter()
        .map(|w| w.iter().map(|x| regex::escape(x)).collect::<Vec<_>>().join(r"\s+"))
        .collect::<Vec<_>>()
        .join("|")
}

fn ci(pattern: &str) -> Result<Regex, regex::Error> {
    RegexBuilder::new(pattern).case_insensitive(true).build()
}

impl Lexicon {
    pub fn from_toml(src: &str) -> Result<Self, LexiconError> {
        let file: LexiconFile = toml::from_str(src)?;
        let mut spatial = Vec::with_capacity(file.spatial.len());
        for e in file.spatial {
            let w = words(&e.phrase);
            if w.is_empty() {
                return Err(LexiconError::Invalid("empty spatial phrase".into()));
            }
            let mut triggers = Vec::new();
            for t in &e.triggers {
                let r = Relation::from_symbol(t)
                    .ok_or_else(|| LexiconError::Invalid(format!("unknown relation {t:?} for {:?}", e.phrase)))?;
                if !triggers.contains(&r) {
                    triggers.push(r);
                }
            }
            if triggers.is_empty() {
                return Err(LexiconError::Invalid(format!("{:?} triggers nothing", e.phrase)));
            }
            spatial.push(SpatialPhrase {
                words: w,
                relation: e.relation,
                triggers,
            });
        }
        for r in UserRelation::DIRECTIONAL {
            if !file.rewrite.contains_key(&r) {
                return Err(LexiconError::Invalid(format!("no rewrite phrase for {}", r.key())));
            }
        }
        if file.months.len() != 12 {
            return Err(LexiconError::Invalid(format!("{} month names", file.months.len())));
        }
        let months: Vec<String> = file.months.iter().map(|m| m.to_lowercase()).collect();
        let deixis: Vec<Vec<String>> = file.deixis.iter().map(|d| words(d)).filter(|w| !w.is_empty()).collect();
        let numbers: Vec<(Vec<String>, u32)> = file
            .number_words
            .iter()
            .enumerate()
            .map(|(i, w)| (words(w), i as u32))
            .collect();

        let spatial_re = ci(&format!(r"\b(?:{})\b", alternation(spatial.iter().map(|s| &s.words))))?;
        let deixis_re = ci(&format!(r"\b(?:{})\b", alternation(deixis.iter())))?;
        let units = file.time_units.iter().map(|u| format!("{}s?", u.word())).collect::<Vec<_>>().join("|");
        let amounts = format!(r"\d+|an?|{}", alternation(numbers.iter().map(|(w, _)| w)));
        let ago_re = ci(&format!(r"\b(?P<n>{amounts})\s+(?P<unit>{units})\s+ago\b"))?;
        let month_re = ci(&format!(r"\b(?:{})\b", months.join("|")))?;

        Ok(Self {
            spatial,
            wh_words: file.wh_words.iter().map(|w| w.to_lowercase()).collect(),
            deixis,
            months,
            time_units: file.time_units,
            numbers,
            rewrite: file.rewrite,
            spatial_re,
            deixis_re,
            ago_re,
            month_re,
        })
    }

    /// Surface phrase substituted for a rotated relation.
    pub fn rewrite_phrase(&self, rel: UserRelation) -> Option<&str> {
        self.rewrite.get(&rel).map(String::as_str)
    }

    /// Spatial phrase whose words equal `text` (after whitespace folding).
    pub fn spatial_phrase(&self, text: &str) -> Option<&SpatialPhrase> {
        let w = words(text);
        self.spatial.iter().find(|s| s.words == w)
    }

    pub fn month_number(&self, word: &str) -> Option<u8> {
        self.months.iter().position(|m| m == word).map(|i| i as u8 + 1)
    }

    /// Value of a number phrase: digits, `a`/`an`, or a number word.
    pub fn number_value(&self, text: &str) -> Option<u32> {
        let w = words(text);
        if let [single] = w.as_slice() {
            if single.bytes().all(|b| b.is_ascii_digit()) {
                return single.parse().ok();
            }
            if single == "a" || single == "an" {
                return Some(1);
            }
        }
        self.numbers.iter().find(|(n, _)| *n == w).map(|(_, v)| *v)
    }

    pub fn time_unit(&self, word: &str) -> Option<TimeUnit> {
        let w = word.to_lowercase();
        let stem = w.strip_suffix('s').unwrap_or(&w);
        self.time_units.iter().copied().find(|u| u.word() == stem)
    }

    pub(crate) fn spatial_regex(&self) -> &Regex {
        &self.spatial_re
    }

    pub(crate) fn deixis_regex(&self) -> &Regex {
        &self.deixis_re
    }

    pub(crate) fn ago_regex(&self) -> &Regex {
        &self.ago_re
    }

    pub(crate) fn month_regex(&self) -> &Regex {
        &self.month_re
    }
}

impl Default for Lexicon {
    fn default() -> Self {
        Self::from_toml(DEFAULT_LEXICON).expect("bundled lexicon is valid")
    }
}
