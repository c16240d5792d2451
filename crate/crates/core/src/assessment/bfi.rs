//! BFI-44 item bank, answer options and key scoring.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{self, DataError};
use crate::parsing::clean_token;
use crate::personas::TraitId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("value {0} is outside the 1..=5 scale")]
pub struct RangeError(pub i64);

/// Flips a reverse-keyed value: `v -> 6 - v`.
pub fn reverse_key(v: i64) -> Result<i64, RangeError> {
    if (1..=5).contains(&v) {
        Ok(6 - v)
    } else {
        Err(RangeError(v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LikertOption {
    A,
    B,
    C,
    D,
    E,
}

impl LikertOption {
    pub const ALL: [LikertOption; 5] = [
        LikertOption::A,
        LikertOption::B,
        LikertOption::C,
        LikertOption::D,
        LikertOption::E,
    ];

    /// A ("Very Accurate") is 5 down to E ("Very Inaccurate") at 1.
    pub fn value(self) -> i64 {
        match self {
            LikertOption::A => 5,
            LikertOption::B => 4,
            LikertOption::C => 3,
            LikertOption::D => 2,
            LikertOption::E => 1,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            LikertOption::A => "Very Accurate",
            LikertOption::B => "Moderately Accurate",
            LikertOption::C => "Neither Accurate Nor Inaccurate",
            LikertOption::D => "Moderately Inaccurate",
            LikertOption::E => "Very Inaccurate",
        }
    }

    pub fn letter(self) -> char {
        match self {
            LikertOption::A => 'A',
            LikertOption::B => 'B',
            LikertOption::C => 'C',
            LikertOption::D => 'D',
            LikertOption::E => 'E',
        }
    }
}

impl FromStr for LikertOption {
    type Err = String;

    /// Accepts `B`, `(B)`, `B. Moderately Accurate` or the option text alone.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let token = clean_token(s);
        let token = token.trim_start_matches('(').trim();
        let mut chars = token.chars();
        if let Some(first) = chars.next() {
            let rest = chars.as_str();
            let standalone = rest.is_empty() || rest.starts_with([')', '.', ' ', ':']);
            if standalone {
                if let Some(o) = Self::ALL.into_iter().find(|o| o.letter() == first.to_ascii_uppercase()) {
                    return Ok(o);
                }
            }
        }
        Self::ALL
            .into_iter()
            .find(|o| o.label().eq_ignore_ascii_case(token))
            .ok_or_else(|| s.trim().to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BfiItem {
    pub number: u32,
    pub dimension: TraitId,
    pub reverse: bool,
    pub second_person: String,
    /// Peer-rating form, e.g. "The player is talkative".
    pub third_person: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemBank {
    pub version: String,
    pub counts: BTreeMap<TraitId, u32>,
    #[serde(rename = "item")]
    pub items: Vec<BfiItem>,
}

pub const ITEM_COUNT: usize = 44;

impl ItemBank {
    pub fn from_toml_str(text: &str, name: &str) -> Result<Self, DataError> {
        let mut bank: ItemBank = toml::from_str(text).map_err(|e| DataError::invalid(name, e))?;
        bank.items.sort_by_key(|i| i.number);
        bank.validate().map_err(|r| DataError::invalid(name, r))?;
        Ok(bank)
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        Self::from_toml_str(&data::read_text(path)?, &path.display().to_string())
    }

    /// The bundled placeholder bank.
    pub fn placeholder() -> Self {
        Self::from_toml_str(data::BFI44_PLACEHOLDER, "bundled item bank").expect("bundled item bank is valid")
    }

    fn validate(&self) -> Result<(), String> {
        if self.items.len() != ITEM_COUNT {
            return Err(format!("expected {ITEM_COUNT} items, found {}", self.items.len()));
        }
        for (i, item) in self.items.iter().enumerate() {
            if item.number as usize != i + 1 {
                return Err(format!("item numbers must be 1..=44 without gaps, found {}", item.number));
            }
            if item.second_person.trim().is_empty() || item.third_person.trim().is_empty() {
                return Err(format!("item {} has an empty statement", item.number));
            }
        }
        for t in TraitId::ALL {
            let declared = self
                .counts
                .get(&t)
                .ok_or_else(|| format!("counts has no entry for {}", t.code()))?;
            let actual = self.items.iter().filter(|i| i.dimension == t).count() as u32;
            if *declared != actual {
                return Err(format!(
                    "dimension {} declares {declared} items but the bank has {actual}",
                    t.code()
                ));
            }
        }
        Ok(())
    }

    pub fn get(&self, number: u32) -> Option<&BfiItem> {
        self.items.get((number as usize).checked_sub(1)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("item bank serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScoringError {
    #[error(transparent)]
    Range(#[from] RangeError),
    #[error("no value for item {0}")]
    MissingItem(u32),
}

/// Per-dimension means of keyed item values, in `TraitId::ALL` order.
/// `values` maps item number to the raw 1..=5 answer.
pub fn score_items(bank: &ItemBank, values: &BTreeMap<u32, i64>) -> Result<[f64; 5], ScoringError> {
    let mut sums = [0.0f64; 5];
    let mut counts = [0u32; 5];
    for item in &bank.items {
        let raw = *values.get(&item.number).ok_or(ScoringError::MissingItem(item.number))?;
        if !(1..=5).contains(&raw) {
            return Err(RangeError(raw).into());
        }
        let keyed = if item.reverse { reverse_key(raw)? } else { raw };
        let d = TraitId::ALL.iter().position(|t| *t == item.dimension).unwrap();
        sums[d] += keyed as f64;
        counts[d] += 1;
    }
    let mut out = [0.0; 5];
    for d in 0..5 {
        out[d] = sums[d] / counts[d] as f64;
    }
    Ok(out)
}
