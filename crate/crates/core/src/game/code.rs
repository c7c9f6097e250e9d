use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::GameError;

/// The code that unlocks a game. Read aloud in class, so comparison ignores
/// case; stored upper-cased.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct AccessCode(String);

impl AccessCode {
    pub const MIN_LEN: usize = 4;
    pub const MAX_LEN: usize = 12;
    pub const GENERATED_LEN: usize = 6;

    pub fn parse(raw: &str) -> Result<Self, GameError> {
        let s = raw.trim();
        let len_ok = (Self::MIN_LEN..=Self::MAX_LEN).contains(&s.len());
        if !len_ok || !s.chars().all(|c| c.is_ascii_alphanumeric()) {
            return Err(GameError::InvalidInput(format!(
                "access code must be {} to {} letters or digits",
                Self::MIN_LEN,
                Self::MAX_LEN
            )));
        }
        Ok(Self(s.to_ascii_uppercase()))
    }

    /// Random 6-character code from `A-Z0-9`.
    pub fn generate<R: Rng + ?Sized>(rng: &mut R) -> Self {
        const ALPHABET: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";
        let s = (0..Self::GENERATED_LEN)
            .map(|_| ALPHABET[rng.random_range(0..ALPHABET.len())] as char)
            .collect();
        Self(s)
    }

    /// Case-insensitive comparison against what a student typed.
    pub fn matches(&self, typed: &str) -> bool {
        self.0.eq_ignore_ascii_case(typed.trim())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for AccessCode {
    type Error = GameError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        Self::parse(&s)
    }
}

impl From<AccessCode> for String {
    fn from(c: AccessCode) -> Self {
        c.0
    }
}

impl fmt::Display for AccessCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}
