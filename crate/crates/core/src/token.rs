//! The assistant text-slot vocabulary.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Kind of the single text-slot token emitted each frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TokenKind {
    /// Silent listening.
    #[serde(rename = "SIL")]
    Sil,
    /// Word onset.
    #[serde(rename = "BOW")]
    Bow,
    /// Backchannel onset.
    #[serde(rename = "BC")]
    Bc,
    /// Fill while the word's speech outlasts its text tokens.
    #[serde(rename = "PAD")]
    Pad,
    #[serde(rename = "TEXT")]
    Text,
}

impl TokenKind {
    pub const ALL: [TokenKind; 5] = [TokenKind::Sil, TokenKind::Bow, TokenKind::Bc, TokenKind::Pad, TokenKind::Text];

    pub fn as_str(self) -> &'static str {
        match self {
            TokenKind::Sil => "SIL",
            TokenKind::Bow => "BOW",
            TokenKind::Bc => "BC",
            TokenKind::Pad => "PAD",
            TokenKind::Text => "TEXT",
        }
    }

    /// BOW and BC open a word.
    pub fn is_opener(self) -> bool {
        matches!(self, TokenKind::Bow | TokenKind::Bc)
    }
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One frame's text-slot token with its training loss weight.
///
/// `text` is `Some` exactly when `kind == Text`; the constructors keep that
/// invariant, and [`TokenSlot::is_well_formed`] checks deserialized values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenSlot {
    pub kind: TokenKind,
    pub text: Option<String>,
    pub loss_weight: f64,
}

impl TokenSlot {
    fn special(kind: TokenKind) -> Self {
        Self { kind, text: None, loss_weight: 0.0 }
    }

    pub fn sil() -> Self {
        Self::special(TokenKind::Sil)
    }

    pub fn bow() -> Self {
        Self::special(TokenKind::Bow)
    }

    pub fn bc() -> Self {
        Self::special(TokenKind::Bc)
    }

    pub fn pad() -> Self {
        Self::special(TokenKind::Pad)
    }

    pub fn text(token: impl Into<String>) -> Self {
        Self { kind: TokenKind::Text, text: Some(token.into()), loss_weight: 0.0 }
    }

    pub fn with_weight(mut self, w: f64) -> Self {
        self.loss_weight = w;
        self
    }

    pub fn is_sil(&self) -> bool {
        self.kind == TokenKind::Sil
    }

    pub fn is_well_formed(&self) -> bool {
        (self.kind == TokenKind::Text) == self.text.is_some() && self.loss_weight >= 0.0
    }
}

impl fmt::Display for TokenSlot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.text {
            Some(t) => write!(f, "TEXT({t})"),
            None => f.write_str(self.kind.as_str()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn payload_present_only_for_text() {
        assert!(TokenSlot::text("hi").is_well_formed());
        assert!(TokenSlot::sil().is_well_formed());
        let bad = TokenSlot { kind: TokenKind::Pad, text: Some("x".into()), loss_weight: 1.0 };
        assert!(!bad.is_well_formed());
        let neg = TokenSlot::sil().with_weight(-0.1);
        assert!(!neg.is_well_formed());
    }

    #[test]
    fn kind_names() {
        let names: Vec<_> = TokenKind::ALL.iter().map(|k| k.to_string()).collect();
        assert_eq!(names, ["SIL", "BOW", "BC", "PAD", "TEXT"]);
        assert_eq!(serde_json::to_string(&TokenKind::Bc).unwrap(), "\"BC\"");
    }
}
