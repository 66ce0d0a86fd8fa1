use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Brazilian postal code, always eight ASCII digits with leading zeros kept.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cep([u8; 8]);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CepError {
    #[error("empty CEP")]
    Empty,
    #[error("non-numeric CEP {0:?}")]
    NonNumeric(String),
    #[error("CEP {0:?} has more than 8 digits")]
    TooLong(String),
}

/// Strips surrounding whitespace and a single optional hyphen, then left-pads
/// to eight digits.
pub fn normalize_cep(raw: &str) -> Result<Cep, CepError> {
    let trimmed = raw.trim();
    let mut digits = [b'0'; 8];
    let mut len = 0usize;
    let mut hyphens = 0usize;
    let mut buf = [0u8; 8];
    for b in trimmed.bytes() {
        match b {
            b'0'..=b'9' => {
                if len == 8 {
                    return Err(CepError::TooLong(raw.to_string()));
                }
                buf[len] = b;
                len += 1;
            }
            b'-' if hyphens == 0 => hyphens += 1,
            _ => return Err(CepError::NonNumeric(raw.to_string())),
        }
    }
    if len == 0 {
        return Err(if hyphens == 0 {
            CepError::Empty
        } else {
            CepError::NonNumeric(raw.to_string())
        });
    }
    digits[8 - len..].copy_from_slice(&buf[..len]);
    Ok(Cep(digits))
}

impl Cep {
    pub fn as_str(&self) -> &str {
        // only ASCII digits are ever stored
        std::str::from_utf8(&self.0).expect("CEP bytes are ASCII digits")
    }

    pub fn as_u32(&self) -> u32 {
        self.0
            .iter()
            .fold(0u32, |acc, d| acc * 10 + u32::from(d - b'0'))
    }

    pub fn from_u32(value: u32) -> Option<Cep> {
        if value > 99_999_999 {
            return None;
        }
        let mut digits = [b'0'; 8];
        let mut v = value;
        for slot in digits.iter_mut().rev() {
            *slot = b'0' + (v % 10) as u8;
            v /= 10;
        }
        Some(Cep(digits))
    }
}

impl FromStr for Cep {
    type Err = CepError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        normalize_cep(s)
    }
}

impl fmt::Display for Cep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Debug for Cep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Cep({})", self.as_str())
    }
}

impl Serialize for Cep {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Cep {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        normalize_cep(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Character-level reference: drop one hyphen, require digits, left-pad.
    fn oracle(raw: &str) -> Option<String> {
        let s = raw.trim().replacen('-', "", 1);
        if s.is_empty() || s.len() > 8 || !s.chars().all(|c| c.is_ascii_digit()) {
            return None;
        }
        Some(format!("{s:0>8}"))
    }

    #[test]
    fn table_value_passes_through() {
        assert_eq!(normalize_cep("77001422").unwrap().as_str(), "77001422");
    }

    #[test]
    fn short_codes_are_zero_padded() {
        assert_eq!(normalize_cep("1422").unwrap().as_str(), "00001422");
    }

    #[test]
    fn hyphenated_form() {
        let got = normalize_cep("77001-422").unwrap();
        assert_eq!(got.as_str(), oracle("77001-422").unwrap());
        assert_eq!(got.as_str(), "77001422");
        assert_eq!(normalize_cep("  13560-970 ").unwrap().as_str(), "13560970");
    }

    #[test]
    fn malformed_inputs() {
        assert!(matches!(
            normalize_cep("7700A422"),
            Err(CepError::NonNumeric(_))
        ));
        assert!(matches!(
            normalize_cep("77-001-422"),
            Err(CepError::NonNumeric(_))
        ));
        assert!(matches!(
            normalize_cep("770014221"),
            Err(CepError::TooLong(_))
        ));
        assert!(matches!(normalize_cep(""), Err(CepError::Empty)));
        assert!(matches!(normalize_cep("-"), Err(CepError::NonNumeric(_))));
    }

    #[test]
    fn numeric_round_trip() {
        let cep = normalize_cep("00001422").unwrap();
        assert_eq!(cep.as_u32(), 1422);
        assert_eq!(Cep::from_u32(1422), Some(cep));
        assert_eq!(Cep::from_u32(100_000_000), None);
    }

    proptest! {
        #[test]
        fn matches_oracle(raw in "[ ]?[0-9]{0,9}-?[0-9]{0,3}[a ]?") {
            let got = normalize_cep(&raw).ok().map(|c| c.as_str().to_string());
            prop_assert_eq!(got, oracle(&raw));
        }

        #[test]
        fn idempotent(raw in "[0-9]{1,5}-?[0-9]{0,3}") {
            if let Ok(once) = normalize_cep(&raw) {
                prop_assert_eq!(normalize_cep(once.as_str()).unwrap(), once);
            }
        }
    }
}
