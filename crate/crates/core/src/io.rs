//! JSON file formats: systems, morphisms, homotopies.
//!
//! Rationals serialize as canonical `"p/q"` strings (lowest terms, positive
//! denominator, bare integers without the `/q`). Parsing then serializing a
//! document reproduces it byte for byte.

use crate::circle::Rat;
use num::{BigInt, BigRational, One};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::str::FromStr;

pub fn format_rat(r: &Rat) -> String {
    if r.denom().is_one() {
        format!("{}", r.numer())
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn parse_rat(s: &str) -> Result<Rat, String> {
    let s = s.trim();
    match s.split_once('/') {
        None => BigInt::from_str(s).map(Rat::from).map_err(|e| e.to_string()),
        Some((n, d)) => {
            let n = BigInt::from_str(n.trim()).map_err(|e| e.to_string())?;
            let d = BigInt::from_str(d.trim()).map_err(|e| e.to_string())?;
            if d <= BigInt::from(0) {
                return Err(format!("denominator must be positive in `{s}`"));
            }
            Ok(BigRational::new(n, d))
        }
    }
}

/// Serde adapter for a single rational as a string.
pub mod rat_string {
    use super::*;

    pub fn serialize<S: Serializer>(r: &Rat, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format_rat(r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rat, D::Error> {
        let s = String::deserialize(d)?;
        parse_rat(&s).map_err(serde::de::Error::custom)
    }
}

/// Serde adapter for `Option<Rat>`.
pub mod rat_opt {
    use super::*;

    pub fn serialize<S: Serializer>(r: &Option<Rat>, s: S) -> Result<S::Ok, S::Error> {
        match r {
            Some(v) => s.serialize_some(&format_rat(v)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Rat>, D::Error> {
        let o = Option::<String>::deserialize(d)?;
        o.map(|s| parse_rat(&s).map_err(serde::de::Error::custom)).transpose()
    }
}

/// Serde adapter for `Vec<Rat>`.
pub mod rat_vec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &Vec<Rat>, s: S) -> Result<S::Ok, S::Error> {
        let strings: Vec<String> = v.iter().map(format_rat).collect();
        strings.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Rat>, D::Error> {
        let strings = Vec::<String>::deserialize(d)?;
        strings.iter().map(|s| parse_rat(s).map_err(serde::de::Error::custom)).collect()
    }
}

/// Serde adapter for `Vec<Vec<Rat>>`.
pub mod rat_vec_vec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &Vec<Vec<Rat>>, s: S) -> Result<S::Ok, S::Error> {
        let strings: Vec<Vec<String>> = v.iter().map(|row| row.iter().map(format_rat).collect()).collect();
        strings.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<Rat>>, D::Error> {
        let strings = Vec::<Vec<String>>::deserialize(d)?;
        strings
            .iter()
            .map(|row| row.iter().map(|s| parse_rat(s).map_err(serde::de::Error::custom)).collect())
            .collect()
    }
}

#[cfg(test)]
mod rat_tests {
    use super::*;
    use crate::circle::rat;

    #[test]
    fn rational_round_trip() {
        for (n, d) in [(1i64, 3i64), (-1, 4), (0, 1), (7, 1), (22, 7)] {
            let r = rat(n, d);
            assert_eq!(parse_rat(&format_rat(&r)).unwrap(), r);
        }
        assert_eq!(parse_rat("2/4").unwrap(), rat(1, 2));
        assert!(parse_rat("1/-2").is_err());
        assert!(parse_rat("x").is_err());
    }
}
