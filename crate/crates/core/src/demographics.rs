//! Demographic categories shared by the census, the synthetic world and the
//! debiasing models.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

/// The four age brackets reported by the demographic classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AgeBracket {
    #[serde(rename = "le18")]
    Le18,
    #[serde(rename = "19-29")]
    From19To29,
    #[serde(rename = "30-39")]
    From30To39,
    #[serde(rename = "ge40")]
    Ge40,
}

impl AgeBracket {
    pub const ALL: [AgeBracket; 4] = [
        AgeBracket::Le18,
        AgeBracket::From19To29,
        AgeBracket::From30To39,
        AgeBracket::Ge40,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> AgeBracket {
        Self::ALL[i]
    }

    pub fn label(self) -> &'static str {
        match self {
            AgeBracket::Le18 => "le18",
            AgeBracket::From19To29 => "19-29",
            AgeBracket::From30To39 => "30-39",
            AgeBracket::Ge40 => "ge40",
        }
    }

    /// Bracket for an age in whole years.
    pub fn from_years(age: u32) -> AgeBracket {
        match age {
            0..=18 => AgeBracket::Le18,
            19..=29 => AgeBracket::From19To29,
            30..=39 => AgeBracket::From30To39,
            _ => AgeBracket::Ge40,
        }
    }
}

impl fmt::Display for AgeBracket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for AgeBracket {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|a| a.label() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown age bracket {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Gender {
    #[serde(rename = "m")]
    Male,
    #[serde(rename = "f")]
    Female,
}

impl Gender {
    pub const ALL: [Gender; 2] = [Gender::Male, Gender::Female];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Gender {
        Self::ALL[i]
    }

    pub fn label(self) -> &'static str {
        match self {
            Gender::Male => "m",
            Gender::Female => "f",
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Gender {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "m" => Ok(Gender::Male),
            "f" => Ok(Gender::Female),
            _ => Err(Error::InvalidArgument(format!("unknown gender {s:?}"))),
        }
    }
}

/// Number of (age, gender) cells per geographic unit.
pub const N_CELLS: usize = 8;

/// Index of an (age, gender) cell in row-major age-then-gender order.
pub fn cell_index(age: AgeBracket, gender: Gender) -> usize {
    age.index() * 2 + gender.index()
}

pub fn cell_from_index(i: usize) -> (AgeBracket, Gender) {
    (AgeBracket::from_index(i / 2), Gender::from_index(i % 2))
}

/// All eight cells in canonical order.
pub fn cells() -> impl Iterator<Item = (AgeBracket, Gender)> {
    (0..N_CELLS).map(cell_from_index)
}

macro_rules! code2 {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name([u8; 2]);

        impl $name {
            pub fn new(code: &str) -> Result<Self, Error> {
                let b = code.as_bytes();
                if b.len() != 2 || !b.iter().all(|c| c.is_ascii_alphabetic()) {
                    return Err(Error::InvalidArgument(format!(
                        concat!("invalid ", stringify!($name), " {:?}"),
                        code
                    )));
                }
                Ok(Self([b[0], b[1]]))
            }

            pub const fn from_bytes(b: [u8; 2]) -> Self {
                Self(b)
            }

            pub fn as_str(&self) -> &str {
                // constructed from ASCII only
                std::str::from_utf8(&self.0).unwrap_or("??")
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({})", stringify!($name), self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                Self::new(s)
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(self.as_str())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                Self::new(&s).map_err(serde::de::Error::custom)
            }
        }
    };
}

code2!(
    /// Two-letter language code (`en`, `es`, ...).
    LangCode
);
code2!(
    /// Two-letter country code (`US`, `CA`, ...).
    CountryCode
);

impl LangCode {
    pub const EN: LangCode = LangCode::from_bytes(*b"en");
    pub const ES: LangCode = LangCode::from_bytes(*b"es");
}

impl CountryCode {
    pub const US: CountryCode = CountryCode::from_bytes(*b"US");
    pub const CA: CountryCode = CountryCode::from_bytes(*b"CA");
    pub const MX: CountryCode = CountryCode::from_bytes(*b"MX");
}
