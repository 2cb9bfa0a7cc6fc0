use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::CorpusError;

macro_rules! entity_classes {
    ($($variant:ident => $count:expr),+ $(,)?) => {
        /// One of the 24 annotation classes of the systematic-review extraction task.
        #[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum EntityClass {
            $($variant),+
        }

        impl EntityClass {
            /// All classes in lexicographic order of their names.
            pub const ALL: [EntityClass; 24] = [$(EntityClass::$variant),+];

            pub fn name(self) -> &'static str {
                match self {
                    $(EntityClass::$variant => stringify!($variant)),+
                }
            }

            /// Number of mentions of this class in the reference training set.
            ///
            /// Used to order per-class report rows.
            pub fn reference_count(self) -> usize {
                match self {
                    $(EntityClass::$variant => $count),+
                }
            }
        }
    };
}

entity_classes! {
    CellLine => 39,
    Dose => 659,
    DoseDuration => 216,
    DoseDurationUnits => 204,
    DoseFrequency => 96,
    DoseRoute => 572,
    DoseUnits => 493,
    Endpoint => 4411,
    EndpointUnitOfMeasure => 706,
    GroupName => 963,
    GroupSize => 387,
    SampleSize => 45,
    Sex => 612,
    Species => 1624,
    Strain => 375,
    TestArticle => 1922,
    TestArticlePurity => 28,
    TestArticleVerification => 6,
    TimeAtDose => 117,
    TimeAtFirstDose => 47,
    TimeAtLastDose => 23,
    TimeEndpointAssessed => 672,
    TimeUnits => 608,
    Vehicle => 440,
}

impl fmt::Display for EntityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EntityClass {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EntityClass::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s)
            .ok_or_else(|| CorpusError::UnknownClass(s.to_string()))
    }
}

impl Serialize for EntityClass {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for EntityClass {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
