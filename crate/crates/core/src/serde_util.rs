//! Serde adapters for report types: group-keyed maps become lists of
//! `{group, value}` entries and non-finite floats become strings.

pub(crate) mod group_map {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::trials::GroupKey;

    #[derive(Serialize, Deserialize)]
    struct Entry<T> {
        group: GroupKey,
        value: T,
    }

    pub fn serialize<S, T>(map: &BTreeMap<GroupKey, T>, s: S) -> Result<S::Ok, S::Error>
    where
        S: Serializer,
        T: Serialize + Clone,
    {
        map.iter()
            .map(|(group, value)| Entry {
                group: group.clone(),
                value: value.clone(),
            })
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D, T>(d: D) -> Result<BTreeMap<GroupKey, T>, D::Error>
    where
        D: Deserializer<'de>,
        T: Deserialize<'de>,
    {
        let entries = Vec::<Entry<T>>::deserialize(d)?;
        Ok(entries.into_iter().map(|e| (e.group, e.value)).collect())
    }
}

/// f64 that may be infinite: finite values are JSON numbers, the rest
/// are the strings `inf`, `-inf` and `nan`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Real(pub f64);

impl serde::Serialize for Real {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let v = self.0;
        if v.is_finite() {
            s.serialize_f64(v)
        } else {
            s.serialize_str(&format_real(v))
        }
    }
}

impl<'de> serde::Deserialize<'de> for Real {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(serde::Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(Real(v)),
            Repr::Str(s) => s
                .parse::<f64>()
                .map(Real)
                .map_err(|_| serde::de::Error::custom(format!("bad real `{s}`"))),
        }
    }
}

/// Shortest round-trip decimal form; `inf`, `-inf`, `nan` otherwise.
pub fn format_real(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

/// Group-keyed map of possibly non-finite reals.
pub(crate) mod group_real_map {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::Real;
    use crate::trials::GroupKey;

    #[derive(Serialize, Deserialize)]
    struct Entry {
        group: GroupKey,
        value: Real,
    }

    pub fn serialize<S: Serializer>(map: &BTreeMap<GroupKey, f64>, s: S) -> Result<S::Ok, S::Error> {
        map.iter()
            .map(|(group, &value)| Entry {
                group: group.clone(),
                value: Real(value),
            })
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<GroupKey, f64>, D::Error> {
        let entries = Vec::<Entry>::deserialize(d)?;
        Ok(entries.into_iter().map(|e| (e.group, e.value.0)).collect())
    }
}

/// A single possibly non-finite real.
pub(crate) mod real {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::Real;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        Real(*v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Real::deserialize(d).map(|r| r.0)
    }
}
