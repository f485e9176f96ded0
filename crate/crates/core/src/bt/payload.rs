//! Function payload: small broker-borne key/value data.
//!
//! Values are scalars or data-store ids, never raw large blobs. Reserved
//! keys `SEL` and `END` drive the selector structure of converted state
//! machines.

use std::collections::BTreeMap;

use serde::de::{self, Deserializer, MapAccess, Visitor};
use serde::ser::{SerializeMap, Serializer};
use serde::{Deserialize, Serialize};

use crate::ids::DataId;

pub const SEL_KEY: &str = "SEL";
pub const END_KEY: &str = "END";

/// Default serialized payload limit: 1 MiB.
pub const DEFAULT_PAYLOAD_LIMIT: usize = 1024 * 1024;

/// A scalar payload value or a reference into the data store.
#[derive(Debug, Clone, PartialEq)]
pub enum PayloadValue {
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    Data(DataId),
}

impl PayloadValue {
    /// Truthiness used by `loop_till_end` flags and guards.
    pub fn is_truthy(&self) -> bool {
        match self {
            PayloadValue::Bool(b) => *b,
            PayloadValue::Int(n) => *n != 0,
            PayloadValue::Float(x) => *x != 0.0,
            PayloadValue::Str(s) => !s.is_empty() && s != "false" && s != "0",
            PayloadValue::Data(_) => true,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            PayloadValue::Str(s) => Some(s),
            _ => None,
        }
    }
}

impl From<&str> for PayloadValue {
    fn from(s: &str) -> Self {
        PayloadValue::Str(s.to_string())
    }
}

impl From<String> for PayloadValue {
    fn from(s: String) -> Self {
        PayloadValue::Str(s)
    }
}

impl From<bool> for PayloadValue {
    fn from(b: bool) -> Self {
        PayloadValue::Bool(b)
    }
}

impl From<i64> for PayloadValue {
    fn from(n: i64) -> Self {
        PayloadValue::Int(n)
    }
}

impl Serialize for PayloadValue {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            PayloadValue::Bool(b) => s.serialize_bool(*b),
            PayloadValue::Int(n) => s.serialize_i64(*n),
            PayloadValue::Float(x) => s.serialize_f64(*x),
            PayloadValue::Str(v) => s.serialize_str(v),
            PayloadValue::Data(id) => {
                let mut m = s.serialize_map(Some(1))?;
                m.serialize_entry("$data", id.as_str())?;
                m.end()
            }
        }
    }
}

impl<'de> Deserialize<'de> for PayloadValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = PayloadValue;

            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a scalar or {\"$data\": id}")
            }

            fn visit_bool<E>(self, v: bool) -> Result<PayloadValue, E> {
                Ok(PayloadValue::Bool(v))
            }

            fn visit_i64<E>(self, v: i64) -> Result<PayloadValue, E> {
                Ok(PayloadValue::Int(v))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<PayloadValue, E> {
                i64::try_from(v)
                    .map(PayloadValue::Int)
                    .map_err(|_| E::custom("integer out of range"))
            }

            fn visit_f64<E>(self, v: f64) -> Result<PayloadValue, E> {
                Ok(PayloadValue::Float(v))
            }

            fn visit_str<E>(self, v: &str) -> Result<PayloadValue, E> {
                Ok(PayloadValue::Str(v.to_string()))
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<PayloadValue, A::Error> {
                let key: String = map
                    .next_key()?
                    .ok_or_else(|| de::Error::custom("empty payload value object"))?;
                if key != "$data" {
                    return Err(de::Error::custom("expected \"$data\" key"));
                }
                let id: String = map.next_value()?;
                Ok(PayloadValue::Data(DataId::new(id)))
            }
        }
        d.deserialize_any(V)
    }
}

/// Ordered key/value map carried between leaves.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Payload {
    entries: BTreeMap<String, PayloadValue>,
}

impl Payload {
    pub fn new() -> Self {
        Payload::default()
    }

    pub fn get(&self, key: &str) -> Option<&PayloadValue> {
        self.entries.get(key)
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl Into<PayloadValue>) {
        self.entries.insert(key.into(), value.into());
    }

    pub fn remove(&mut self, key: &str) -> Option<PayloadValue> {
        self.entries.remove(key)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn is_truthy(&self, key: &str) -> bool {
        self.get(key).map(PayloadValue::is_truthy).unwrap_or(false)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &PayloadValue)> {
        self.entries.iter()
    }

    /// Flat-merge another payload into this one; entries from `other`
    /// overwrite existing keys.
    pub fn merge_from(&mut self, other: Payload) {
        self.entries.extend(other.entries);
    }

    /// Size of the JSON serialization, the quantity the broker limit
    /// applies to.
    pub fn serialized_size(&self) -> usize {
        serde_json::to_vec(self).map(|v| v.len()).unwrap_or(usize::MAX)
    }
}
