//! Versioned text schemas shared by every file and wire payload.
//!
//! All formats are UTF-8 JSON (single documents or JSON Lines). Floats are
//! written with shortest round-trip precision and parsed exactly, so a
//! load/save cycle is bit-identical.

use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};
use sha2::{Digest, Sha256};

pub const DATASET_SCHEMA: &str = "sgdata/1";
pub const GRAPH_SCHEMA: &str = "sggraph/1";
pub const PLAN_SCHEMA: &str = "sgplan/1";
pub const EVENTS_SCHEMA: &str = "sgevents/1";
pub const EPISODE_SCHEMA: &str = "sgepisode/1";
pub const METRICS_SCHEMA: &str = "sgmetrics/1";
pub const API_SCHEMA: &str = "sgapi/1";

/// Hex SHA-256 of a byte string, truncated to 16 hex chars.
pub fn digest_bytes(bytes: &[u8]) -> String {
    let out = Sha256::digest(bytes);
    out.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Digest of the canonical JSON encoding of a value.
pub fn digest_json<T: Serialize>(value: &T) -> String {
    let text = serde_json::to_vec(value).expect("serializable value");
    digest_bytes(&text)
}

/// 64-bit FNV-1a over a sequence of words. Used for in-memory cache keys.
pub fn fnv64<I: IntoIterator<Item = u64>>(words: I) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for w in words {
        for b in w.to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

/// A float that tolerates the textual spellings `NaN`, `Infinity`,
/// `-Infinity` and `null` on input, so such values reach validation and are
/// rejected there with a schema error rather than an opaque parse failure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LenientF64(pub f64);

impl Serialize for LenientF64 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.0)
    }
}

impl<'de> Deserialize<'de> for LenientF64 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = LenientF64;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number, NaN, Infinity or null")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<LenientF64, E> {
                Ok(LenientF64(v))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<LenientF64, E> {
                Ok(LenientF64(v as f64))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<LenientF64, E> {
                Ok(LenientF64(v as f64))
            }

            fn visit_unit<E: de::Error>(self) -> Result<LenientF64, E> {
                Ok(LenientF64(f64::NAN))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<LenientF64, E> {
                match v {
                    "NaN" | "nan" => Ok(LenientF64(f64::NAN)),
                    "Infinity" | "inf" => Ok(LenientF64(f64::INFINITY)),
                    "-Infinity" | "-inf" => Ok(LenientF64(f64::NEG_INFINITY)),
                    other => Err(E::invalid_value(de::Unexpected::Str(other), &self)),
                }
            }
        }
        d.deserialize_any(V)
    }
}

pub(crate) fn unwrap_floats(v: &[LenientF64]) -> Vec<f64> {
    v.iter().map(|x| x.0).collect()
}

pub(crate) fn unwrap_triples(v: &[[LenientF64; 3]]) -> Vec<[f64; 3]> {
    v.iter().map(|t| [t[0].0, t[1].0, t[2].0]).collect()
}
