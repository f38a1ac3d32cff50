//! Line-delimited JSON messages exchanged with an out-of-process model.
//!
//! ```text
//! client {"op":"hello","proto":1}     -> server {"op":"vocab","tokens":[...],"bos":i,"eos":j,"unk":k}
//! client {"op":"next","ctx":[ids]}    -> server {"op":"dist","logp":[|V| floats]}
//!                                        server {"op":"err","code":"...","msg":"..."}
//! ```
//!
//! Floats are JSON numbers or the string `"-inf"`.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::TokenId;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum ClientMessage {
    Hello { proto: u32 },
    Next { ctx: Vec<TokenId> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum ServerMessage {
    Vocab {
        tokens: Vec<String>,
        bos: TokenId,
        eos: TokenId,
        unk: TokenId,
    },
    Dist {
        #[serde(with = "float_vec")]
        logp: Vec<f64>,
    },
    Err {
        code: String,
        msg: String,
    },
}

/// Serde adapter for an `f64` that may be negative infinity.
pub mod float_or_neg_inf {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if *v == f64::NEG_INFINITY {
            s.serialize_str("-inf")
        } else if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            Err(serde::ser::Error::custom(format!("{v} cannot be encoded")))
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) if s == "-inf" => Ok(f64::NEG_INFINITY),
            Repr::Str(s) => Err(serde::de::Error::custom(format!("unexpected float string `{s}`"))),
        }
    }
}

mod float_vec {
    use super::*;

    #[derive(Serialize, Deserialize)]
    struct Wrapped(#[serde(with = "super::float_or_neg_inf")] f64);

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|x| Wrapped(*x)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let v: Vec<Wrapped> = Vec::deserialize(d)?;
        Ok(v.into_iter().map(|w| w.0).collect())
    }
}

/// One message per line, no embedded newlines.
pub fn encode_line<T: Serialize>(msg: &T) -> Result<String, serde_json::Error> {
    let mut s = serde_json::to_string(msg)?;
    s.push('\n');
    Ok(s)
}
