//! JSON bodies of the `/v1` language-model protocol.
//!
//! | route | request | response |
//! |---|---|---|
//! | `GET /v1/model` | | [`ModelInfo`] |
//! | `POST /v1/distribution` | [`DistributionRequest`] | [`LogprobsResponse`] (length V) |
//! | `POST /v1/score` | [`ScoreRequest`] | [`LogprobsResponse`] (length L-1) |
//! | `POST /v1/tokenize` | [`TokenizeRequest`] | [`TokenizeResponse`] |
//!
//! Log-probabilities are natural logs. A probability of exactly zero is
//! sent as `null`, since JSON has no infinities.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{TokenId, TokenizerKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub name: String,
    pub vocab: Vec<String>,
    pub eos_id: TokenId,
    pub tokenizer_kind: TokenizerKind,
    #[serde(default)]
    pub continuation_marker_prefix: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unk_id: Option<TokenId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_context: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionRequest {
    pub context_ids: Vec<TokenId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub token_ids: Vec<TokenId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizeRequest {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizeResponse {
    pub token_ids: Vec<TokenId>,
    pub word_spans: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogprobsResponse {
    #[serde(serialize_with = "ser_logprobs", deserialize_with = "de_logprobs")]
    pub logprobs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub reason: String,
}

fn ser_logprobs<S: Serializer>(values: &[f64], s: S) -> Result<S::Ok, S::Error> {
    let wire: Vec<Option<f64>> = values
        .iter()
        .map(|v| v.is_finite().then_some(*v))
        .collect();
    wire.serialize(s)
}

fn de_logprobs<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
    let wire: Vec<Option<f64>> = Vec::deserialize(d)?;
    Ok(wire.into_iter().map(|v| v.unwrap_or(f64::NEG_INFINITY)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_probability_travels_as_null() {
        let body = LogprobsResponse {
            logprobs: vec![-0.5, f64::NEG_INFINITY, -1.25],
        };
        let json = serde_json::to_string(&body).unwrap();
        assert_eq!(json, r#"{"logprobs":[-0.5,null,-1.25]}"#);
        let back: LogprobsResponse = serde_json::from_str(&json).unwrap();
        assert_eq!(back, body);
    }

    #[test]
    fn model_info_field_names() {
        let json = r###"{"name":"m","vocab":["a","</s>"],"eos_id":1,"tokenizer_kind":"Subword","continuation_marker_prefix":"##"}"###;
        let info: ModelInfo = serde_json::from_str(json).unwrap();
        assert_eq!(info.tokenizer_kind, TokenizerKind::Subword);
        assert_eq!(info.max_context, None);
    }
}
