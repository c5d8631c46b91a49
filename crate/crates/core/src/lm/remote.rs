use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::protocol::{
    DistributionRequest, ErrorBody, LogprobsResponse, ModelInfo, ScoreRequest, TokenizeRequest,
    TokenizeResponse,
};
use super::{
    check_context, BackendDescriptor, BackendError, LanguageModel, TokenDistribution, TokenId,
    Tokenization, Vocabulary,
};

const DEFAULT_MAX_CONTEXT: usize = 1024;

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub timeout: Duration,
    /// Extra attempts after the first failure.
    pub retries: usize,
    pub max_in_flight: usize,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            timeout: Duration::from_secs(30),
            retries: 3,
            max_in_flight: 8,
        }
    }
}

struct Semaphore {
    permits: Mutex<usize>,
    freed: Condvar,
}

impl Semaphore {
    fn new(n: usize) -> Self {
        Semaphore {
            permits: Mutex::new(n.max(1)),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.permits.lock().unwrap();
        while *n == 0 {
            n = self.freed.wait(n).unwrap();
        }
        *n -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Semaphore);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().unwrap() += 1;
        self.0.freed.notify_one();
    }
}

/// Client for a language model served over the `/v1` protocol.
pub struct RemoteBackend {
    base: String,
    agent: ureq::Agent,
    config: RemoteConfig,
    in_flight: Semaphore,
    descriptor: BackendDescriptor,
}

impl std::fmt::Debug for RemoteBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteBackend")
            .field("base", &self.base)
            .field("name", &self.descriptor.name)
            .finish()
    }
}

enum Failure {
    Retryable(String),
    Fatal(String),
}

impl RemoteBackend {
    /// Fetches `/v1/model` and builds the vocabulary from it.
    pub fn connect(url: &str, config: RemoteConfig) -> Result<Self, BackendError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let mut backend = RemoteBackend {
            base: url.trim_end_matches('/').to_string(),
            agent,
            in_flight: Semaphore::new(config.max_in_flight),
            config,
            descriptor: BackendDescriptor {
                name: String::new(),
                vocabulary: Vocabulary::word_level(Vec::new(), None, "</s>").unwrap(),
                max_context: 0,
            },
        };
        let info: ModelInfo = backend.request("/v1/model", None::<&()>)?;
        let vocabulary = Vocabulary::new(
            info.vocab,
            info.unk_id,
            info.eos_id,
            info.tokenizer_kind,
            info.continuation_marker_prefix,
        )
        .map_err(BackendError::Protocol)?;
        backend.descriptor = BackendDescriptor {
            name: info.name,
            vocabulary,
            max_context: info.max_context.unwrap_or(DEFAULT_MAX_CONTEXT),
        };
        Ok(backend)
    }

    pub fn url(&self) -> &str {
        &self.base
    }

    fn attempt<T: DeserializeOwned, B: Serialize>(&self, url: &str, body: Option<&B>) -> Result<T, Failure> {
        let _permit = self.in_flight.acquire();
        let response = match body {
            Some(b) => self.agent.post(url).send_json(b),
            None => self.agent.get(url).call(),
        };
        let mut response = response.map_err(|e| Failure::Retryable(e.to_string()))?;
        let status = response.status().as_u16();
        if status >= 400 {
            let reason = response
                .body_mut()
                .read_json::<ErrorBody>()
                .map(|e| format!("{}: {}", e.error, e.reason))
                .unwrap_or_else(|_| "no reason given".into());
            let msg = format!("HTTP {status} ({reason})");
            return Err(if status >= 500 { Failure::Retryable(msg) } else { Failure::Fatal(msg) });
        }
        response
            .body_mut()
            .with_config()
            .limit(256 * 1024 * 1024)
            .read_json::<T>()
            .map_err(|e| Failure::Fatal(format!("bad response body: {e}")))
    }

    fn request<T: DeserializeOwned, B: Serialize>(&self, path: &str, body: Option<&B>) -> Result<T, BackendError> {
        let url = format!("{}{path}", self.base);
        let attempts = self.config.retries + 1;
        let mut last = String::new();
        for i in 0..attempts {
            match self.attempt(&url, body) {
                Ok(v) => return Ok(v),
                Err(Failure::Fatal(msg)) => {
                    return Err(BackendError::Remote { attempts: i + 1, message: msg })
                }
                Err(Failure::Retryable(msg)) => {
                    log::warn!("{url}: attempt {} failed: {msg}", i + 1);
                    last = msg;
                    if i + 1 < attempts {
                        std::thread::sleep(Duration::from_millis(50 << i.min(6)));
                    }
                }
            }
        }
        Err(BackendError::Remote { attempts, message: last })
    }
}

impl LanguageModel for RemoteBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn next_distribution(&self, context: &[TokenId]) -> Result<TokenDistribution, BackendError> {
        check_context(&self.descriptor, context)?;
        let body = DistributionRequest { context_ids: context.to_vec() };
        let resp: LogprobsResponse = self.request("/v1/distribution", Some(&body))?;
        if resp.logprobs.len() != self.descriptor.vocabulary.len() {
            return Err(BackendError::Protocol(format!(
                "distribution of length {} for a vocabulary of {}",
                resp.logprobs.len(),
                self.descriptor.vocabulary.len()
            )));
        }
        Ok(TokenDistribution::from_logprobs(resp.logprobs))
    }

    fn tokenize(&self, text: &str) -> Result<Tokenization, BackendError> {
        let body = TokenizeRequest { text: text.to_string() };
        let resp: TokenizeResponse = self.request("/v1/tokenize", Some(&body))?;
        Ok(Tokenization { ids: resp.token_ids, word_spans: resp.word_spans })
    }

    fn score_logprobs(&self, tokens: &[TokenId]) -> Result<Vec<f64>, BackendError> {
        if tokens.len() < 2 {
            return Err(BackendError::SequenceTooShort(2));
        }
        check_context(&self.descriptor, &tokens[..tokens.len() - 1])?;
        let body = ScoreRequest { token_ids: tokens.to_vec() };
        let resp: LogprobsResponse = self.request("/v1/score", Some(&body))?;
        if resp.logprobs.len() != tokens.len() - 1 {
            return Err(BackendError::Protocol(format!(
                "{} scores for {} tokens",
                resp.logprobs.len(),
                tokens.len()
            )));
        }
        Ok(resp.logprobs)
    }
}
