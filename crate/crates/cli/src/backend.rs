use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{bail, Context};
use synprobe::lm::{NgramModel, RemoteBackend, RemoteConfig};
use synprobe::toy::{ToyGrammar, ToyProfile};
use synprobe::{AmbiguityItem, LanguageModel};

use crate::files::sha256_hex;

/// `toy`, `builtin:corpus=PATH[,order=N][,discount=D]` or `remote[:URL]`.
#[derive(Debug, Clone, PartialEq)]
pub enum BackendSpec {
    Toy,
    Builtin { corpus: PathBuf, order: usize, discount: f64 },
    Remote { url: Option<String> },
}

impl FromStr for BackendSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        match kind {
            "toy" if rest.is_empty() => Ok(BackendSpec::Toy),
            "remote" => Ok(BackendSpec::Remote { url: (!rest.is_empty()).then(|| rest.to_string()) }),
            "builtin" => {
                let mut corpus = None;
                let mut order = 3;
                let mut discount = 0.75;
                for kv in rest.split(',').filter(|kv| !kv.is_empty()) {
                    let (k, v) = kv.split_once('=').ok_or_else(|| format!("expected key=value, got `{kv}`"))?;
                    match k {
                        "corpus" => corpus = Some(PathBuf::from(v)),
                        "order" => order = v.parse().map_err(|_| format!("bad order `{v}`"))?,
                        "discount" => discount = v.parse().map_err(|_| format!("bad discount `{v}`"))?,
                        _ => return Err(format!("unknown builtin option `{k}`")),
                    }
                }
                let corpus = corpus.ok_or("builtin backend needs corpus=PATH")?;
                Ok(BackendSpec::Builtin { corpus, order, discount })
            }
            _ => Err(format!("unknown backend `{s}` (expected toy, builtin:corpus=PATH or remote:URL)")),
        }
    }
}

pub enum Backend {
    Toy(ToyGrammar),
    Ngram(NgramModel),
    Remote(RemoteBackend),
}

impl Backend {
    pub fn model(&self) -> &dyn LanguageModel {
        match self {
            Backend::Toy(g) => g.model(),
            Backend::Ngram(m) => m,
            Backend::Remote(r) => r,
        }
    }

    pub fn toy(&self) -> Option<&ToyGrammar> {
        match self {
            Backend::Toy(g) => Some(g),
            _ => None,
        }
    }
}

/// A loaded backend plus a string that changes whenever its outputs could.
pub struct Loaded {
    pub backend: Backend,
    pub fingerprint: String,
}

/// Errors here are configuration errors except for an unreachable remote.
pub enum LoadError {
    Config(anyhow::Error),
    Unavailable(anyhow::Error),
}

pub fn load(spec: &BackendSpec, env_url: Option<&str>, items: &[AmbiguityItem]) -> Result<Loaded, LoadError> {
    let config = |e: anyhow::Error| LoadError::Config(e);
    match spec {
        BackendSpec::Toy => {
            let grammar = ToyGrammar::build(items, &ToyProfile::default())
                .context("materials do not build a toy grammar")
                .map_err(config)?;
            let fingerprint = format!("toy:{}", sha256_hex(serde_json::to_string(items).unwrap().as_bytes()));
            Ok(Loaded { backend: Backend::Toy(grammar), fingerprint })
        }
        BackendSpec::Builtin { corpus, order, discount } => {
            let text = std::fs::read_to_string(corpus)
                .with_context(|| format!("cannot read corpus {}", corpus.display()))
                .map_err(config)?;
            let model = NgramModel::train(&text, *order, *discount).context("cannot train n-gram model").map_err(config)?;
            let fingerprint = format!("ngram:{}:{order}:{discount}", sha256_hex(text.as_bytes()));
            Ok(Loaded { backend: Backend::Ngram(model), fingerprint })
        }
        BackendSpec::Remote { url } => {
            let Some(url) = url.as_deref().or(env_url) else {
                return Err(config(anyhow::anyhow!("remote backend needs a URL or SYNPROBE_BACKEND_URL")));
            };
            let client = RemoteBackend::connect(url, RemoteConfig::default())
                .with_context(|| format!("cannot reach backend at {url}"))
                .map_err(LoadError::Unavailable)?;
            let fingerprint = format!("remote:{url}:{}", client.descriptor().name);
            Ok(Loaded { backend: Backend::Remote(client), fingerprint })
        }
    }
}

pub fn check_spec(spec: &BackendSpec) -> anyhow::Result<()> {
    if let BackendSpec::Builtin { order, discount, .. } = spec {
        if *order == 0 {
            bail!("n-gram order must be positive");
        }
        if !(0.0..1.0).contains(discount) {
            bail!("discount {discount} outside [0, 1)");
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_specs() {
        assert_eq!("toy".parse::<BackendSpec>().unwrap(), BackendSpec::Toy);
        assert_eq!(
            "builtin:corpus=c.txt,order=2".parse::<BackendSpec>().unwrap(),
            BackendSpec::Builtin { corpus: "c.txt".into(), order: 2, discount: 0.75 }
        );
        assert_eq!(
            "remote:http://localhost:8000".parse::<BackendSpec>().unwrap(),
            BackendSpec::Remote { url: Some("http://localhost:8000".into()) }
        );
        assert_eq!("remote".parse::<BackendSpec>().unwrap(), BackendSpec::Remote { url: None });
        assert!("builtin:order=2".parse::<BackendSpec>().is_err());
        assert!("gpt".parse::<BackendSpec>().is_err());
    }
}
