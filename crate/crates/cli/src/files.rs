//! Stage files under the output directory.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// First 16 hex digits of the SHA-256 of `value` as JSON.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_string(value).expect("config serializes");
    sha256_hex(json.as_bytes())[..16].to_string()
}

pub struct Layout {
    pub out: PathBuf,
}

impl Layout {
    pub fn prompts(&self) -> PathBuf {
        self.out.join("prompts.jsonl")
    }

    /// Items that survived filtering, in the materials format.
    pub fn items(&self) -> PathBuf {
        self.out.join("items.tsv")
    }

    pub fn completions(&self, slug: &str) -> PathBuf {
        self.out.join("completions").join(format!("{slug}.jsonl"))
    }

    pub fn parses(&self, slug: &str) -> PathBuf {
        self.out.join("parses").join(format!("{slug}.conllu"))
    }

    pub fn labels(&self, slug: &str) -> PathBuf {
        self.out.join("labels").join(format!("{slug}.jsonl"))
    }

    pub fn discards(&self, slug: &str) -> PathBuf {
        self.out.join("labels").join(format!("{slug}.discards.csv"))
    }

    pub fn estimates(&self, slug: &str) -> PathBuf {
        self.out.join("estimates").join(format!("{slug}.csv"))
    }

    pub fn metrics(&self, name: &str) -> PathBuf {
        self.out.join("metrics").join(name)
    }

    pub fn report(&self, name: &str) -> PathBuf {
        self.out.join("report").join(name)
    }

    /// Decoding slugs with a completions file, sorted.
    pub fn slugs(&self) -> anyhow::Result<Vec<String>> {
        let dir = self.out.join("completions");
        let entries = match fs::read_dir(&dir) {
            Ok(e) => e,
            Err(_) => bail!("missing stage input {}: run `synprobe generate` first", dir.display()),
        };
        let mut slugs: Vec<String> = entries
            .filter_map(|e| e.ok())
            .filter_map(|e| e.file_name().to_str()?.strip_suffix(".jsonl").map(str::to_string))
            .collect();
        slugs.sort();
        if slugs.is_empty() {
            bail!("no completion files in {}: run `synprobe generate` first", dir.display());
        }
        Ok(slugs)
    }
}

pub fn meta_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    path.with_file_name(name)
}

/// Fails with a message naming the file and the stage that writes it.
pub fn require(path: &Path, stage: &str) -> anyhow::Result<()> {
    if !path.exists() {
        bail!("missing stage input {}: run `synprobe {stage}` first", path.display());
    }
    Ok(())
}

fn create(path: &Path) -> anyhow::Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    let f = fs::File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(BufWriter::new(f))
}

pub fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn read_text(path: &Path, stage: &str) -> anyhow::Result<String> {
    require(path, stage)?;
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> anyhow::Result<()> {
    let mut w = create(path)?;
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path, stage: &str) -> anyhow::Result<Vec<T>> {
    require(path, stage)?;
    let f = fs::File::open(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?);
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: DeserializeOwned>(path: &Path, stage: &str) -> anyhow::Result<T> {
    let text = read_text(path, stage)?;
    serde_json::from_str(&text).with_context(|| format!("cannot parse {}", path.display()))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned>(path: &Path, stage: &str) -> anyhow::Result<Vec<T>> {
    require(path, stage)?;
    let mut r = csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    r.deserialize().map(|row| row.with_context(|| format!("bad row in {}", path.display()))).collect()
}
