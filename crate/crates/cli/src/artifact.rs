//! Output files and the headers they start with.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const POPULATION: &str = "population.ndjson";
pub const OBSERVATIONS: &str = "observations.ndjson";
pub const TRUTH: &str = "truth.ndjson";

/// Provenance written at the top of every artifact.
#[derive(Debug, Clone, Serialize)]
pub struct Header {
    pub tool: String,
    pub config_sha256: String,
    pub seed: u64,
}

impl Header {
    pub fn new(config_sha256: String, seed: u64) -> Self {
        Header {
            tool: format!("topics {VERSION}"),
            config_sha256,
            seed,
        }
    }

    fn write_comment<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "# {}", self.tool)?;
        writeln!(w, "# config_sha256 {}", self.config_sha256)?;
        writeln!(w, "# seed {}", self.seed)
    }
}

pub struct OutDir {
    dir: PathBuf,
    header: Header,
}

impl OutDir {
    pub fn create(dir: &Path, header: Header) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(OutDir {
            dir: dir.to_path_buf(),
            header,
        })
    }

    pub fn header(&self) -> &Header {
        &self.header
    }

    /// Writes a line-oriented file behind `#` header lines.
    pub fn write_text<F>(&self, name: &str, body: F) -> Result<PathBuf>
    where
        F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    {
        let path = self.dir.join(name);
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut w = BufWriter::new(file);
        self.header
            .write_comment(&mut w)
            .and_then(|_| body(&mut w))
            .and_then(|_| w.flush())
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    /// JSON has no comments, so the header goes in a leading `header` field.
    pub fn write_json<T: Serialize>(&self, name: &str, key: &str, value: &T) -> Result<PathBuf> {
        let path = self.dir.join(name);
        let doc = serde_json::json!({ "header": &self.header, key: value });
        let mut text = serde_json::to_string_pretty(&doc)?;
        text.push('\n');
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    /// Opens an upstream artifact, naming the subcommand that makes it when
    /// it is missing.
    pub fn open_upstream(&self, name: &str, producer: &str) -> Result<BufReader<File>> {
        let path = self.dir.join(name);
        if !path.is_file() {
            bail!(
                "missing {}: run `topics {producer}` with the same --out first",
                path.display()
            );
        }
        let file = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
        Ok(BufReader::new(file))
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }
}

/// Reads the `config_sha256` from an artifact header, if it has one.
pub fn header_hash<R: BufRead>(reader: R) -> Option<String> {
    reader
        .lines()
        .map_while(|l| l.ok())
        .take_while(|l| l.starts_with('#'))
        .find_map(|l| l.strip_prefix("# config_sha256 ").map(str::to_string))
}
