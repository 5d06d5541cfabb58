//! Output files. Every file opens with the provenance of the run: CSV files
//! with `#` comment lines, JSON-lines files with a `provenance` object on the
//! first line, JSON documents with a top-level `provenance` field.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use vlc_secure_ee::json;

use crate::config::ExperimentConfig;
use crate::error::CliError;

/// Overrides the configured output directory (the `--out` flag still wins).
pub const OUT_DIR_ENV: &str = "VLC_EE_OUT_DIR";

pub const GIT_DESCRIBE: &str = env!("VLC_EE_GIT_DESCRIBE");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub git_describe: String,
    pub config_sha256: String,
    pub seed: u64,
    pub realizations: usize,
    pub command: String,
    #[serde(default)]
    pub notes: Vec<String>,
}

impl Provenance {
    pub fn new(cfg: &ExperimentConfig, command: &str) -> Self {
        Self {
            tool: "vlc-ee".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            git_describe: GIT_DESCRIBE.into(),
            config_sha256: cfg.hash(),
            seed: cfg.seed,
            realizations: cfg.realizations,
            command: command.into(),
            notes: Vec::new(),
        }
    }

    pub fn with_note(mut self, note: &str) -> Self {
        self.notes.push(note.into());
        self
    }

    fn comment_block(&self) -> String {
        let mut s = format!(
            "# tool: {} {}\n# git_describe: {}\n# config_sha256: {}\n# seed: {}\n# realizations: {}\n# command: {}\n",
            self.tool, self.version, self.git_describe, self.config_sha256, self.seed, self.realizations, self.command
        );
        for n in &self.notes {
            s += &format!("# note: {n}\n");
        }
        s
    }
}

/// Creates `dir` (and parents) if needed.
pub fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn write_csv<R: Serialize>(path: &Path, prov: &Provenance, rows: &[R]) -> Result<(), CliError> {
    let mut out = create(path)?;
    out.write_all(prov.comment_block().as_bytes())?;
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads rows written by [`write_csv`], skipping the comment block.
pub fn read_csv<R: DeserializeOwned>(path: &Path) -> Result<Vec<R>, CliError> {
    let file = File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(file);
    r.deserialize().map(|row| row.map_err(CliError::from)).collect()
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProvenanceLine {
    provenance: Provenance,
}

pub fn write_jsonl<R: Serialize>(path: &Path, prov: &Provenance, rows: &[R]) -> Result<(), CliError> {
    let mut out = create(path)?;
    writeln!(out, "{}", json::to_string(&ProvenanceLine { provenance: prov.clone() })?)?;
    for r in rows {
        writeln!(out, "{}", json::to_string(r)?)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl<R: DeserializeOwned>(path: &Path) -> Result<(Provenance, Vec<R>), CliError> {
    let file = File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut lines = BufReader::new(file).lines();
    let first = lines.next().ok_or_else(|| CliError::Schema("empty JSON-lines file".into()))??;
    let head: ProvenanceLine = serde_json::from_str(&first)?;
    let rows = lines.map(|l| Ok(serde_json::from_str(&l?)?)).collect::<Result<Vec<R>, CliError>>()?;
    Ok((head.provenance, rows))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut out = create(path)?;
    out.write_all(json::to_string_pretty(value)?.as_bytes())?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

/// Output directory: explicit flag, then [`OUT_DIR_ENV`], then the config file.
pub fn resolve_out_dir(flag: Option<PathBuf>, cfg: &ExperimentConfig) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| cfg.output_dir.clone())
}
