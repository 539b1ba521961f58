//! Protein structure download.

use std::fmt;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use reqwest::StatusCode;
use thiserror::Error;

use super::{ExecutionClass, ToolDef, ToolResult};
use crate::llm::{ParamType, ToolSchema};

pub const RCSB_URL_TEMPLATE: &str = "https://files.rcsb.org/download/{ID}.pdb";

const RECORD_TAGS: &[&str] = &[
    "HEADER", "OBSLTE", "TITLE", "SPLIT", "CAVEAT", "COMPND", "SOURCE", "KEYWDS", "EXPDTA",
    "NUMMDL", "MDLTYP", "AUTHOR", "REVDAT", "SPRSDE", "JRNL", "REMARK", "DBREF", "DBREF1",
    "DBREF2", "SEQADV", "SEQRES", "MODRES", "HET", "HETNAM", "HETSYN", "FORMUL", "HELIX", "SHEET",
    "SSBOND", "LINK", "CISPEP", "SITE", "CRYST1", "ORIGX1", "ORIGX2", "ORIGX3", "SCALE1", "SCALE2",
    "SCALE3", "MTRIX1", "MTRIX2", "MTRIX3", "MODEL", "ATOM", "ANISOU", "TER", "HETATM", "ENDMDL",
    "CONECT", "MASTER", "END",
];

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("invalid PDB id {0:?}: expected a digit followed by three alphanumerics")]
    InvalidId(String),
    #[error("structure {0} not found")]
    NotFound(String),
    #[error("network failure: {0}")]
    NetworkFailure(String),
    #[error("downloaded file for {0} does not look like a PDB file")]
    NotPdb(String),
    #[error("cannot write structure: {0}")]
    Filesystem(#[from] io::Error),
}

/// Where structure text comes from.
pub trait StructureSource: Send + Sync + fmt::Debug {
    fn fetch(&self, pdb_id: &str) -> Result<String, FetchError>;

    fn describe(&self) -> String;
}

/// Serves `{dir}/{ID}.pdb` files.
#[derive(Debug, Clone)]
pub struct FixtureStructures {
    dir: PathBuf,
}

impl FixtureStructures {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }
}

impl StructureSource for FixtureStructures {
    fn fetch(&self, pdb_id: &str) -> Result<String, FetchError> {
        for name in [pdb_id.to_ascii_uppercase(), pdb_id.to_ascii_lowercase()] {
            let path = self.dir.join(format!("{name}.pdb"));
            match std::fs::read_to_string(&path) {
                Ok(text) => return Ok(text),
                Err(e) if e.kind() == io::ErrorKind::NotFound => continue,
                Err(e) => return Err(FetchError::Filesystem(e)),
            }
        }
        Err(FetchError::NotFound(pdb_id.to_ascii_uppercase()))
    }

    fn describe(&self) -> String {
        format!("fixtures at {}", self.dir.display())
    }
}

/// Live download over HTTP, `{ID}` in the template is replaced by the id.
#[derive(Debug, Clone)]
pub struct RcsbStructures {
    url_template: String,
    client: reqwest::blocking::Client,
}

impl RcsbStructures {
    pub fn new() -> Result<Self, FetchError> {
        Self::with_template(RCSB_URL_TEMPLATE)
    }

    pub fn with_template(url_template: impl Into<String>) -> Result<Self, FetchError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| FetchError::NetworkFailure(e.to_string()))?;
        Ok(Self {
            url_template: url_template.into(),
            client,
        })
    }
}

impl StructureSource for RcsbStructures {
    fn fetch(&self, pdb_id: &str) -> Result<String, FetchError> {
        let url = self
            .url_template
            .replace("{ID}", &pdb_id.to_ascii_uppercase());
        let resp = self
            .client
            .get(&url)
            .send()
            .map_err(|e| FetchError::NetworkFailure(e.to_string()))?;
        match resp.status() {
            StatusCode::NOT_FOUND => Err(FetchError::NotFound(pdb_id.to_ascii_uppercase())),
            s if !s.is_success() => Err(FetchError::NetworkFailure(format!("HTTP {s} from {url}"))),
            _ => resp
                .text()
                .map_err(|e| FetchError::NetworkFailure(e.to_string())),
        }
    }

    fn describe(&self) -> String {
        self.url_template.clone()
    }
}

fn valid_id(id: &str) -> bool {
    let b = id.as_bytes();
    b.len() == 4 && b[0].is_ascii_digit() && b[1..].iter().all(u8::is_ascii_alphanumeric)
}

fn starts_with_record_tag(text: &str) -> bool {
    let Some(line) = text.lines().find(|l| !l.trim().is_empty()) else {
        return false;
    };
    let tag = line.get(..6.min(line.len())).unwrap_or(line).trim_end();
    RECORD_TAGS.contains(&tag)
}

/// Downloads `pdb_id` into `{dest_dir}/{ID}.pdb` and returns its absolute
/// path. The file is written under a temporary name and renamed into place.
pub fn fetch_structure(
    source: &dyn StructureSource,
    pdb_id: &str,
    dest_dir: &Path,
) -> Result<PathBuf, FetchError> {
    if !valid_id(pdb_id) {
        return Err(FetchError::InvalidId(pdb_id.to_string()));
    }
    let id = pdb_id.to_ascii_uppercase();
    let text = source.fetch(&id)?;
    if text.trim().is_empty() || !starts_with_record_tag(&text) {
        return Err(FetchError::NotPdb(id));
    }
    std::fs::create_dir_all(dest_dir)?;
    let dest_dir = std::fs::canonicalize(dest_dir)?;
    let token: u64 = rand::random();
    let tmp = dest_dir.join(format!(".{id}.{token:016x}.tmp"));
    let path = dest_dir.join(format!("{id}.pdb"));
    std::fs::write(&tmp, text)?;
    std::fs::rename(&tmp, &path)?;
    Ok(path)
}

pub fn fetch_structure_tool(source: Arc<dyn StructureSource>, dest_dir: PathBuf) -> ToolDef {
    let schema = ToolSchema::new(
        "fetch_structure",
        "Download a protein structure from the Protein Data Bank by its 4-character PDB ID. \
         Returns the absolute path of the downloaded PDB file.",
    )
    .param(
        "pdb_id",
        ParamType::String,
        "4-character PDB ID, e.g. 2KKJ",
        true,
    );
    ToolDef::new(schema, ExecutionClass::Inline, move |args, ctx| {
        let id = args["pdb_id"].as_str().unwrap_or_default();
        match fetch_structure(source.as_ref(), id, &dest_dir) {
            Ok(path) => ToolResult::ok(
                ctx,
                format!(
                    "Downloaded {} from {} to {}",
                    id.to_ascii_uppercase(),
                    source.describe(),
                    path.display()
                ),
                vec![path],
            ),
            Err(e) => ToolResult::error(&ctx.tool_call_id, e.to_string()),
        }
    })
}
