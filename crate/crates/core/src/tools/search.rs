//! Web search behind a backend trait: a keyword-overlap fixture corpus for
//! offline runs and an HTTP backend for a live search service.

use std::collections::BTreeSet;
use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ExecutionClass, ToolDef, ToolResult};
use crate::llm::{ParamType, ToolSchema};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("k must be at least 1")]
    InvalidK,
    #[error("search backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("bad corpus document {path}: {reason}")]
    Corpus { path: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchResult {
    pub title: String,
    pub snippet: String,
    pub url: String,
}

pub trait SearchBackend: Send + Sync + fmt::Debug {
    /// At most `k` results, most relevant first.
    fn search(&self, query: &str, k: usize) -> Result<Vec<SearchResult>, SearchError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchDocument {
    pub keywords: Vec<String>,
    pub title: String,
    pub snippet: String,
    pub url: String,
}

fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Documents scored by the number of distinct query tokens found among
/// their keywords and title words; ties go to the lexicographically
/// smaller title.
#[derive(Debug, Clone, Default)]
pub struct FixtureCorpus {
    docs: Vec<(SearchDocument, BTreeSet<String>)>,
}

impl FixtureCorpus {
    pub fn new(docs: Vec<SearchDocument>) -> Self {
        let docs = docs
            .into_iter()
            .map(|d| {
                let mut terms: BTreeSet<String> =
                    d.keywords.iter().flat_map(|k| tokens(k)).collect();
                terms.extend(tokens(&d.title));
                (d, terms)
            })
            .collect();
        Self { docs }
    }

    /// Reads every `*.json` file in `dir`, each holding one document.
    pub fn load(dir: &Path) -> Result<Self, SearchError> {
        let corpus_err = |path: &Path, reason: String| SearchError::Corpus {
            path: path.display().to_string(),
            reason,
        };
        let entries = std::fs::read_dir(dir).map_err(|e| corpus_err(dir, e.to_string()))?;
        let mut paths: Vec<_> = entries
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        let mut docs = Vec::with_capacity(paths.len());
        for path in paths {
            let text =
                std::fs::read_to_string(&path).map_err(|e| corpus_err(&path, e.to_string()))?;
            let doc: SearchDocument =
                serde_json::from_str(&text).map_err(|e| corpus_err(&path, e.to_string()))?;
            if doc.title.trim().is_empty() {
                return Err(corpus_err(&path, "empty title".into()));
            }
            docs.push(doc);
        }
        Ok(Self::new(docs))
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }
}

impl SearchBackend for FixtureCorpus {
    fn search(&self, query: &str, k: usize) -> Result<Vec<SearchResult>, SearchError> {
        if k == 0 {
            return Err(SearchError::InvalidK);
        }
        let query: BTreeSet<String> = tokens(query).collect();
        let mut scored: Vec<(usize, &SearchDocument)> = self
            .docs
            .iter()
            .map(|(doc, terms)| (query.intersection(terms).count(), doc))
            .filter(|(score, _)| *score > 0)
            .collect();
        scored.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.title.cmp(&b.1.title)));
        Ok(scored
            .into_iter()
            .take(k)
            .map(|(_, d)| SearchResult {
                title: d.title.clone(),
                snippet: d.snippet.clone(),
                url: d.url.clone(),
            })
            .collect())
    }
}

/// Client for a search service that accepts `{"query", "max_results"}` and
/// answers `{"results": [{"title", "content", "url"}]}`.
#[derive(Debug, Clone)]
pub struct HttpSearch {
    endpoint: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

#[derive(Serialize)]
struct HttpSearchRequest<'a> {
    query: &'a str,
    max_results: usize,
}

#[derive(Deserialize)]
struct HttpSearchResponse {
    results: Vec<HttpSearchHit>,
}

#[derive(Deserialize)]
struct HttpSearchHit {
    title: String,
    #[serde(default)]
    content: String,
    #[serde(default)]
    url: String,
}

impl HttpSearch {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>) -> Result<Self, SearchError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| SearchError::BackendUnavailable(e.to_string()))?;
        Ok(Self {
            endpoint: endpoint.into(),
            api_key,
            client,
        })
    }
}

impl SearchBackend for HttpSearch {
    fn search(&self, query: &str, k: usize) -> Result<Vec<SearchResult>, SearchError> {
        if k == 0 {
            return Err(SearchError::InvalidK);
        }
        let mut req = self.client.post(&self.endpoint).json(&HttpSearchRequest {
            query,
            max_results: k,
        });
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .map_err(|e| SearchError::BackendUnavailable(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(SearchError::BackendUnavailable(format!(
                "HTTP {}",
                resp.status()
            )));
        }
        let body: HttpSearchResponse = resp
            .json()
            .map_err(|e| SearchError::BackendUnavailable(e.to_string()))?;
        Ok(body
            .results
            .into_iter()
            .take(k)
            .map(|h| SearchResult {
                title: h.title,
                snippet: h.content,
                url: h.url,
            })
            .collect())
    }
}

fn format_results(query: &str, results: &[SearchResult]) -> String {
    let mut out = format!("{} results for {query:?}:\n", results.len());
    for (i, r) in results.iter().enumerate() {
        let _ = writeln!(
            out,
            "[{}] {}\n    {}\n    {}",
            i + 1,
            r.title,
            r.snippet,
            r.url
        );
    }
    out
}

/// The `search` tool, returning up to `k` results per query.
pub fn search_tool(backend: Arc<dyn SearchBackend>, k: usize) -> ToolDef {
    let schema = ToolSchema::new(
        "search",
        "Search the web for background information, e.g. which PDB entries describe a protein.",
    )
    .param("query", ParamType::String, "search query", true);
    ToolDef::new(schema, ExecutionClass::Inline, move |args, ctx| {
        let query = args["query"].as_str().unwrap_or_default();
        match backend.search(query, k) {
            Ok(results) => ToolResult::ok(ctx, format_results(query, &results), Vec::new()),
            Err(e) => ToolResult::error(&ctx.tool_call_id, e.to_string()),
        }
    })
}
