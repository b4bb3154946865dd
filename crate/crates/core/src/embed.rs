//! Text-embedding clients for iconic-action texts.
//!
//! Offline runs read precomputed files
//! `{"texts": [...], "backend": "clip", "embeddings": [[...], ...]}`;
//! online runs call `POST <endpoint>/v1/embed_text`.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbedError {
    #[error("no `{backend}` embedding for text {text:?}")]
    MissingText { backend: String, text: String },
    #[error("embedding file {path}: {reason}")]
    BadFile { path: String, reason: String },
    #[error("embedding service unavailable: {0}")]
    Unavailable(String),
    #[error("embedding service returned {got} rows for {expected} texts")]
    RowCount { expected: usize, got: usize },
}

pub trait EmbeddingClient: Send + Sync {
    /// One vector per input text, in input order.
    fn embed_texts(&self, backend: &str, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingFile {
    pub texts: Vec<String>,
    pub backend: String,
    pub embeddings: Vec<Vec<f32>>,
}

/// Lookup key: lowercased, whitespace-collapsed, terminal punctuation dropped.
pub fn text_key(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .trim_end_matches(['.', '!', '?', ',', ';'])
        .to_lowercase()
}

/// In-memory table of precomputed text embeddings.
#[derive(Debug, Clone, Default)]
pub struct FileEmbeddingClient {
    table: HashMap<(String, String), Vec<f32>>,
}

impl FileEmbeddingClient {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, backend: &str, text: &str, vector: Vec<f32>) {
        self.table
            .insert((backend.to_string(), text_key(text)), vector);
    }

    pub fn add_file(&mut self, file: EmbeddingFile) -> Result<(), EmbedError> {
        if file.texts.len() != file.embeddings.len() {
            return Err(EmbedError::RowCount {
                expected: file.texts.len(),
                got: file.embeddings.len(),
            });
        }
        for (text, v) in file.texts.iter().zip(file.embeddings) {
            self.insert(&file.backend, text, v);
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<EmbeddingFile, EmbedError> {
        let bad = |reason: String| EmbedError::BadFile {
            path: path.display().to_string(),
            reason,
        };
        let text = std::fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| bad(e.to_string()))
    }

    pub fn from_paths<P: AsRef<Path>>(paths: &[P]) -> Result<Self, EmbedError> {
        let mut client = Self::new();
        for p in paths {
            client.add_file(Self::load(p.as_ref())?)?;
        }
        Ok(client)
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl EmbeddingClient for FileEmbeddingClient {
    fn embed_texts(&self, backend: &str, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError> {
        texts
            .iter()
            .map(|t| {
                self.table
                    .get(&(backend.to_string(), text_key(t)))
                    .cloned()
                    .ok_or_else(|| EmbedError::MissingText {
                        backend: backend.to_string(),
                        text: t.clone(),
                    })
            })
            .collect()
    }
}

#[cfg(feature = "remote")]
pub use http::HttpEmbeddingClient;

#[cfg(feature = "remote")]
mod http {
    use std::time::Duration;

    use super::*;

    #[derive(Serialize)]
    struct Request<'a> {
        backend: &'a str,
        texts: &'a [String],
    }

    #[derive(Deserialize)]
    struct Response {
        embeddings: Vec<Vec<f32>>,
    }

    pub struct HttpEmbeddingClient {
        url: String,
        client: reqwest::blocking::Client,
        retries: usize,
    }

    impl HttpEmbeddingClient {
        pub fn new(endpoint: &str, timeout: Duration, retries: usize) -> Result<Self, EmbedError> {
            let client = reqwest::blocking::Client::builder()
                .timeout(timeout)
                .build()
                .map_err(|e| EmbedError::Unavailable(e.to_string()))?;
            Ok(Self {
                url: format!("{}/v1/embed_text", endpoint.trim_end_matches('/')),
                client,
                retries,
            })
        }
    }

    impl EmbeddingClient for HttpEmbeddingClient {
        fn embed_texts(&self, backend: &str, texts: &[String]) -> Result<Vec<Vec<f32>>, EmbedError> {
            let mut last = String::new();
            for _ in 0..=self.retries {
                let sent = self
                    .client
                    .post(&self.url)
                    .json(&Request { backend, texts })
                    .send()
                    .and_then(|r| r.error_for_status())
                    .and_then(|r| r.json::<Response>());
                match sent {
                    Ok(resp) if resp.embeddings.len() == texts.len() => return Ok(resp.embeddings),
                    Ok(resp) => {
                        return Err(EmbedError::RowCount {
                            expected: texts.len(),
                            got: resp.embeddings.len(),
                        })
                    }
                    Err(e) => last = e.to_string(),
                }
            }
            Err(EmbedError::Unavailable(last))
        }
    }
}
