//! External word-predictor protocol and its local implementations.
//!
//! Request `{"context", "prefix", "n"}`, response
//! `{"suggestions": [{"word", "logprob"}]}`. Over HTTP the request is the
//! JSON body of `POST /complete`; a non-2xx status or a malformed body is a
//! protocol error.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::{normalize, text};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub context: String,
    pub prefix: String,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WordScore {
    pub word: String,
    pub logprob: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub suggestions: Vec<WordScore>,
}

/// A next-word service. Implementations must be stateless between calls.
pub trait WordPredictor: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse>;
}

/// Last complete word of a context string, uppercased; empty if none.
pub fn context_tail(context: &str) -> String {
    let norm = normalize(context);
    text::words(&norm).last().unwrap_or("").to_owned()
}

/// Client for a predictor served over HTTP.
pub struct HttpPredictor {
    agent: ureq::Agent,
    endpoint: String,
}

impl HttpPredictor {
    pub const DEFAULT_TIMEOUT: Duration = Duration::from_millis(200);

    pub fn new(base_url: &str, timeout: Duration) -> Self {
        HttpPredictor {
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
            endpoint: format!("{}/complete", base_url.trim_end_matches('/')),
        }
    }
}

impl WordPredictor for HttpPredictor {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse> {
        let response = self
            .agent
            .post(&self.endpoint)
            .send_json(request)
            .map_err(|e| match e {
                ureq::Error::Status(code, _) => {
                    Error::Predictor(format!("HTTP {code} from {}", self.endpoint))
                }
                ureq::Error::Transport(t) => Error::Predictor(t.to_string()),
            })?;
        let body: CompletionResponse = response
            .into_json()
            .map_err(|e| Error::Predictor(format!("malformed response: {e}")))?;
        if body.suggestions.iter().any(|s| !s.logprob.is_finite()) {
            return Err(Error::Predictor("non-finite logprob in response".into()));
        }
        Ok(body)
    }
}

#[derive(Serialize, Deserialize)]
struct TableLine {
    context: String,
    prefix: String,
    suggestions: Vec<WordScore>,
}

/// Deterministic predictor backed by a lookup table keyed by
/// (context tail, prefix). Unknown tails back off to the empty tail;
/// unknown prefixes get an empty answer.
#[derive(Clone, Debug, Default)]
pub struct MockPredictor {
    table: HashMap<(String, String), Vec<WordScore>>,
}

impl MockPredictor {
    pub fn new() -> Self {
        MockPredictor::default()
    }

    pub fn insert(&mut self, tail: &str, prefix: &str, suggestions: Vec<WordScore>) {
        self.table
            .insert((tail.to_owned(), prefix.to_owned()), suggestions);
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    /// Reads one JSON object per line: `{"context", "prefix", "suggestions"}`.
    pub fn load(path: &Path) -> Result<Self> {
        let reader = BufReader::new(fs::File::open(path)?);
        let mut mock = MockPredictor::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: TableLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
                path: path.display().to_string(),
                line: i + 1,
                msg: e.to_string(),
            })?;
            mock.insert(&entry.context, &entry.prefix, entry.suggestions);
        }
        Ok(mock)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut keys: Vec<_> = self.table.keys().collect();
        keys.sort();
        let mut out = BufWriter::new(fs::File::create(path)?);
        for key in keys {
            let line = TableLine {
                context: key.0.clone(),
                prefix: key.1.clone(),
                suggestions: self.table[key].clone(),
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    /// Records the answers another predictor gives to `requests`.
    pub fn record(source: &dyn WordPredictor, requests: &[CompletionRequest]) -> Result<Self> {
        let mut mock = MockPredictor::new();
        for req in requests {
            let resp = source.complete(req)?;
            mock.insert(&context_tail(&req.context), &req.prefix, resp.suggestions);
        }
        Ok(mock)
    }
}

impl WordPredictor for MockPredictor {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse> {
        let tail = context_tail(&request.context);
        let hit = self
            .table
            .get(&(tail, request.prefix.clone()))
            .or_else(|| self.table.get(&(String::new(), request.prefix.clone())));
        let suggestions = hit
            .map(|s| s.iter().take(request.n).cloned().collect())
            .unwrap_or_default();
        Ok(CompletionResponse { suggestions })
    }
}

/// Deterministic stand-in for a pretrained next-word model: word bigram
/// counts from a corpus, backing off to word unigram counts.
#[derive(Clone, Debug)]
pub struct CorpusPredictor {
    following: HashMap<String, Vec<(String, u32)>>,
    unigrams: Vec<(String, u32)>,
}

impl CorpusPredictor {
    pub fn from_text(corpus: &str) -> Result<Self> {
        let norm = normalize(corpus);
        let mut pairs: HashMap<String, HashMap<String, u32>> = HashMap::new();
        let mut single: HashMap<String, u32> = HashMap::new();
        let mut prev: Option<&str> = None;
        for w in text::words(&norm) {
            *single.entry(w.to_owned()).or_default() += 1;
            if let Some(p) = prev {
                *pairs
                    .entry(p.to_owned())
                    .or_default()
                    .entry(w.to_owned())
                    .or_default() += 1;
            }
            prev = Some(w);
        }
        if single.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let sorted = |m: HashMap<String, u32>| {
            let mut v: Vec<_> = m.into_iter().collect();
            v.sort();
            v
        };
        Ok(CorpusPredictor {
            following: pairs.into_iter().map(|(k, m)| (k, sorted(m))).collect(),
            unigrams: sorted(single),
        })
    }

    fn rank(entries: &[(String, u32)], prefix: &str, n: usize) -> Vec<WordScore> {
        let start = entries.partition_point(|(w, _)| w.as_str() < prefix);
        let mut hits: Vec<&(String, u32)> = entries[start..]
            .iter()
            .take_while(|(w, _)| w.starts_with(prefix))
            .filter(|(w, _)| w.len() > prefix.len())
            .collect();
        let total: u32 = hits.iter().map(|(_, c)| c).sum();
        hits.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        hits.into_iter()
            .take(n)
            .map(|(w, c)| WordScore {
                word: w.clone(),
                logprob: (f64::from(*c) / f64::from(total)).ln(),
            })
            .collect()
    }
}

impl WordPredictor for CorpusPredictor {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse> {
        let tail = context_tail(&request.context);
        let mut suggestions = self
            .following
            .get(&tail)
            .map(|e| Self::rank(e, &request.prefix, request.n))
            .unwrap_or_default();
        if suggestions.is_empty() {
            suggestions = Self::rank(&self.unigrams, &request.prefix, request.n);
        }
        Ok(CompletionResponse { suggestions })
    }
}
