//! Description augmentation: prompt templates, category generalization,
//! and the replay cache that keeps tests offline.
//!
//! Rich descriptions come from an external language model. Every response
//! is stored in a JSON replay cache keyed by image id; normal operation
//! (and every test) reads the cache only. Live fetching requires an
//! explicit client and never happens implicitly.

use crate::domain::PromptSet;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Default template used to ask the description model about a category.
pub const DEFAULT_TEMPLATE: &str = "Describe the {category} in this image.";

/// One description to fetch: which image, which category, and how to ask.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DescriptionRequest {
    pub image_id: String,
    pub category: String,
    /// Prompt template; must contain the `{category}` placeholder.
    pub template: String,
}

impl DescriptionRequest {
    pub fn new(image_id: impl Into<String>, category: impl Into<String>) -> Self {
        DescriptionRequest {
            image_id: image_id.into(),
            category: category.into(),
            template: DEFAULT_TEMPLATE.to_string(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.template.contains("{category}") {
            return Err(Error::Config(format!(
                "template '{}' has no {{category}} placeholder",
                self.template
            )));
        }
        if self.category.trim().is_empty() {
            return Err(Error::Config("request category is empty".to_string()));
        }
        Ok(())
    }

    /// The prompt sent to the model, with the category substituted in.
    pub fn render(&self) -> String {
        self.template.replace("{category}", &self.category)
    }
}

/// Replaces every occurrence of `category` in `t_d` with "object",
/// preserving number: plural forms (naive +s / +es) become "objects".
///
/// Matching is case-insensitive and token-based, so "apple" hits "apples"
/// but not "applesauce". Multi-word categories match as a token window and
/// collapse to a single "object(s)". Returns the rewritten text and whether
/// anything was replaced; an absent category leaves the text unchanged with
/// the flag false so callers can audit the miss.
pub fn generalize_description(t_d: &str, category: &str) -> (String, bool) {
    let cat_tokens: Vec<String> = category
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect();
    if cat_tokens.is_empty() || t_d.is_empty() {
        return (t_d.to_string(), false);
    }

    // byte spans of alphanumeric runs in the original text
    let mut words: Vec<(usize, usize)> = Vec::new();
    let mut start = None;
    for (i, c) in t_d.char_indices() {
        if c.is_alphanumeric() {
            if start.is_none() {
                start = Some(i);
            }
        } else if let Some(s) = start.take() {
            words.push((s, i));
        }
    }
    if let Some(s) = start {
        words.push((s, t_d.len()));
    }

    let k = cat_tokens.len();
    let cat_last = &cat_tokens[k - 1];
    // a window matches when all leading tokens agree and the final token is
    // the category's final token or one of its naive plurals
    let match_at = |i: usize| -> Option<bool> {
        for j in 0..k - 1 {
            let (s, e) = words[i + j];
            if t_d[s..e].to_lowercase() != cat_tokens[j] {
                return None;
            }
        }
        let (s, e) = words[i + k - 1];
        let w = t_d[s..e].to_lowercase();
        if w == *cat_last {
            // a category already given in the plural ("sea shells") should
            // generalize to a plural too; bare heuristic: trailing 's'
            Some(cat_last.ends_with('s'))
        } else if w == format!("{cat_last}s") || w == format!("{cat_last}es") {
            Some(true)
        } else {
            None
        }
    };

    let mut out = String::new();
    let mut copied = 0usize;
    let mut replaced = false;
    let mut i = 0;
    while i + k <= words.len() {
        if let Some(plural) = match_at(i) {
            let (span_start, _) = words[i];
            let (_, span_end) = words[i + k - 1];
            out.push_str(&t_d[copied..span_start]);
            let capitalized = t_d[span_start..]
                .chars()
                .next()
                .is_some_and(char::is_uppercase);
            out.push_str(match (capitalized, plural) {
                (true, true) => "Objects",
                (true, false) => "Object",
                (false, true) => "objects",
                (false, false) => "object",
            });
            copied = span_end;
            replaced = true;
            i += k;
        } else {
            i += 1;
        }
    }
    out.push_str(&t_d[copied..]);
    (out, replaced)
}

/// One cached model response, as stored in `descriptions.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DescriptionRecord {
    pub t_p: String,
    pub t_d: String,
    pub t_d_prime: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_name: Option<String>,
}

impl DescriptionRecord {
    /// Builds the prompt set this record describes. A missing generalized
    /// form is derived on the spot so the set is always internally
    /// consistent.
    pub fn to_prompt_set(&self, category: &str) -> PromptSet {
        let t_p = if self.t_p.is_empty() { category } else { &self.t_p };
        let t_d_prime = if self.t_d_prime.is_empty() && !self.t_d.is_empty() {
            generalize_description(&self.t_d, t_p).0
        } else {
            self.t_d_prime.clone()
        };
        PromptSet::new(t_p, self.t_d.clone(), t_d_prime)
    }
}

/// JSON-backed store of prior description-model outputs.
///
/// Reads are lock-free; the single writer rewrites the whole file on each
/// insert (datasets are small enough that this stays simple and atomic via
/// a rename).
#[derive(Debug)]
pub struct ReplayCache {
    path: Option<PathBuf>,
    entries: BTreeMap<String, DescriptionRecord>,
}

impl ReplayCache {
    /// Cache that never touches disk; useful for tests and dry runs.
    pub fn in_memory() -> Self {
        ReplayCache {
            path: None,
            entries: BTreeMap::new(),
        }
    }

    /// Opens a cache file, or starts empty when the file does not exist yet.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let entries = if path.exists() {
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?
        } else {
            BTreeMap::new()
        };
        Ok(ReplayCache {
            path: Some(path),
            entries,
        })
    }

    pub fn get(&self, image_id: &str) -> Option<&DescriptionRecord> {
        self.entries.get(image_id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Inserts a record and persists the cache if it is file-backed.
    pub fn insert(&mut self, image_id: impl Into<String>, record: DescriptionRecord) -> Result<()> {
        self.entries.insert(image_id.into(), record);
        if let Some(path) = self.path.clone() {
            self.save_to(&path)?;
        }
        Ok(())
    }

    /// Writes the cache as pretty JSON, via a temp file + rename so a crash
    /// never leaves a half-written cache.
    pub fn save_to(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.entries)
            .map_err(|e| Error::json(path, e))?;
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, text + "\n").map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn entries(&self) -> &BTreeMap<String, DescriptionRecord> {
        &self.entries
    }
}

/// A live description model. Implementations are only reached when the
/// caller explicitly opts in; the default path is cache-only.
pub trait DescriptionClient {
    fn model_name(&self) -> &str;
    /// Returns the raw description text for one request.
    fn describe(&self, request: &DescriptionRequest) -> Result<String>;
}

/// Resolves requests cache-first; uncached ids go to `live` when given,
/// otherwise they are collected into one "no cached description" error.
///
/// Live responses are written back to the cache before returning, so a
/// fetch is repeatable offline afterwards.
pub fn fetch_descriptions(
    requests: &[DescriptionRequest],
    cache: &mut ReplayCache,
    live: Option<&dyn DescriptionClient>,
) -> Result<BTreeMap<String, PromptSet>> {
    let mut out = BTreeMap::new();
    let mut misses = Vec::new();
    for request in requests {
        request.validate()?;
        if let Some(record) = cache.get(&request.image_id) {
            out.insert(request.image_id.clone(), record.to_prompt_set(&request.category));
            continue;
        }
        let Some(client) = live else {
            misses.push(request.image_id.clone());
            continue;
        };
        let t_d = client.describe(request)?;
        if t_d.trim().is_empty() {
            return Err(Error::Description(format!(
                "model returned an empty description for '{}'",
                request.image_id
            )));
        }
        let (t_d_prime, _) = generalize_description(&t_d, &request.category);
        let record = DescriptionRecord {
            t_p: request.category.clone(),
            t_d,
            t_d_prime,
            model_name: Some(client.model_name().to_string()),
        };
        out.insert(request.image_id.clone(), record.to_prompt_set(&request.category));
        cache.insert(request.image_id.clone(), record)?;
    }
    if !misses.is_empty() {
        return Err(Error::Description(format!(
            "no cached description for {} image(s): {}",
            misses.len(),
            misses.join(", ")
        )));
    }
    Ok(out)
}

/// Environment variables configuring the optional live HTTP client.
pub const ENDPOINT_ENV: &str = "PROMPTCOUNT_MLLM_ENDPOINT";
pub const API_KEY_ENV: &str = "PROMPTCOUNT_MLLM_API_KEY";
pub const MODEL_ENV: &str = "PROMPTCOUNT_MLLM_MODEL";

/// Plain-HTTP description client: one JSON POST per request.
///
/// Contract: POST `{"image_id", "category", "prompt"}` to the endpoint;
/// the response body is JSON with a `"description"` string field. The
/// endpoint and credentials come from environment variables; nothing in
/// the test suite constructs this client.
pub struct HttpDescriptionClient {
    pub endpoint: String,
    pub api_key: Option<String>,
    pub model: String,
}

impl HttpDescriptionClient {
    /// Builds a client from the environment, or explains what is missing.
    pub fn from_env() -> Result<Self> {
        let endpoint = std::env::var(ENDPOINT_ENV).map_err(|_| {
            Error::Config(format!(
                "live description fetching needs {ENDPOINT_ENV} to be set"
            ))
        })?;
        Ok(HttpDescriptionClient {
            endpoint,
            api_key: std::env::var(API_KEY_ENV).ok(),
            model: std::env::var(MODEL_ENV).unwrap_or_else(|_| "unknown".to_string()),
        })
    }
}

impl DescriptionClient for HttpDescriptionClient {
    fn model_name(&self) -> &str {
        &self.model
    }

    fn describe(&self, request: &DescriptionRequest) -> Result<String> {
        let body = serde_json::json!({
            "image_id": request.image_id,
            "category": request.category,
            "prompt": request.render(),
        });
        let mut call = ureq::post(&self.endpoint).set("content-type", "application/json");
        if let Some(key) = &self.api_key {
            call = call.set("authorization", &format!("Bearer {key}"));
        }
        let response = call
            .send_string(&body.to_string())
            .map_err(|e| Error::Description(format!("description endpoint failed: {e}")))?;
        let text = response
            .into_string()
            .map_err(|e| Error::Description(format!("description response unreadable: {e}")))?;
        let parsed: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| Error::Description(format!("description response not JSON: {e}")))?;
        match parsed.get("description").and_then(|v| v.as_str()) {
            Some(d) => Ok(d.to_string()),
            None => Err(Error::Description(
                "description response missing 'description' field".to_string(),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generalize_replaces_plural_category() {
        let (out, hit) = generalize_description("a pile of red apples on a table", "apple");
        assert_eq!(out, "a pile of red objects on a table");
        assert!(hit);
    }

    #[test]
    fn generalize_handles_es_plural() {
        let (out, hit) = generalize_description("tomatoes on the vine", "tomato");
        assert_eq!(out, "objects on the vine");
        assert!(hit);
    }

    #[test]
    fn generalize_flags_absent_category() {
        let (out, hit) = generalize_description("colorful balls", "kite");
        assert_eq!(out, "colorful balls");
        assert!(!hit);
    }

    #[test]
    fn generalize_matches_multiword_and_case() {
        let (out, hit) = generalize_description(
            "Sea shells scattered across wet sand, with one sea shell half buried",
            "sea shell",
        );
        assert!(hit);
        assert_eq!(
            out,
            "Objects scattered across wet sand, with one object half buried"
        );
        // the invariant the prompt-set validator enforces downstream
        assert!(!out.to_lowercase().contains("sea shell"));
    }

    #[test]
    fn generalize_does_not_touch_substrings() {
        let (out, hit) = generalize_description("applesauce beside an apple", "apple");
        assert_eq!(out, "applesauce beside an object");
        assert!(hit);
    }

    #[test]
    fn template_renders_category() {
        let req = DescriptionRequest::new("6.jpg", "sea shells");
        assert!(req.render().contains("sea shells"));
        let bad = DescriptionRequest {
            template: "Describe this image.".to_string(),
            ..req
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn fetch_replays_cached_fixture_verbatim() {
        let mut cache = ReplayCache::in_memory();
        cache
            .insert(
                "6.jpg",
                DescriptionRecord {
                    t_p: "sea shells".to_string(),
                    t_d: "many sea shells of different sizes on sand".to_string(),
                    t_d_prime: "many objects of different sizes on sand".to_string(),
                    model_name: Some("fixture".to_string()),
                },
            )
            .unwrap();
        let requests = vec![DescriptionRequest::new("6.jpg", "sea shells")];
        let sets = fetch_descriptions(&requests, &mut cache, None).unwrap();
        assert_eq!(sets["6.jpg"].t_d, "many sea shells of different sizes on sand");
        assert_eq!(sets["6.jpg"].t_d_prime, "many objects of different sizes on sand");
    }

    #[test]
    fn fetch_offline_miss_lists_ids() {
        let mut cache = ReplayCache::in_memory();
        let requests = vec![
            DescriptionRequest::new("a.png", "ants"),
            DescriptionRequest::new("b.png", "bees"),
        ];
        let err = fetch_descriptions(&requests, &mut cache, None).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("no cached description"), "{msg}");
        assert!(msg.contains("a.png") && msg.contains("b.png"), "{msg}");
    }

    #[test]
    fn live_client_fills_and_persists_cache() {
        struct Scripted;
        impl DescriptionClient for Scripted {
            fn model_name(&self) -> &str {
                "scripted"
            }
            fn describe(&self, request: &DescriptionRequest) -> Result<String> {
                Ok(format!("several {} in a row", request.category))
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("descriptions.json");
        let mut cache = ReplayCache::open(&path).unwrap();
        let requests = vec![DescriptionRequest::new("x.png", "red disc")];
        let sets = fetch_descriptions(&requests, &mut cache, Some(&Scripted)).unwrap();
        assert_eq!(sets["x.png"].t_d, "several red disc in a row");

        // a reopened cache now satisfies the same request offline
        let mut reopened = ReplayCache::open(&path).unwrap();
        let sets = fetch_descriptions(&requests, &mut reopened, None).unwrap();
        assert_eq!(sets["x.png"].t_d, "several red disc in a row");
        assert_eq!(
            reopened.get("x.png").unwrap().model_name.as_deref(),
            Some("scripted")
        );
    }

    #[test]
    fn cache_round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.json");
        let mut cache = ReplayCache::open(&path).unwrap();
        assert!(cache.is_empty());
        cache
            .insert(
                "img1",
                DescriptionRecord {
                    t_p: "apple".to_string(),
                    t_d: "apples in a basket".to_string(),
                    t_d_prime: "objects in a basket".to_string(),
                    model_name: None,
                },
            )
            .unwrap();
        let reopened = ReplayCache::open(&path).unwrap();
        assert_eq!(reopened.len(), 1);
        assert_eq!(reopened.get("img1"), cache.get("img1"));
    }
}
