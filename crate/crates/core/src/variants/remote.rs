//! Blocking chat-completion client for variant generation.

use std::path::PathBuf;
use std::sync::LazyLock;
use std::thread;
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{validate_variant, PromptSpec, Shortfall, Variant, VariantError, VariantSet};
use crate::corpus::VariationType;
use crate::quantity::TaggedProblem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteConfig {
    /// Base URL; `/chat/completions` is appended.
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub temperature: f64,
    pub timeout_secs: u64,
    /// Retries after the first attempt.
    pub max_retries: u32,
    /// Delay before the first retry, doubled on each further one.
    pub backoff_ms: u64,
    /// Prompt families requested at the same time.
    pub parallelism: usize,
    /// Raw responses are written here when set.
    pub archive_dir: Option<PathBuf>,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-3.5-turbo".into(),
            api_key_env: "MWP_API_KEY".into(),
            temperature: 0.7,
            timeout_secs: 60,
            max_retries: 3,
            backoff_ms: 500,
            parallelism: 3,
            archive_dir: None,
        }
    }
}

static NUMBERING_RE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^\s*(?:(?i:variation|variant|problem|version)\s*\d+\s*[:.)-]\s*|\d+[.):]\s+|[-*•]\s+)").unwrap()
});

/// Splits a response into variant texts: blank-line separated blocks, or
/// one per line when the reply is a single numbered list. Numbering and
/// bullet markers are stripped; preamble lines ending in `:` are dropped.
pub fn split_response(content: &str) -> Vec<String> {
    let mut blocks: Vec<Vec<&str>> = vec![Vec::new()];
    for line in content.lines() {
        if line.trim().is_empty() {
            if !blocks.last().expect("non-empty").is_empty() {
                blocks.push(Vec::new());
            }
        } else {
            blocks.last_mut().expect("non-empty").push(line.trim());
        }
    }
    blocks.retain(|b| !b.is_empty());
    let mut items: Vec<String> = Vec::new();
    for b in blocks {
        let numbered = b.iter().filter(|l| NUMBERING_RE.is_match(l)).count();
        if b.len() > 1 && numbered == b.len() {
            items.extend(b.iter().map(|l| l.to_string()));
        } else {
            items.push(b.join(" "));
        }
    }
    items
        .into_iter()
        .map(|s| NUMBERING_RE.replace(&s, "").trim().trim_matches('"').trim().to_string())
        .filter(|s| !s.is_empty() && !s.ends_with(':'))
        .collect()
}

fn request(
    agent: &ureq::Agent,
    cfg: &RemoteConfig,
    key: &str,
    system: &str,
    user: &str,
) -> Result<String, VariantError> {
    let url = format!("{}/chat/completions", cfg.base_url.trim_end_matches('/'));
    let body = json!({
        "model": cfg.model,
        "temperature": cfg.temperature,
        "messages": [
            {"role": "system", "content": system},
            {"role": "user", "content": user},
        ],
    })
    .to_string();
    let mut last = String::new();
    for attempt in 0..=cfg.max_retries {
        if attempt > 0 {
            thread::sleep(Duration::from_millis(cfg.backoff_ms << (attempt - 1).min(16)));
        }
        let sent = agent
            .post(&url)
            .header("Authorization", &format!("Bearer {key}"))
            .header("Content-Type", "application/json")
            .send(&body);
        match sent {
            Ok(mut resp) => {
                let status = resp.status().as_u16();
                let text = resp.body_mut().read_to_string().unwrap_or_default();
                if (200..300).contains(&status) {
                    return Ok(text);
                }
                if status != 429 && status < 500 {
                    return Err(VariantError::Http { status, body: text });
                }
                last = format!("HTTP {status}");
            }
            Err(e) => last = e.to_string(),
        }
    }
    Err(VariantError::Network {
        attempts: cfg.max_retries + 1,
        message: last,
    })
}

fn response_text(raw: &str) -> Result<String, VariantError> {
    let v: Value = serde_json::from_str(raw).map_err(|e| VariantError::MalformedResponse(e.to_string()))?;
    let choices = v["choices"]
        .as_array()
        .filter(|c| !c.is_empty())
        .ok_or_else(|| VariantError::MalformedResponse("no choices".into()))?;
    let texts: Vec<&str> = choices
        .iter()
        .filter_map(|c| c["message"]["content"].as_str().or_else(|| c["text"].as_str()))
        .collect();
    if texts.is_empty() {
        return Err(VariantError::MalformedResponse("choices carry no text".into()));
    }
    Ok(texts.join("\n\n"))
}

/// Sends the three prompt families and validates what comes back.
///
/// The API key is read from the environment before anything is sent.
/// Families with a zero count are skipped.
pub fn generate_remote(spec: &PromptSpec, cfg: &RemoteConfig) -> Result<VariantSet, VariantError> {
    let key = std::env::var(&cfg.api_key_env).map_err(|_| VariantError::MissingCredentials(cfg.api_key_env.clone()))?;
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(cfg.timeout_secs)))
        .http_status_as_error(false)
        .build()
        .into();
    let seed = TaggedProblem::new(&spec.seed_text, None).expect("no equation to parse");
    let types = PromptSpec::family_types();
    let jobs: Vec<usize> = (0..3).filter(|&i| spec.counts.per_family()[i] > 0).collect();

    let mut raw: Vec<(usize, Result<String, VariantError>)> = Vec::new();
    for chunk in jobs.chunks(cfg.parallelism.max(1)) {
        thread::scope(|s| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|&i| {
                    let (agent, key) = (&agent, &key);
                    s.spawn(move || (i, request(agent, cfg, key, &spec.system_text, &spec.user_texts[i])))
                })
                .collect();
            for h in handles {
                raw.push(h.join().expect("request thread panicked"));
            }
        });
    }

    let mut set = VariantSet {
        seed_id: spec.seed_id.clone(),
        variants: Vec::new(),
        shortfalls: Vec::new(),
    };
    for (i, body) in raw {
        let body = body?;
        let ty: VariationType = types[i];
        if let Some(dir) = &cfg.archive_dir {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join(format!("{}.{}.{}.json", spec.seed_id, i + 1, ty)), &body)?;
        }
        let want = spec.counts.per_family()[i];
        let items = split_response(&response_text(&body)?);
        for text in items.iter().take(want) {
            let (valid, rejection_reason) = validate_variant(&seed, text, ty);
            set.variants.push(Variant {
                text: text.clone(),
                variation_type: ty,
                valid,
                rejection_reason,
            });
        }
        for _ in items.len().min(want)..want {
            set.shortfalls.push(Shortfall {
                variation_type: ty,
                reason: "response had fewer variants than requested".into(),
            });
        }
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ProblemRecord;
    use crate::variants::{build_prompts, VariantCounts, VariantRequest};
    use num_rational::BigRational;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    const TABLE_ONE: &str = "A shop sold 69 tickets on the first day for 13 dollars each. In total 420 tickets were sold, and the remaining tickets were sold for 7 dollars each. How much money did the shop collect?";

    /// Serves `n` requests; `reply` maps the request body to (status, body).
    fn mock(n: usize, reply: impl Fn(&str) -> (u16, String) + Send + 'static) -> (String, thread::JoinHandle<()>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let h = thread::spawn(move || {
            for stream in listener.incoming().take(n) {
                let mut stream = stream.unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut body = vec![0; len];
                reader.read_exact(&mut body).unwrap();
                let (status, out) = reply(&String::from_utf8(body).unwrap());
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{out}",
                    out.len()
                )
                .unwrap();
            }
        });
        (url, h)
    }

    fn completion(text: &str) -> String {
        json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string()
    }

    fn cfg(url: &str, env: &str) -> RemoteConfig {
        RemoteConfig {
            base_url: url.into(),
            api_key_env: env.into(),
            timeout_secs: 5,
            max_retries: 2,
            backoff_ms: 1,
            ..RemoteConfig::default()
        }
    }

    fn spec(counts: VariantCounts) -> PromptSpec {
        let seed = ProblemRecord::original(
            "t1",
            TABLE_ONE,
            "x=69*13+(420-69)*7",
            BigRational::from_integer(3354.into()),
        );
        build_prompts(&VariantRequest { seed, counts }).unwrap()
    }

    #[test]
    fn splitting() {
        assert_eq!(split_response("1. A 3 b.\n2. C 4 d."), vec!["A 3 b.", "C 4 d."]);
        assert_eq!(
            split_response("Here are two:\n\nFirst one.\n\nSecond\none."),
            vec!["First one.", "Second one."]
        );
        assert_eq!(split_response("Variation 1: 3.5 kg of rice."), vec!["3.5 kg of rice."]);
    }

    #[test]
    fn mock_round_trip() {
        std::env::set_var("MWP_TEST_KEY_OK", "secret");
        let (url, h) = mock(3, |body| {
            assert!(body.contains("rephraser"));
            let v: Value = serde_json::from_str(body).unwrap();
            let user = v["messages"][1]["content"].as_str().unwrap();
            let seed = user.split("\n\n").nth(1).unwrap();
            let n: usize = user.split(' ').nth(1).unwrap().parse().unwrap();
            let text = (1..=n)
                .map(|i| {
                    if user.contains("irrelevant") {
                        format!("{i}. {seed} The shop also had {} staff.", 40 + i)
                    } else {
                        format!("{i}. Rephrased: {seed}")
                    }
                })
                .collect::<Vec<_>>()
                .join("\n");
            (200, completion(&text))
        });
        let dir = tempfile::tempdir().unwrap();
        let mut c = cfg(&url, "MWP_TEST_KEY_OK");
        c.archive_dir = Some(dir.path().to_path_buf());
        let set = generate_remote(&spec(VariantCounts::new(2, 2, 1)), &c).unwrap();
        h.join().unwrap();
        assert_eq!(set.variants.len(), 5);
        assert!(set.variants.iter().all(|v| v.valid), "{set:?}");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 3);
    }

    #[test]
    fn dropped_quantity_and_short_reply() {
        std::env::set_var("MWP_TEST_KEY_LOST", "secret");
        let lost = TABLE_ONE.replace("In total 420 tickets were sold, and the", "The");
        let (url, h) = mock(3, move |_| (200, completion(&format!("1. {lost}"))));
        let set = generate_remote(&spec(VariantCounts::new(2, 2, 1)), &cfg(&url, "MWP_TEST_KEY_LOST")).unwrap();
        h.join().unwrap();
        assert_eq!(set.variants.len(), 3);
        assert!(set
            .variants
            .iter()
            .all(|v| !v.valid && v.rejection_reason.as_deref() == Some("quantity lost")));
        assert_eq!(set.variants.len() + set.shortfalls.len(), 5);
    }

    #[test]
    fn retries_then_gives_up() {
        std::env::set_var("MWP_TEST_KEY_DOWN", "secret");
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        drop(listener);
        match generate_remote(&spec(VariantCounts::new(5, 0, 0)), &cfg(&url, "MWP_TEST_KEY_DOWN")) {
            Err(VariantError::Network { attempts, .. }) => assert_eq!(attempts, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn server_errors_are_retried() {
        std::env::set_var("MWP_TEST_KEY_FLAKY", "secret");
        let calls = Arc::new(AtomicUsize::new(0));
        let seen = calls.clone();
        let (url, h) = mock(2, move |_| {
            if seen.fetch_add(1, Ordering::SeqCst) == 0 {
                (503, "{}".into())
            } else {
                (200, completion(&format!("1. Echo: {TABLE_ONE}")))
            }
        });
        let set = generate_remote(&spec(VariantCounts::new(5, 0, 0)), &cfg(&url, "MWP_TEST_KEY_FLAKY")).unwrap();
        h.join().unwrap();
        assert_eq!(calls.load(Ordering::SeqCst), 2);
        assert_eq!(set.variants.len(), 1);
        assert_eq!(set.shortfalls.len(), 4);
    }

    #[test]
    fn missing_key_fails_before_any_request() {
        let c = cfg("http://127.0.0.1:9", "MWP_TEST_KEY_NEVER_SET");
        assert!(matches!(
            generate_remote(&spec(VariantCounts::new(2, 2, 1)), &c),
            Err(VariantError::MissingCredentials(v)) if v == "MWP_TEST_KEY_NEVER_SET"
        ));
    }
}
