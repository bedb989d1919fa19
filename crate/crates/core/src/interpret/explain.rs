use super::payload::{render_prompt, CategoryInsight, ExplanationPayload};
use serde_json::json;
use std::fmt::Write as _;
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("environment variable {0} is not set")]
    MissingEnv(&'static str),
    /// The request never produced a usable HTTP response. The payload is kept for a retry.
    #[error("transport error talking to {url}: {message}")]
    Transport {
        url: String,
        message: String,
        payload: Box<ExplanationPayload>,
    },
    #[error("unexpected response from {url}: {message}")]
    Response {
        url: String,
        message: String,
        payload: Box<ExplanationPayload>,
    },
}

impl ExplainError {
    pub fn payload(&self) -> Option<&ExplanationPayload> {
        match self {
            Self::Transport { payload, .. } | Self::Response { payload, .. } => Some(payload),
            Self::MissingEnv(_) => None,
        }
    }
}

pub trait PersonaClient {
    fn explain(&self, payload: &ExplanationPayload) -> Result<String, ExplainError>;
}

pub fn explain(payload: &ExplanationPayload, client: &dyn PersonaClient) -> Result<String, ExplainError> {
    client.explain(payload)
}

/// Slopes below this (per round) read as flat.
const TREND_EPS: f64 = 1e-4;
/// Weights below this magnitude are not worth a sentence.
const WEIGHT_EPS: f64 = 0.05;

/// Offline persona from a fixed rule table over weight signs, magnitude ranks and trends.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockClient {
    /// Rank cut-off for a feature to count as a main driver; 0 means 3.
    pub top_k: usize,
}

#[derive(Clone, Copy, PartialEq)]
enum Trend {
    Rising,
    Falling,
    Flat,
}

struct Reading {
    w: f64,
    rank: usize,
    trend: Trend,
}

impl MockClient {
    fn read(&self, c: &CategoryInsight, feature: &str) -> Reading {
        let s = c.slope(feature);
        Reading {
            w: c.weight(feature),
            rank: c.magnitude_rank(feature),
            trend: if s > TREND_EPS {
                Trend::Rising
            } else if s < -TREND_EPS {
                Trend::Falling
            } else {
                Trend::Flat
            },
        }
    }

    /// (adjectives for "a ... member", verb phrases following "who")
    fn traits(&self, c: &CategoryInsight) -> (Vec<&'static str>, Vec<String>) {
        let top = if self.top_k == 0 { 3 } else { self.top_k };
        let mut adjectives = Vec::new();
        let mut clauses = Vec::new();
        let strong = |r: &Reading| r.rank <= top && r.w.abs() >= WEIGHT_EPS;

        let bl = self.read(c, "brand_loyalty");
        if bl.w >= WEIGHT_EPS {
            adjectives.push(if strong(&bl) { "brand-loyal" } else { "mildly brand-aware" });
        } else if bl.w <= -WEIGHT_EPS {
            adjectives.push("brand-switching");
        }

        let se = self.read(c, "seasonality");
        if se.w < 0.0 {
            adjectives.push("non-seasonal");
        } else if strong(&se) {
            adjectives.push("seasonal");
        }

        let mpg = self.read(c, "mpg");
        if mpg.w >= WEIGHT_EPS && (strong(&mpg) || mpg.trend == Trend::Rising) {
            clauses.push(match mpg.trend {
                Trend::Rising => "is replenishment-driven and increasingly so".to_string(),
                _ => "is replenishment-driven".to_string(),
            });
        } else if mpg.w <= -WEIGHT_EPS && strong(&mpg) {
            clauses.push("clips soon after a purchase rather than when stock runs low".into());
        }

        let value = self.read(c, "value");
        if value.w >= WEIGHT_EPS && strong(&value) {
            clauses.push("responds strongly to discount depth".into());
        } else if value.w <= -WEIGHT_EPS && strong(&value) {
            clauses.push("is not swayed by bigger discounts".into());
        }

        let items = self.read(c, "num_items");
        if items.w >= WEIGHT_EPS && (strong(&items) || items.trend == Trend::Rising) {
            clauses.push(if items.trend == Trend::Rising {
                "is increasingly drawn to multi-item offers".into()
            } else {
                "favors multi-item offers".into()
            });
        }

        let rec = self.read(c, "recency");
        if strong(&rec) {
            clauses.push(if rec.w > 0.0 {
                "tends to act late in an offer's window".into()
            } else {
                "tends to act early on fresh offers".into()
            });
        }

        let dur = self.read(c, "duration");
        if dur.w >= WEIGHT_EPS && strong(&dur) {
            clauses.push("prefers long-running offers".into());
        }

        let mf = self.read(c, "mf_score");
        if mf.w >= WEIGHT_EPS && strong(&mf) {
            clauses.push("follows the tastes of similar shoppers".into());
        }

        for (feature, r) in [("brand loyalty", &bl), ("seasonality", &se)] {
            if r.trend != Trend::Flat && strong(r) {
                clauses.push(format!(
                    "pays {} attention to {feature} over time",
                    if r.trend == Trend::Rising { "more" } else { "less" }
                ));
            }
        }
        (adjectives, clauses)
    }
}

impl PersonaClient for MockClient {
    fn explain(&self, payload: &ExplanationPayload) -> Result<String, ExplainError> {
        let mut out = format!("Member {} as of round {}.\n", payload.member_id, payload.as_of);
        for c in &payload.categories {
            let (adjectives, clauses) = self.traits(c);
            let who = if adjectives.is_empty() {
                "a member without a dominant brand or seasonal pattern".to_string()
            } else {
                format!("a {} member", adjectives.join(", "))
            };
            let _ = write!(out, "In {}, this is {who}", c.category_id);
            if clauses.is_empty() {
                out.push('.');
            } else {
                let _ = write!(out, ", who {}.", join_clauses(&clauses));
            }
            if let Some(e) = c.change_events.last() {
                let _ = write!(
                    out,
                    " The {} weight shifted {} around round {}.",
                    e.feature,
                    match e.direction {
                        super::Direction::Up => "up",
                        super::Direction::Down => "down",
                    },
                    e.round
                );
            }
            out.push('\n');
        }
        Ok(out)
    }
}

fn join_clauses(clauses: &[String]) -> String {
    match clauses {
        [] => String::new(),
        [one] => one.clone(),
        [head @ .., last] => format!("{} and {}", head.join(", "), last),
    }
}

/// Chat-completion client: POSTs `{base}/chat/completions` with a bearer key.
#[derive(Debug, Clone)]
pub struct HttpClient {
    pub base_url: String,
    pub api_key: String,
    pub model: String,
    pub timeout: Duration,
}

impl HttpClient {
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            api_key: api_key.into(),
            model: model.into(),
            timeout: Duration::from_secs(30),
        }
    }

    /// Reads `LLM_API_BASE`, `LLM_API_KEY` and `LLM_MODEL`.
    pub fn from_env() -> Result<Self, ExplainError> {
        let var = |k: &'static str| std::env::var(k).map_err(|_| ExplainError::MissingEnv(k));
        Ok(Self::new(var("LLM_API_BASE")?, var("LLM_API_KEY")?, var("LLM_MODEL")?))
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }

    fn request_body(&self, payload: &ExplanationPayload) -> serde_json::Value {
        json!({
            "model": self.model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": "You write concise, factual customer behavior profiles."},
                {"role": "user", "content": render_prompt(payload)},
            ],
        })
    }

    fn attempt(&self, agent: &ureq::Agent, body: &serde_json::Value) -> Result<serde_json::Value, (bool, String)> {
        let resp = agent
            .post(&self.url())
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(body);
        match resp {
            Ok(mut r) => r.body_mut().read_json::<serde_json::Value>().map_err(|e| (false, e.to_string())),
            // Client errors other than rate limiting will not improve on retry.
            Err(ureq::Error::StatusCode(code)) => Err((code == 429 || code >= 500, format!("HTTP status {code}"))),
            Err(e) => Err((true, e.to_string())),
        }
    }
}

impl PersonaClient for HttpClient {
    fn explain(&self, payload: &ExplanationPayload) -> Result<String, ExplainError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .build()
            .into();
        let body = self.request_body(payload);
        let url = self.url();
        let first = self.attempt(&agent, &body);
        let value = match first {
            Err((true, _)) => self.attempt(&agent, &body),
            other => other,
        }
        .map_err(|(_, message)| ExplainError::Transport {
            url: url.clone(),
            message,
            payload: Box::new(payload.clone()),
        })?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_owned)
            .ok_or_else(|| ExplainError::Response {
                url,
                message: "missing choices[0].message.content".into(),
                payload: Box::new(payload.clone()),
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{idx, NUM_FEATURES};
    use crate::interpret::{build_payload, PayloadConfig, TrajectoryStore};
    use crate::learner::CategoryModel;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    fn payload_from(weights: &[[f64; NUM_FEATURES]]) -> ExplanationPayload {
        let mut s = TrajectoryStore::default();
        for (t, w) in weights.iter().enumerate() {
            let m = CategoryModel { weights: *w, update_count: t as u64 + 1 };
            s.record_snapshot(&"m1".into(), &"dairy".into(), &m, t as u64 + 1).unwrap();
        }
        build_payload(&s, &"m1".into(), u64::MAX, &PayloadConfig::default()).unwrap()
    }

    fn weights(pairs: &[(usize, f64)]) -> [f64; NUM_FEATURES] {
        let mut w = [0.0; NUM_FEATURES];
        for (i, v) in pairs {
            w[*i] = *v;
        }
        w
    }

    #[test]
    fn loyal_non_seasonal_persona() {
        let p = payload_from(&[weights(&[(idx::BRAND_LOYALTY, 1.4), (idx::SEASONALITY, -0.3), (idx::MPG, 0.2)])]);
        let text = MockClient::default().explain(&p).unwrap();
        assert!(text.contains("brand-loyal"), "{text}");
        assert!(text.contains("non-seasonal"), "{text}");
        assert_eq!(text, MockClient::default().explain(&p).unwrap());
    }

    #[test]
    fn rising_mpg_is_replenishment_driven() {
        let traj: Vec<_> = (0..50).map(|t| weights(&[(idx::MPG, 0.5 + 0.02 * t as f64)])).collect();
        let text = MockClient::default().explain(&payload_from(&traj)).unwrap();
        assert!(text.contains("replenishment-driven and increasingly so"), "{text}");
    }

    #[test]
    fn flat_weights_still_render() {
        let text = MockClient::default().explain(&payload_from(&[[0.0; NUM_FEATURES]])).unwrap();
        assert!(text.contains("without a dominant"), "{text}");
    }

    fn serve_once(status: &str, body: &str) -> (String, std::thread::JoinHandle<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        let response = format!(
            "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
            body.len()
        );
        let handle = std::thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut head = String::new();
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                head.push_str(&line);
                if line == "\r\n" {
                    break;
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            stream.write_all(response.as_bytes()).unwrap();
            head + &String::from_utf8(buf).unwrap()
        });
        (base, handle)
    }

    #[test]
    fn live_client_posts_prompt_and_reads_reply() {
        let (base, server) = serve_once("200 OK", r#"{"choices":[{"message":{"role":"assistant","content":"A loyal shopper."}}]}"#);
        let client = HttpClient::new(base, "k123", "test-model");
        let p = payload_from(&[weights(&[(idx::BRAND_LOYALTY, 1.0)])]);
        assert_eq!(client.explain(&p).unwrap(), "A loyal shopper.");
        let request = server.join().unwrap();
        assert!(request.starts_with("POST /chat/completions"));
        assert!(request.contains("Bearer k123"));
        assert!(request.contains("test-model"));
        assert!(request.contains("Member: m1"));
    }

    #[test]
    fn unreachable_endpoint_keeps_payload() {
        let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let mut client = HttpClient::new(format!("http://127.0.0.1:{port}"), "k", "m");
        client.timeout = Duration::from_secs(2);
        let p = payload_from(&[weights(&[(idx::MPG, 1.0)])]);
        match client.explain(&p) {
            Err(e @ ExplainError::Transport { .. }) => assert_eq!(e.payload(), Some(&p)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_reply_is_a_response_error() {
        let (base, server) = serve_once("200 OK", r#"{"choices":[]}"#);
        let p = payload_from(&[weights(&[(idx::MPG, 1.0)])]);
        assert!(matches!(HttpClient::new(base, "k", "m").explain(&p), Err(ExplainError::Response { .. })));
        server.join().unwrap();
    }
}
