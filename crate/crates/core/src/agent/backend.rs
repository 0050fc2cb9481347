use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::analysis::{ClusterStats, Difference, KScore};
use super::{ClusterKey, EpochKey};
use crate::ingest::TransactionRecord;

/// Version of the JSON envelope both backends receive.
pub const CONTEXT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterBrief {
    pub cluster: usize,
    pub stats: ClusterStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aspect {
    QnnCharacteristics,
    QfCharacteristics,
    Recommendation,
}

/// Structured input for one text-generation request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum TextContext {
    ClusterMeaning {
        key: ClusterKey,
        stats: ClusterStats,
        representatives: Vec<TransactionRecord>,
    },
    PairContrast {
        key: EpochKey,
        a: ClusterBrief,
        b: ClusterBrief,
    },
    PartitionRationale {
        key: EpochKey,
        clusters: Vec<ClusterBrief>,
        silhouette: f64,
        indistinct: bool,
    },
    InterStrategy {
        qnn: EpochKey,
        qf: EpochKey,
        qnn_singletons: usize,
        qf_singletons: usize,
        differences: Vec<Difference>,
    },
    StrategyAspect {
        aspect: Aspect,
        k: usize,
        qnn: KScore,
        qf: KScore,
        differences: usize,
    },
    GlobalSynthesis {
        recommended_k: usize,
        scores: Vec<KScore>,
    },
}

#[derive(Serialize)]
struct Envelope<'a> {
    version: u32,
    context: &'a TextContext,
}

impl TextContext {
    /// Versioned JSON rendering shared by every backend.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&Envelope {
            version: CONTEXT_VERSION,
            context: self,
        })
        .expect("context serializes")
    }

    fn instruction(&self) -> &'static str {
        match self {
            TextContext::ClusterMeaning { .. } => {
                "Summarize what the transactions in this cluster have in common in two sentences."
            }
            TextContext::PairContrast { .. } => "Contrast these two clusters of the same partition in one sentence.",
            TextContext::PartitionRationale { .. } => "Explain what drives this partition of the transactions.",
            TextContext::InterStrategy { .. } => {
                "Compare the trained and the random quantum-feature partitions at these coordinates."
            }
            TextContext::StrategyAspect { .. } => "Write the requested table cell for this cluster count.",
            TextContext::GlobalSynthesis { .. } => "State which cluster count to prefer and why.",
        }
    }
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("credential variable {0} is not set")]
    MissingCredential(String),
    #[error("request to {endpoint} failed after {attempts} attempt(s): {message}")]
    Transport {
        endpoint: String,
        attempts: u32,
        message: String,
    },
    #[error("{endpoint} answered {status}: {body}")]
    Status {
        endpoint: String,
        status: u16,
        body: String,
    },
    #[error("unreadable response from {endpoint}: {message}")]
    Decode { endpoint: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding a bearer token, if the endpoint needs one.
    pub credential_env: Option<String>,
    /// Extra attempts after the first failure.
    pub retries: u32,
    pub timeout_secs: u64,
    pub retry_delay_ms: u64,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: "default".into(),
            credential_env: None,
            retries: 2,
            timeout_secs: 60,
            retry_delay_ms: 500,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TextBackend {
    #[default]
    Mock,
    Remote(RemoteConfig),
}

#[derive(Serialize)]
struct RemoteRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    context: serde_json::Value,
}

#[derive(Deserialize)]
struct RemoteResponse {
    text: String,
}

impl TextBackend {
    pub fn generate_text(&self, context: &TextContext) -> Result<String, BackendError> {
        match self {
            TextBackend::Mock => Ok(mock_text(context)),
            TextBackend::Remote(cfg) => remote_text(cfg, context),
        }
    }
}

fn remote_text(cfg: &RemoteConfig, context: &TextContext) -> Result<String, BackendError> {
    let credential = match &cfg.credential_env {
        Some(var) => Some(std::env::var(var).map_err(|_| BackendError::MissingCredential(var.clone()))?),
        None => None,
    };
    let transport = |attempts, message: String| BackendError::Transport {
        endpoint: cfg.endpoint.clone(),
        attempts,
        message,
    };
    let client = reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(cfg.timeout_secs))
        .build()
        .map_err(|e| transport(0, e.to_string()))?;
    let body = RemoteRequest {
        model: &cfg.model,
        prompt: context.instruction(),
        context: serde_json::from_str(&context.to_json()).expect("context is valid JSON"),
    };
    let attempts = cfg.retries + 1;
    let mut last = String::new();
    for attempt in 1..=attempts {
        if attempt > 1 {
            std::thread::sleep(Duration::from_millis(cfg.retry_delay_ms));
        }
        let mut request = client.post(&cfg.endpoint).json(&body);
        if let Some(token) = &credential {
            request = request.bearer_auth(token);
        }
        match request.send() {
            Ok(resp) if resp.status().is_server_error() => {
                last = format!("status {}", resp.status());
            }
            Ok(resp) if !resp.status().is_success() => {
                return Err(BackendError::Status {
                    endpoint: cfg.endpoint.clone(),
                    status: resp.status().as_u16(),
                    body: resp.text().unwrap_or_default(),
                });
            }
            Ok(resp) => {
                return resp
                    .json::<RemoteResponse>()
                    .map(|r| r.text)
                    .map_err(|e| BackendError::Decode {
                        endpoint: cfg.endpoint.clone(),
                        message: e.to_string(),
                    });
            }
            Err(e) => last = e.to_string(),
        }
    }
    Err(transport(attempts, last))
}

fn fmt_value(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{v:.0}")
    } else {
        format!("{v:.4}")
    }
}

fn describe(b: &ClusterBrief) -> String {
    format!(
        "cluster {} ({} records, mostly {}, values {} to {})",
        b.cluster,
        b.stats.size,
        b.stats.dominant_token,
        fmt_value(b.stats.value_min),
        fmt_value(b.stats.value_max)
    )
}

/// Deterministic template fill keyed on the context variant.
fn mock_text(context: &TextContext) -> String {
    match context {
        TextContext::ClusterMeaning { key, stats, .. } if stats.singleton => format!(
            "Cluster {} is a singleton cluster: one {} transfer of {} that shares no pattern with the rest of the partition.",
            key.cluster,
            stats.dominant_token,
            fmt_value(stats.value_min)
        ),
        TextContext::ClusterMeaning { key, stats, .. } => {
            let sender = match &stats.dominant_sender {
                Some(s) => format!(" Sender {s} accounts for {:.0}% of them.", stats.dominant_sender_share * 100.0),
                None => " No single sender dominates.".into(),
            };
            format!(
                "Cluster {} groups {} transactions, {:.0}% of them in {}, with values from {} to {}.{}",
                key.cluster,
                stats.size,
                stats.dominant_token_share * 100.0,
                stats.dominant_token,
                fmt_value(stats.value_min),
                fmt_value(stats.value_max),
                sender
            )
        }
        TextContext::PairContrast { a, b, .. } => {
            let axis = if a.stats.dominant_token != b.stats.dominant_token {
                "token"
            } else if a.stats.value_max < b.stats.value_min || b.stats.value_max < a.stats.value_min {
                "value range"
            } else if a.stats.dominant_sender != b.stats.dominant_sender {
                "sender"
            } else {
                "size only"
            };
            format!("{} differs from {} by {axis}.", capitalize(&describe(a)), describe(b))
        }
        TextContext::PartitionRationale { clusters, indistinct: true, .. } => format!(
            "indistinct partition: all {} clusters share the same summary statistics.",
            clusters.len()
        ),
        TextContext::PartitionRationale { clusters, silhouette, .. } => {
            let singletons = clusters.iter().filter(|c| c.stats.singleton).count();
            let mut tokens: Vec<&str> = clusters.iter().map(|c| c.stats.dominant_token.as_str()).collect();
            tokens.sort_unstable();
            tokens.dedup();
            let driver = if tokens.len() > 1 { "token type" } else { "transfer value" };
            format!(
                "The partition into {} clusters follows {driver}; silhouette {:.4}, {singletons} singleton cluster(s).",
                clusters.len(),
                silhouette
            )
        }
        TextContext::InterStrategy {
            qnn,
            qnn_singletons,
            qf_singletons,
            differences,
            ..
        } => format!(
            "At k={} and depth {}, the QNN partition has {} singleton cluster(s) against {} for the QF partition, with {} structural difference(s).",
            qnn.k,
            qnn.depth,
            qnn_singletons,
            qf_singletons,
            differences.len()
        ),
        TextContext::StrategyAspect { aspect, k, qnn, qf, .. } => match aspect {
            Aspect::QnnCharacteristics => characteristics(*k, qnn),
            Aspect::QfCharacteristics => characteristics(*k, qf),
            Aspect::Recommendation if (qnn.mean_silhouette - qf.mean_silhouette).abs() < 5e-5 => format!(
                "At k={k} both feature sets give mean silhouette {:.4}; either will do.",
                qnn.mean_silhouette
            ),
            Aspect::Recommendation => {
                let (winner, other) = if qnn.mean_silhouette >= qf.mean_silhouette {
                    ("trained", "random")
                } else {
                    ("random", "trained")
                };
                format!(
                    "At k={k} prefer the {winner} features: mean silhouette {:.4} against {:.4} for the {other} ones.",
                    qnn.mean_silhouette.max(qf.mean_silhouette),
                    qnn.mean_silhouette.min(qf.mean_silhouette)
                )
            }
        },
        TextContext::GlobalSynthesis { recommended_k, scores } => {
            let chosen = scores.iter().find(|s| s.k == *recommended_k);
            match chosen {
                Some(s) => format!(
                    "k={recommended_k} balances clarity and complexity: {} singleton cluster(s) and mean silhouette {:.4}.",
                    s.singletons, s.mean_silhouette
                ),
                None => format!("k={recommended_k} is recommended."),
            }
        }
    }
}

fn characteristics(k: usize, s: &KScore) -> String {
    let shape = if s.singletons == 0 {
        "compact clusters with no singletons".to_string()
    } else {
        format!("{} singleton cluster(s) isolating extreme transactions", s.singletons)
    };
    format!("k={k}: {shape}; mean silhouette {:.4} over {} partition(s).", s.mean_silhouette, s.partitions)
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}
