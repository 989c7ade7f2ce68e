//! Blocking client for the public `states/all` REST endpoint.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{parse_states_response, BoundingBox, ExtractResult, ExtractSource, FailureReason};
use crate::EpochSeconds;

/// Environment variable holding an optional bearer token.
pub const TOKEN_ENV: &str = "SKYTWIN_OPENSKY_TOKEN";

pub const DEFAULT_BASE_URL: &str = "https://opensky-network.org/api";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LiveConfig {
    pub base_url: String,
    pub timeout_s: f64,
    pub min_interval_s: f64,
    /// Explicit token; when absent the client reads [`TOKEN_ENV`].
    pub token: Option<String>,
}

impl Default for LiveConfig {
    fn default() -> Self {
        LiveConfig { base_url: DEFAULT_BASE_URL.to_string(), timeout_s: 5.0, min_interval_s: 10.0, token: None }
    }
}

pub struct LiveSource {
    config: LiveConfig,
    token: Option<String>,
    client: Result<reqwest::blocking::Client, String>,
    last_fetch: Option<EpochSeconds>,
}

impl LiveSource {
    pub fn new(config: LiveConfig) -> Self {
        let token = config.token.clone().or_else(|| std::env::var(TOKEN_ENV).ok()).filter(|t| !t.is_empty());
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_s.max(0.001)))
            .user_agent(concat!("skytwin/", env!("CARGO_PKG_VERSION")))
            .build()
            .map_err(|e| e.to_string());
        LiveSource { config, token, client, last_fetch: None }
    }

    pub fn states_url(&self, bbox: &BoundingBox) -> String {
        format!(
            "{}/states/all?lamin={}&lomin={}&lamax={}&lomax={}",
            self.config.base_url.trim_end_matches('/'),
            bbox.lat_min,
            bbox.lon_min,
            bbox.lat_max,
            bbox.lon_max
        )
    }

    fn request(&self, bbox: &BoundingBox, now: EpochSeconds) -> ExtractResult {
        let client = match &self.client {
            Ok(c) => c,
            Err(e) => {
                tracing::error!(error = %e, "http client unavailable");
                return ExtractResult::failed(now, FailureReason::HttpError(0));
            }
        };
        let mut req = client.get(self.states_url(bbox));
        if let Some(token) = &self.token {
            req = req.bearer_auth(token);
        }
        let resp = match req.send() {
            Ok(r) => r,
            Err(e) if e.is_timeout() => return ExtractResult::failed(now, FailureReason::Timeout),
            Err(e) => {
                tracing::warn!(error = %e, "states request failed");
                return ExtractResult::failed(now, FailureReason::HttpError(e.status().map_or(0, |s| s.as_u16())));
            }
        };
        let status = resp.status();
        if !status.is_success() {
            return ExtractResult::failed(now, FailureReason::HttpError(status.as_u16()));
        }
        let body = match resp.text() {
            Ok(b) => b,
            Err(e) if e.is_timeout() => return ExtractResult::failed(now, FailureReason::Timeout),
            Err(_) => return ExtractResult::failed(now, FailureReason::ParseError),
        };
        match parse_states_response(&body, now) {
            // keep the tick's clock; the server time is only informative
            Ok(mut r) => {
                r.fetched_at = now;
                r
            }
            Err(e) => {
                tracing::warn!(error = %e, "unparseable states response");
                ExtractResult::failed(now, FailureReason::ParseError)
            }
        }
    }
}

impl ExtractSource for LiveSource {
    fn fetch(&mut self, bbox: &BoundingBox, now: EpochSeconds) -> ExtractResult {
        if let Some(last) = self.last_fetch {
            if now - last < self.config.min_interval_s {
                tracing::debug!(since = now - last, "fetch refused by rate limit");
                return ExtractResult::failed(now, FailureReason::HttpError(429));
            }
        }
        self.last_fetch = Some(now);
        self.request(bbox, now)
    }

    fn min_interval_s(&self) -> f64 {
        self.config.min_interval_s
    }

    fn describe(&self) -> String {
        format!("live:{}", self.config.base_url)
    }
}
