use std::time::Duration;

use saetbl::market_data::KlineTransport;
use saetbl::{Error, Result};

/// Blocking HTTP transport for the exchange's public klines endpoint.
pub struct HttpTransport {
    base_url: String,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(base_url: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            agent,
        }
    }
}

/// Rate limits, server errors and network failures are worth retrying;
/// other client errors are not.
fn classify(err: ureq::Error) -> Error {
    let retriable = match &err {
        ureq::Error::StatusCode(code) => *code == 429 || *code == 418 || *code >= 500,
        ureq::Error::Timeout(_) | ureq::Error::Io(_) | ureq::Error::ConnectionFailed | ureq::Error::HostNotFound => true,
        _ => false,
    };
    Error::Transport {
        retriable,
        msg: err.to_string(),
    }
}

impl KlineTransport for HttpTransport {
    fn get(&self, path_and_query: &str) -> Result<String> {
        let url = format!("{}{}", self.base_url, path_and_query);
        let mut resp = self.agent.get(&url).call().map_err(classify)?;
        resp.body_mut().read_to_string().map_err(classify)
    }
}
