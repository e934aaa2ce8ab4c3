use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ft,
    Lp,
    Ip,
    Ep,
    Adapter,
    Ipet,
}

impl Method {
    pub const ALL: [Method; 6] = [Method::Ft, Method::Lp, Method::Ip, Method::Ep, Method::Adapter, Method::Ipet];

    pub fn uses_prompts(self) -> bool {
        matches!(self, Method::Ep | Method::Ipet)
    }

    pub fn uses_adapters(self) -> bool {
        matches!(self, Method::Adapter | Method::Ipet)
    }

    pub fn uses_input_prompt(self) -> bool {
        self == Method::Ip
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Ft => "FT",
            Method::Lp => "LP",
            Method::Ip => "IP",
            Method::Ep => "EP",
            Method::Adapter => "Adapter",
            Method::Ipet => "IPET",
        })
    }
}

fn default_k() -> usize {
    16
}
fn default_h() -> usize {
    48
}
fn default_s() -> f64 {
    0.1
}
fn default_ip_len() -> usize {
    8
}
fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuningSpec {
    pub method: Method,
    /// Prompts per encoder layer (EP, IPET).
    #[serde(default = "default_k")]
    pub k: usize,
    /// Adapter bottleneck width (Adapter, IPET).
    #[serde(default = "default_h")]
    pub h: usize,
    /// Adapter output scale.
    #[serde(default = "default_s")]
    pub s: f64,
    /// Input-prompt extent in time frames (spectrogram) or samples (waveform).
    #[serde(default = "default_ip_len")]
    pub ip_len: usize,
    #[serde(default = "default_true")]
    pub adapter_bias: bool,
}

impl TuningSpec {
    pub fn new(method: Method) -> Self {
        Self { method, k: default_k(), h: default_h(), s: default_s(), ip_len: default_ip_len(), adapter_bias: true }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn with_h(mut self, h: usize) -> Self {
        self.h = h;
        self
    }

    pub fn with_ip_len(mut self, ip_len: usize) -> Self {
        self.ip_len = ip_len;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.method.uses_prompts() && self.k == 0 {
            return Err(Error::Config(format!("{} needs k >= 1", self.method)));
        }
        if self.method.uses_adapters() && self.h == 0 {
            return Err(Error::Config(format!("{} needs h >= 1", self.method)));
        }
        if self.method.uses_input_prompt() && self.ip_len == 0 {
            return Err(Error::Config("IP needs ip_len >= 1".into()));
        }
        if !(self.s > 0.0 && self.s.is_finite()) {
            return Err(Error::Config(format!("adapter scale must be positive, got {}", self.s)));
        }
        Ok(())
    }
}
