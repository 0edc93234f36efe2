//! Provenance blocks embedded in every artifact the toolkit writes.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// `(label, sha256)` of every input file or in-memory input.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inputs: Vec<InputDigest>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub name: String,
    pub sha256: String,
}

impl Provenance {
    pub fn new(command: &str, seed: Option<u64>) -> Self {
        Self {
            tool: "mptsp".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: Some(command.to_string()),
            seed,
            inputs: Vec::new(),
        }
    }

    pub fn with_input(mut self, name: impl Into<String>, bytes: &[u8]) -> Self {
        self.inputs.push(InputDigest {
            name: name.into(),
            sha256: sha256_hex(bytes),
        });
        self
    }

    /// `# key=value` comment lines for CSV headers.
    pub fn comment_lines(&self) -> Vec<String> {
        let mut lines = vec![format!("# tool={} {}", self.tool, self.version)];
        if let Some(cmd) = &self.command {
            lines.push(format!("# command={cmd}"));
        }
        if let Some(seed) = self.seed {
            lines.push(format!("# seed={seed}"));
        }
        for input in &self.inputs {
            lines.push(format!("# input.{}={}", input.name, input.sha256));
        }
        lines
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
