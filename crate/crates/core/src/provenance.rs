//! Self-describing headers for every emitted file.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub toolkit_version: String,
    pub corpus_sha256: String,
    pub config_sha256: String,
    pub seed: u64,
}

impl Provenance {
    pub fn new(corpus_bytes: &[u8], config: &impl Serialize, seed: u64) -> Self {
        let config_json = serde_json::to_vec(config).expect("config serializes");
        Self {
            toolkit_version: crate::VERSION.to_string(),
            corpus_sha256: sha256_hex(corpus_bytes),
            config_sha256: sha256_hex(&config_json),
            seed,
        }
    }

    /// `# key=value ...` line used at the top of CSV outputs.
    pub fn write_csv_comment<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(
            w,
            "# toolkit_version={} corpus_sha256={} config_sha256={} seed={}",
            self.toolkit_version, self.corpus_sha256, self.config_sha256, self.seed
        )
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
