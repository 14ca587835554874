//! Binary checkpoint layout, all integers little-endian:
//!
//! ```text
//! "MFCK" | version u32 | config digest u64 | config length u32 | config JSON
//! | rng seed [u8; 32] | rng stream u64 | rng word position u128
//! | parameter count u64 | parameters f64 ... | CRC32 of everything before
//! ```
//!
//! The digest is FNV-1a over the config JSON. Only the online network is
//! stored; the target network and optimizer moments are not needed to act.

use std::fs;
use std::path::Path;

use rand_chacha::ChaCha8Rng;

use super::{Agent, Mlp, TrainConfig};
use crate::error::{Error, Result};
use crate::sim::fnv1a;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MFCK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Enough of a ChaCha8 generator to resume it exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        RngState { seed: rng.get_seed(), stream: rng.get_stream(), word_pos: rng.get_word_pos() }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub rng: RngState,
    pub params: Vec<f64>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::Corrupt(format!("truncated while reading {what}")));
        };
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        Ok(self.take(N, what)?.try_into().unwrap())
    }
}

impl Checkpoint {
    pub fn from_agent(agent: &Agent, rng: &ChaCha8Rng) -> Self {
        Checkpoint {
            config: agent.config().clone(),
            rng: RngState::capture(rng),
            params: agent.online().params().to_vec(),
        }
    }

    pub fn net(&self) -> Result<Mlp<f64>> {
        let sizes = Agent::layer_sizes(&self.config);
        Mlp::from_params(&sizes, self.params.clone()).ok_or_else(|| {
            Error::Corrupt(format!("{} parameters do not fit layer sizes {sizes:?}", self.params.len()))
        })
    }

    fn config_json(&self) -> String {
        serde_json::to_string(&self.config).expect("config serializes")
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let json = self.config_json();
        let mut out = Vec::with_capacity(96 + json.len() + 8 * self.params.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&fnv1a(json.as_bytes()).to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(json.as_bytes());
        out.extend_from_slice(&self.rng.seed);
        out.extend_from_slice(&self.rng.stream.to_le_bytes());
        out.extend_from_slice(&self.rng.word_pos.to_le_bytes());
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, at: 0 };
        if r.take(4, "magic")? != CHECKPOINT_MAGIC {
            return Err(Error::Corrupt("bad magic bytes".into()));
        }
        let version = u32::from_le_bytes(r.array("version")?);
        if version != CHECKPOINT_VERSION {
            return Err(Error::VersionMismatch { found: version, expected: CHECKPOINT_VERSION });
        }
        if bytes.len() < 12 {
            return Err(Error::Corrupt("truncated".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        if crc32fast::hash(body) != stored {
            return Err(Error::Corrupt("checksum mismatch".into()));
        }
        let mut r = Reader { bytes: body, at: 8 };
        let digest = u64::from_le_bytes(r.array("config digest")?);
        let len = u32::from_le_bytes(r.array("config length")?) as usize;
        let json = r.take(len, "config")?;
        if fnv1a(json) != digest {
            return Err(Error::Corrupt("config digest mismatch".into()));
        }
        let config: TrainConfig =
            serde_json::from_slice(json).map_err(|e| Error::Corrupt(format!("config: {e}")))?;
        let rng = RngState {
            seed: r.array("rng seed")?,
            stream: u64::from_le_bytes(r.array("rng stream")?),
            word_pos: u128::from_le_bytes(r.array("rng position")?),
        };
        let count = u64::from_le_bytes(r.array("parameter count")?) as usize;
        let raw = r.take(count.saturating_mul(8), "parameters")?;
        let params = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        if r.at != body.len() {
            return Err(Error::Corrupt("trailing bytes".into()));
        }
        let ck = Checkpoint { config, rng, params };
        ck.net()?;
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
