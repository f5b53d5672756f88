//! Binary checkpoint container.
//!
//! Little-endian throughout:
//!
//! ```text
//! magic        4 bytes  "KPCK"
//! version      u16
//! kind         4 bytes  model tag, e.g. "RNN1"
//! config_len   u32      then config_len bytes of UTF-8 key=value text
//! sections     u32      section count, then per section:
//!   name_len   u16      then name_len bytes of UTF-8
//!   rows       u32
//!   cols       u32
//!   payload    rows*cols f64, row-major
//! ```

use std::path::Path;

use super::params::ParamStore;
use super::tensor::Tensor2;
use crate::error::{Error, Result};
use crate::kv::KvMap;

pub const MAGIC: &[u8; 4] = b"KPCK";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub name: String,
    pub tensor: Tensor2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointFile {
    pub kind: [u8; 4],
    pub config: KvMap,
    pub sections: Vec<Section>,
}

impl CheckpointFile {
    pub fn new(kind: [u8; 4], config: KvMap) -> Self {
        CheckpointFile {
            kind,
            config,
            sections: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor2) {
        self.sections.push(Section {
            name: name.into(),
            tensor,
        });
    }

    /// Appends every parameter of `store` as a section named `prefix + name`.
    pub fn push_params(&mut self, prefix: &str, store: &ParamStore) {
        for id in store.ids() {
            self.push(format!("{prefix}{}", store.name(id)), store.value(id).clone());
        }
    }

    pub fn section(&self, name: &str) -> Option<&Tensor2> {
        self.sections.iter().find(|s| s.name == name).map(|s| &s.tensor)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor2> {
        self.section(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing section `{name}`")))
    }

    /// Overwrites every parameter in `store` from sections `prefix + name`.
    pub fn load_params(&self, prefix: &str, store: &mut ParamStore) -> Result<()> {
        store.load_values(|name| self.section(&format!("{prefix}{name}")).cloned())
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.kind);
        let config = self.config.render();
        out.extend_from_slice(&len_u32(config.len(), "config")?.to_le_bytes());
        out.extend_from_slice(config.as_bytes());
        out.extend_from_slice(&len_u32(self.sections.len(), "section count")?.to_le_bytes());
        for s in &self.sections {
            let name = s.name.as_bytes();
            let name_len = u16::try_from(name.len())
                .map_err(|_| Error::Checkpoint(format!("section name `{}` too long", s.name)))?;
            out.extend_from_slice(&name_len.to_le_bytes());
            out.extend_from_slice(name);
            out.extend_from_slice(&len_u32(s.tensor.rows(), "rows")?.to_le_bytes());
            out.extend_from_slice(&len_u32(s.tensor.cols(), "cols")?.to_le_bytes());
            for v in s.tensor.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = u16::from_le_bytes(r.array()?);
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let kind: [u8; 4] = r.array()?;
        let config_len = u32::from_le_bytes(r.array()?) as usize;
        let config_text = std::str::from_utf8(r.take(config_len)?)
            .map_err(|_| Error::Checkpoint("config is not UTF-8".into()))?;
        let config = KvMap::parse(config_text, "checkpoint config")?;
        let count = u32::from_le_bytes(r.array()?) as usize;
        let mut sections = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let name_len = u16::from_le_bytes(r.array()?) as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::Checkpoint("section name is not UTF-8".into()))?
                .to_string();
            let rows = u32::from_le_bytes(r.array()?) as usize;
            let cols = u32::from_le_bytes(r.array()?) as usize;
            let n = rows
                .checked_mul(cols)
                .ok_or_else(|| Error::Checkpoint(format!("section `{name}` shape overflows")))?;
            let raw = r.take(n.checked_mul(8).ok_or_else(|| {
                Error::Checkpoint(format!("section `{name}` shape overflows"))
            })?)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect();
            let tensor = Tensor2::from_vec(rows, cols, data)
                .map_err(|e| Error::Checkpoint(format!("section `{name}`: {e}")))?;
            sections.push(Section { name, tensor });
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(CheckpointFile {
            kind,
            config,
            sections,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.encode()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }
}

fn len_u32(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Checkpoint(format!("{what} {n} exceeds u32")))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("exact length"))
    }
}
