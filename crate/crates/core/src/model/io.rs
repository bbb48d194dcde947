//! Binary weight files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "SGZ1"                       4-byte magic
//! u32 version                  currently 1
//! u32 header_len, header       UTF-8 `key=value` lines describing the model
//! u32 tensor_count
//! per tensor:
//!   u16 name_len, name         e.g. "conv1.dw", "lif3.beta"
//!   u8 trainable
//!   u8 rank, rank x u32 dims
//!   prod(dims) x f32 values
//! ```

use std::fs;
use std::path::Path;

use super::{MembraneInit, ModelConfig, ModelParams};
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"SGZ1";
pub const FORMAT_VERSION: u32 = 1;

fn header_text(c: &ModelConfig) -> String {
    let init = match c.membrane_init {
        MembraneInit::Zero => "zero",
        MembraneInit::Uniform => "uniform",
    };
    format!(
        "n={}\nuse_dsc={}\nseed={}\nsurrogate_slope={}\ntheta={}\noutput_spiking={}\nmembrane_init={}\n",
        c.n, c.use_dsc, c.seed, c.surrogate_slope, c.theta, c.output_spiking, init
    )
}

fn parse_header(text: &str) -> Result<ModelConfig> {
    let mut c = ModelConfig::default();
    let bad = |k: &str, v: &str| Error::Format(format!("header value {k}={v}"));
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("header line `{line}`")))?;
        match k {
            "n" => c.n = v.parse().map_err(|_| bad(k, v))?,
            "use_dsc" => c.use_dsc = v.parse().map_err(|_| bad(k, v))?,
            "seed" => c.seed = v.parse().map_err(|_| bad(k, v))?,
            "surrogate_slope" => c.surrogate_slope = v.parse().map_err(|_| bad(k, v))?,
            "theta" => c.theta = v.parse().map_err(|_| bad(k, v))?,
            "output_spiking" => c.output_spiking = v.parse().map_err(|_| bad(k, v))?,
            "membrane_init" => {
                c.membrane_init = match v {
                    "zero" => MembraneInit::Zero,
                    "uniform" => MembraneInit::Uniform,
                    _ => return Err(bad(k, v)),
                }
            }
            _ => return Err(Error::Format(format!("unknown header key `{k}`"))),
        }
    }
    Ok(c)
}

impl ModelParams {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        let header = header_text(&self.config);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        let tensors = self.tensors();
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for t in tensors {
            out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.push(t.trainable as u8);
            out.push(t.shape.len() as u8);
            for d in &t.shape {
                out.extend_from_slice(&(*d as u32).to_le_bytes());
            }
            for v in t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic: [u8; 4] = r.take(4, "magic")?.try_into().expect("4 bytes");
        if magic != MAGIC {
            return Err(Error::BadMagic { found: magic });
        }
        let version = r.u32("version")?;
        if version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let header_len = r.u32("header length")? as usize;
        let header = std::str::from_utf8(r.take(header_len, "header")?)
            .map_err(|_| Error::Format("header is not UTF-8".into()))?;
        let config = parse_header(header)?;
        let mut params = ModelParams::zeros(&config)?;
        let count = r.u32("tensor count")? as usize;
        let mut views = params.tensors_mut();
        if count != views.len() {
            return Err(Error::Shape(format!(
                "file has {count} tensors, model has {}",
                views.len()
            )));
        }
        for view in views.iter_mut() {
            let name_len = r.u16("name length")? as usize;
            let name = std::str::from_utf8(r.take(name_len, "tensor name")?)
                .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
            if name != view.name {
                return Err(Error::Format(format!(
                    "expected tensor `{}`, found `{name}`",
                    view.name
                )));
            }
            let _trainable = r.u8("trainable flag")?;
            let rank = r.u8("rank")? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32("dimension")? as usize);
            }
            if shape != view.shape {
                return Err(Error::Shape(format!(
                    "tensor `{name}` has shape {shape:?}, model expects {:?}",
                    view.shape
                )));
            }
            let raw = r.take(4 * view.data.len(), name)?;
            for (v, chunk) in view.data.iter_mut().zip(raw.chunks_exact(4)) {
                *v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
            }
        }
        drop(views);
        if r.pos != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Loads a file and rejects it unless its architecture matches `expected`
    /// (`N` and the conv variant).
    pub fn load_checked(path: impl AsRef<Path>, expected: &ModelConfig) -> Result<Self> {
        let params = Self::load(path)?;
        if params.config.n != expected.n || params.config.use_dsc != expected.use_dsc {
            return Err(Error::Shape(format!(
                "weight file holds N={} use_dsc={}, configuration asks for N={} use_dsc={}",
                params.config.n, params.config.use_dsc, expected.n, expected.use_dsc
            )));
        }
        Ok(params)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Truncated(format!("while reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4, what)?.try_into().expect("4 bytes"),
        ))
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(
            self.take(2, what)?.try_into().expect("2 bytes"),
        ))
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }
}
