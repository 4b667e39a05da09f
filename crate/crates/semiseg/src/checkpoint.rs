//! Versioned binary checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic       8 bytes  "SSEGCKPT"
//! version     u32
//! header_len  u64, then header_len bytes of UTF-8 key-value text
//! n_tensors   u64, then per tensor:
//!   name_len u32, name bytes, rows u64, cols u64, rows·cols f64
//! ```
//!
//! Floats are stored bit-for-bit, so a round trip is exact.

use std::io::{Read, Write};
use std::path::Path;

use semiseg_core::generative::{DynamicsKind, SldsParams};
use semiseg_core::training::{TrainConfig, TrainedModel};
use semiseg_core::Tensor;

use crate::error::{IoError, IoResult};
use crate::kv::KeyValues;

pub const MAGIC: &[u8; 8] = b"SSEGCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: KeyValues,
    pub tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let header = self.header.to_text();
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        out.extend_from_slice(&(self.tensors.len() as u64).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.rows() as u64).to_le_bytes());
            out.extend_from_slice(&(t.cols() as u64).to_le_bytes());
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> IoResult<Self> {
        let mut r = bytes;
        let bad = |m: &str| IoError::format(origin, m);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| bad("truncated checkpoint"))?;
        if &magic != MAGIC {
            return Err(bad("not a semiseg checkpoint"));
        }
        let version = u32::from_le_bytes(take(&mut r, origin)?);
        if version != VERSION {
            return Err(IoError::format(
                origin,
                format!("unsupported checkpoint version {version} (expected {VERSION})"),
            ));
        }
        let header_len = u64::from_le_bytes(take(&mut r, origin)?) as usize;
        let header = take_slice(&mut r, header_len, origin)?;
        let header = std::str::from_utf8(header).map_err(|_| bad("header is not UTF-8"))?;
        let header = KeyValues::parse(header, origin)?;
        let n = u64::from_le_bytes(take(&mut r, origin)?) as usize;
        let mut tensors = Vec::new();
        for _ in 0..n {
            let len = u32::from_le_bytes(take(&mut r, origin)?) as usize;
            let name = std::str::from_utf8(take_slice(&mut r, len, origin)?)
                .map_err(|_| bad("tensor name is not UTF-8"))?
                .to_string();
            let rows = u64::from_le_bytes(take(&mut r, origin)?) as usize;
            let cols = u64::from_le_bytes(take(&mut r, origin)?) as usize;
            let count = rows.checked_mul(cols).ok_or_else(|| bad("tensor too large"))?;
            let raw = take_slice(&mut r, count.checked_mul(8).ok_or_else(|| bad("tensor too large"))?, origin)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect();
            tensors.push((name, Tensor::from_vec(rows, cols, data)?));
        }
        if !r.is_empty() {
            return Err(bad("trailing bytes after last tensor"));
        }
        Ok(Self { header, tensors })
    }

    pub fn write(&self, path: &Path) -> IoResult<()> {
        let mut f = std::fs::File::create(path).map_err(|e| IoError::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| IoError::io(path, e))
    }

    pub fn read(path: &Path) -> IoResult<Self> {
        let bytes = std::fs::read(path).map_err(|e| IoError::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    fn kind(&self, origin: &Path, expected: &str) -> IoResult<()> {
        match self.header.get("kind") {
            Some(k) if k == expected => Ok(()),
            other => Err(IoError::format(
                origin,
                format!("expected a `{expected}` checkpoint, found `{}`", other.unwrap_or("?")),
            )),
        }
    }

    fn usize_field(&self, key: &str, origin: &Path) -> IoResult<usize> {
        self.header
            .get(key)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| IoError::format(origin, format!("missing or invalid `{key}`")))
    }
}

fn take<const N: usize>(r: &mut &[u8], origin: &Path) -> IoResult<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|_| IoError::format(origin, "truncated checkpoint"))?;
    Ok(buf)
}

fn take_slice<'a>(r: &mut &'a [u8], n: usize, origin: &Path) -> IoResult<&'a [u8]> {
    if r.len() < n {
        return Err(IoError::format(origin, "truncated checkpoint"));
    }
    let (head, tail) = r.split_at(n);
    *r = tail;
    Ok(head)
}

const MODEL_KEYS: [&str; 4] = ["kind", "model.input_dim", "model.n_classes", "model.latent_dim"];

pub fn model_checkpoint(model: &TrainedModel) -> Checkpoint {
    let mut header = KeyValues::new();
    header.set("kind", "model");
    header.set("model.input_dim", model.input_dim.to_string());
    header.set("model.n_classes", model.n_classes.to_string());
    header.set("model.latent_dim", model.latent_dim.to_string());
    for (k, v) in model.config.to_key_values() {
        header.set(k, v);
    }
    Checkpoint {
        header,
        tensors: model.named_tensors(),
    }
}

pub fn save_model(path: &Path, model: &TrainedModel) -> IoResult<()> {
    model_checkpoint(model).write(path)
}

pub fn load_model(path: &Path) -> IoResult<TrainedModel> {
    let ck = Checkpoint::read(path)?;
    ck.kind(path, "model")?;
    let mut config = TrainConfig::default();
    for (k, v) in ck.header.iter().filter(|(k, _)| !MODEL_KEYS.contains(k)) {
        config.set(k, v)?;
    }
    let input_dim = ck.usize_field("model.input_dim", path)?;
    let n_classes = ck.usize_field("model.n_classes", path)?;
    let latent_dim = ck.usize_field("model.latent_dim", path)?;
    Ok(TrainedModel::from_named_tensors(
        &config, input_dim, n_classes, latent_dim, ck.tensors,
    )?)
}

fn kind_str(k: DynamicsKind) -> &'static str {
    match k {
        DynamicsKind::Linear => "linear",
        DynamicsKind::Nonlinear => "nonlinear",
    }
}

pub fn save_slds(path: &Path, params: &SldsParams) -> IoResult<()> {
    let mut header = KeyValues::new();
    header.set("kind", "slds");
    header.set("slds.n_states", params.n_states().to_string());
    header.set("slds.latent_dim", params.latent_dim().to_string());
    header.set("slds.obs_dim", params.obs_dim().to_string());
    header.set("slds.dynamics", kind_str(params.kind()));
    let tensors = params.store.iter().map(|(n, t)| (n.to_string(), t.clone())).collect();
    Checkpoint { header, tensors }.write(path)
}

pub fn load_slds(path: &Path) -> IoResult<SldsParams> {
    let ck = Checkpoint::read(path)?;
    ck.kind(path, "slds")?;
    let kind = match ck.header.get("slds.dynamics") {
        Some("linear") => DynamicsKind::Linear,
        Some("nonlinear") => DynamicsKind::Nonlinear,
        other => {
            return Err(IoError::format(path, format!("invalid slds.dynamics `{}`", other.unwrap_or("?"))))
        }
    };
    let mut p = SldsParams::new(
        ck.usize_field("slds.n_states", path)?,
        ck.usize_field("slds.latent_dim", path)?,
        ck.usize_field("slds.obs_dim", path)?,
        kind,
        0,
    )?;
    if ck.tensors.len() != p.store.len() {
        return Err(IoError::format(
            path,
            format!("expected {} tensors, found {}", p.store.len(), ck.tensors.len()),
        ));
    }
    for (name, t) in ck.tensors {
        p.store.assign(&name, t)?;
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bytes_round_trip_exactly() {
        let mut header = KeyValues::new();
        header.set("kind", "test");
        let t = Tensor::from_vec(2, 2, vec![0.1, -0.0, f64::MIN_POSITIVE, 1e300]).unwrap();
        let ck = Checkpoint {
            header,
            tensors: vec![("w".into(), t), ("empty".into(), Tensor::zeros(0, 7))],
        };
        let back = Checkpoint::from_bytes(&ck.to_bytes(), Path::new("mem")).unwrap();
        assert_eq!(back.header, ck.header);
        for ((na, a), (nb, b)) in back.tensors.iter().zip(&ck.tensors) {
            assert_eq!(na, nb);
            assert_eq!(a.shape(), b.shape());
            let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b));
        }
    }

    #[test]
    fn rejects_corrupt_input() {
        let ck = Checkpoint {
            header: KeyValues::new(),
            tensors: vec![("w".into(), Tensor::zeros(1, 1))],
        };
        let bytes = ck.to_bytes();
        let p = Path::new("mem");
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1], p).is_err());
        assert!(Checkpoint::from_bytes(b"garbage!garbage!", p).is_err());
        let mut v2 = bytes.clone();
        v2[8] = 2;
        assert!(Checkpoint::from_bytes(&v2, p).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra, p).is_err());
    }
}
