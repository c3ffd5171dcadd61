//! Named parameters and the bit-exact checkpoint container.
//!
//! Checkpoint layout (all integers little-endian):
//!
//! ```text
//! magic          8 bytes  "GMSDCKPT"
//! version        u32      currently 1
//! param_count    u32
//! repeated param_count times:
//!   name_len     u16
//!   name         UTF-8 bytes
//!   rank         u8
//!   extents      u32 x rank
//!   values       f32 x prod(extents), IEEE-754 little-endian
//! config_len     u32      length of trailing config text (0 if none)
//! config         UTF-8 bytes
//! ```

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::element::Element;
use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"GMSDCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A named, optionally trainable tensor.
#[derive(Clone, Debug)]
pub struct Parameter<E: Element> {
    pub name: String,
    pub value: Tensor<E>,
    pub trainable: bool,
}

/// Handle into a [`ParamStore`].
#[derive(Clone, Copy, PartialEq, Eq, Debug, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(&self) -> usize {
        self.0
    }
}

/// Flat registry of model parameters with unique names.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<E: Element> {
    params: Vec<Parameter<E>>,
    by_name: HashMap<String, ParamId>,
}

impl<E: Element> ParamStore<E> {
    pub fn new() -> Self {
        Self {
            params: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<E>, trainable: bool) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(TensorError::DuplicateName(name));
        }
        let id = ParamId(self.params.len());
        self.by_name.insert(name.clone(), id);
        self.params.push(Parameter {
            name,
            value,
            trainable,
        });
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Parameter<E> {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor<E> {
        &self.params[id.0].value
    }

    pub fn set_value(&mut self, id: ParamId, value: Tensor<E>) {
        assert_eq!(
            self.params[id.0].value.shape(),
            value.shape(),
            "parameter {} shape change",
            self.params[id.0].name
        );
        self.params[id.0].value = value;
    }

    pub fn lookup(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter<E>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    /// Total number of scalar elements across all parameters.
    pub fn total_elements(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    /// Serialize all parameters plus an optional config trailer.
    pub fn save<W: Write>(&self, mut w: W, config: Option<&str>) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(self.params.len() as u32).to_le_bytes())?;
        for p in &self.params {
            let name = p.name.as_bytes();
            assert!(name.len() <= u16::MAX as usize);
            w.write_all(&(name.len() as u16).to_le_bytes())?;
            w.write_all(name)?;
            let shape = p.value.shape();
            assert!(shape.len() <= u8::MAX as usize);
            w.write_all(&[shape.len() as u8])?;
            for &d in shape {
                w.write_all(&(d as u32).to_le_bytes())?;
            }
            for &v in p.value.data() {
                w.write_all(&v.as_f32().to_le_bytes())?;
            }
        }
        let cfg = config.unwrap_or("").as_bytes();
        w.write_all(&(cfg.len() as u32).to_le_bytes())?;
        w.write_all(cfg)?;
        Ok(())
    }

    pub fn save_file(&self, path: &Path, config: Option<&str>) -> Result<()> {
        let mut buf = Vec::new();
        self.save(&mut buf, config)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    /// Overwrite parameter values from checkpoint records, matching by name.
    /// Every store parameter must be present with a matching shape.
    pub fn load_records(&mut self, records: &[CheckpointRecord]) -> Result<()> {
        let by_name: HashMap<&str, &CheckpointRecord> =
            records.iter().map(|r| (r.name.as_str(), r)).collect();
        for p in &mut self.params {
            let rec = by_name
                .get(p.name.as_str())
                .ok_or_else(|| TensorError::UnknownName(p.name.clone()))?;
            if rec.shape != p.value.shape() {
                return Err(TensorError::ShapeMismatch {
                    left: rec.shape.clone(),
                    right: p.value.shape().to_vec(),
                });
            }
            p.value = Tensor::new(
                rec.shape.clone(),
                rec.values.iter().map(|&v| E::from_f32(v)).collect(),
            )?;
        }
        Ok(())
    }
}

/// One deserialized checkpoint parameter.
#[derive(Clone, Debug)]
pub struct CheckpointRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

/// Parsed checkpoint: records plus the embedded config text.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub records: Vec<CheckpointRecord>,
    pub config: String,
}

impl Checkpoint {
    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        fn fail(msg: &str) -> TensorError {
            TensorError::CheckpointRead(msg.to_string())
        }
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)
            .map_err(|_| fail("file too short for magic"))?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(fail("bad magic"));
        }
        let version = read_u32(&mut r).map_err(|_| fail("missing version"))?;
        if version != CHECKPOINT_VERSION {
            return Err(TensorError::CheckpointRead(format!(
                "unsupported version {version}"
            )));
        }
        let count = read_u32(&mut r).map_err(|_| fail("missing parameter count"))?;
        let mut records = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let name_len = read_u16(&mut r).map_err(|_| fail("truncated record"))? as usize;
            let mut name = vec![0u8; name_len];
            r.read_exact(&mut name).map_err(|_| fail("truncated name"))?;
            let name = String::from_utf8(name).map_err(|_| fail("name not UTF-8"))?;
            let mut rank = [0u8; 1];
            r.read_exact(&mut rank).map_err(|_| fail("truncated rank"))?;
            let mut shape = Vec::with_capacity(rank[0] as usize);
            for _ in 0..rank[0] {
                shape.push(read_u32(&mut r).map_err(|_| fail("truncated extents"))? as usize);
            }
            let numel: usize = shape.iter().product();
            if numel > (1 << 28) {
                return Err(fail("implausible parameter size"));
            }
            let mut values = Vec::with_capacity(numel);
            let mut buf = [0u8; 4];
            for _ in 0..numel {
                r.read_exact(&mut buf).map_err(|_| fail("truncated values"))?;
                values.push(f32::from_le_bytes(buf));
            }
            records.push(CheckpointRecord { name, shape, values });
        }
        let cfg_len = read_u32(&mut r).map_err(|_| fail("missing config length"))? as usize;
        if cfg_len > (1 << 24) {
            return Err(fail("implausible config size"));
        }
        let mut cfg = vec![0u8; cfg_len];
        r.read_exact(&mut cfg).map_err(|_| fail("truncated config"))?;
        let config = String::from_utf8(cfg).map_err(|_| fail("config not UTF-8"))?;
        Ok(Self { records, config })
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::read(bytes.as_slice())
    }
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u16<R: Read>(r: &mut R) -> std::io::Result<u16> {
    let mut buf = [0u8; 2];
    r.read_exact(&mut buf)?;
    Ok(u16::from_le_bytes(buf))
}

/// 64-bit FNV-1a over a byte slice (used for checkpoint identity hashes).
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_names_rejected() {
        let mut store: ParamStore<f32> = ParamStore::new();
        store.add("a.w", Tensor::zeros(vec![2]), true).unwrap();
        assert!(matches!(
            store.add("a.w", Tensor::zeros(vec![2]), true),
            Err(TensorError::DuplicateName(_))
        ));
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut store: ParamStore<f64> = ParamStore::new();
        store
            .add("layer.kernel", Tensor::from_fn(vec![2, 3], |i| i as f64 * 0.5), true)
            .unwrap();
        store.add("layer.bias", Tensor::zeros(vec![3]), true).unwrap();
        let mut bytes = Vec::new();
        store.save(&mut bytes, Some("mode=mixed\nn=8\n")).unwrap();

        let ckpt = Checkpoint::read(bytes.as_slice()).unwrap();
        assert_eq!(ckpt.config, "mode=mixed\nn=8\n");
        assert_eq!(ckpt.records.len(), 2);
        assert_eq!(ckpt.records[0].name, "layer.kernel");
        assert_eq!(ckpt.records[0].shape, vec![2, 3]);
        assert_eq!(ckpt.records[0].values[2], 1.0);

        let mut store2: ParamStore<f64> = ParamStore::new();
        store2.add("layer.kernel", Tensor::zeros(vec![2, 3]), true).unwrap();
        store2.add("layer.bias", Tensor::zeros(vec![3]), true).unwrap();
        store2.load_records(&ckpt.records).unwrap();
        assert_eq!(store2.value(ParamId(0)).data()[4], 2.0);
    }

    #[test]
    fn checkpoint_rejects_garbage() {
        assert!(Checkpoint::read(&b"NOTMAGIC"[..]).is_err());
        assert!(Checkpoint::read(&b"GMSDCKPT"[..]).is_err());
    }

    #[test]
    fn fnv_known_values() {
        // FNV-1a reference vectors
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
    }
}
