//! Named parameter tensors with paired gradient and optimizer-moment storage,
//! plus a binary checkpoint format with bit-exact round-trips.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::mat::DetRng;

/// One learnable tensor: values, accumulated gradient, and AdamW moments.
/// All four buffers share the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
    pub grad: Vec<f64>,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let n = rows * cols;
        Tensor {
            rows,
            cols,
            data: vec![0.0; n],
            grad: vec![0.0; n],
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn grad_row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.grad[r * self.cols..(r + 1) * self.cols]
    }
}

/// All learnable tensors of a model, keyed by name. BTreeMap keeps every
/// iteration order (updates, checkpoints, gradient checks) deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    tensors: BTreeMap<String, Tensor>,
    pub rng_seed: u64,
    pub step: u64,
}

impl ParamStore {
    pub fn new(rng_seed: u64) -> Self {
        ParamStore {
            tensors: BTreeMap::new(),
            rng_seed,
            step: 0,
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.tensors.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter name {}", name)));
        }
        self.tensors.insert(name, tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Config(format!("missing parameter {}", name)))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| Error::Config(format!("missing parameter {}", name)))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(|s| s.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn zero_grads(&mut self) {
        for t in self.tensors.values_mut() {
            t.grad.fill(0.0);
        }
    }

    /// Scale every gradient by `factor` (used to average accumulated grads).
    pub fn scale_grads(&mut self, factor: f64) {
        for t in self.tensors.values_mut() {
            for g in t.grad.iter_mut() {
                *g *= factor;
            }
        }
    }

    /// Glorot-uniform initialized tensor: U(-a, a) with a = sqrt(6/(fan_in+fan_out)).
    pub fn glorot(rows: usize, cols: usize, fan_in: usize, fan_out: usize, rng: &mut DetRng) -> Tensor {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let mut t = Tensor::zeros(rows, cols);
        for x in t.data.iter_mut() {
            *x = rng.random::<f64>() * 2.0 * limit - limit;
        }
        t
    }
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"CVGATCK\0";
const CHECKPOINT_VERSION: u32 = 1;

/// Write `store` plus a caller-supplied metadata string (JSON by convention)
/// to `path`. Values, moments, and the step counter are persisted; gradients
/// are transient and are not. Floats are little-endian f64, so the round-trip
/// is bit-exact.
pub fn save_checkpoint(path: &Path, meta: &str, store: &ParamStore) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&store.rng_seed.to_le_bytes());
    buf.extend_from_slice(&store.step.to_le_bytes());
    let meta_bytes = meta.as_bytes();
    buf.extend_from_slice(&(meta_bytes.len() as u32).to_le_bytes());
    buf.extend_from_slice(meta_bytes);
    buf.extend_from_slice(&(store.tensors.len() as u32).to_le_bytes());
    for (name, t) in store.iter() {
        let nb = name.as_bytes();
        buf.extend_from_slice(&(nb.len() as u32).to_le_bytes());
        buf.extend_from_slice(nb);
        buf.extend_from_slice(&(t.rows as u32).to_le_bytes());
        buf.extend_from_slice(&(t.cols as u32).to_le_bytes());
        for series in [&t.data, &t.m, &t.v] {
            for x in series {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(String, ParamStore)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };

    let magic = cur.take(8)?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::Format {
            line: 0,
            message: "not a checkpoint file (bad magic)".into(),
        });
    }
    let version = cur.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format {
            line: 0,
            message: format!("unsupported checkpoint version {}", version),
        });
    }
    let rng_seed = cur.u64()?;
    let step = cur.u64()?;
    let meta_len = cur.u32()? as usize;
    let meta = String::from_utf8(cur.take(meta_len)?.to_vec())
        .map_err(|e| Error::Format { line: 0, message: format!("bad metadata: {}", e) })?;
    let count = cur.u32()? as usize;

    let mut store = ParamStore::new(rng_seed);
    store.step = step;
    for _ in 0..count {
        let name_len = cur.u32()? as usize;
        let name = String::from_utf8(cur.take(name_len)?.to_vec())
            .map_err(|e| Error::Format { line: 0, message: format!("bad tensor name: {}", e) })?;
        let rows = cur.u32()? as usize;
        let cols = cur.u32()? as usize;
        let mut t = Tensor::zeros(rows, cols);
        for series in [&mut t.data, &mut t.m, &mut t.v] {
            for x in series.iter_mut() {
                *x = cur.f64()?;
            }
        }
        store.insert(name, t)?;
    }
    Ok((meta, store))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format {
                line: 0,
                message: "truncated checkpoint".into(),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn duplicate_names_rejected() {
        let mut s = ParamStore::new(0);
        s.insert("w", Tensor::zeros(2, 2)).unwrap();
        assert!(s.insert("w", Tensor::zeros(2, 2)).is_err());
    }

    #[test]
    fn missing_parameter_is_config_error() {
        let s = ParamStore::new(0);
        assert!(matches!(s.get("nope"), Err(Error::Config(_))));
    }

    #[test]
    fn glorot_within_limit() {
        let mut rng = DetRng::seed_from_u64(3);
        let t = ParamStore::glorot(8, 8, 8, 8, &mut rng);
        let limit = (6.0 / 16.0f64).sqrt();
        assert!(t.data.iter().all(|x| x.abs() <= limit));
        assert!(t.data.iter().any(|x| x.abs() > 1e-3));
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let mut rng = DetRng::seed_from_u64(9);
        let mut store = ParamStore::new(1234);
        store.step = 77;
        let mut t = ParamStore::glorot(3, 4, 3, 4, &mut rng);
        t.m[0] = 0.123456789012345678;
        t.v[5] = -1e-300;
        store.insert("layer0.head0.w", t).unwrap();
        store.insert("head.b_c", Tensor::zeros(1, 1)).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.bin");
        save_checkpoint(&path, "{\"kind\":\"test\"}", &store).unwrap();
        let (meta, loaded) = load_checkpoint(&path).unwrap();
        assert_eq!(meta, "{\"kind\":\"test\"}");
        assert_eq!(loaded.rng_seed, 1234);
        assert_eq!(loaded.step, 77);
        for (name, t) in store.iter() {
            let l = loaded.get(name).unwrap();
            assert_eq!(t.rows, l.rows);
            assert_eq!(t.cols, l.cols);
            assert_eq!(t.data, l.data);
            assert_eq!(t.m, l.m);
            assert_eq!(t.v, l.v);
        }

        // saving the loaded store reproduces the file byte for byte
        let path2 = dir.path().join("ck2.bin");
        save_checkpoint(&path2, &meta, &loaded).unwrap();
        let b1 = std::fs::read(&path).unwrap();
        let b2 = std::fs::read(&path2).unwrap();
        assert_eq!(b1, b2);
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.bin");
        std::fs::write(&path, b"NOTACKPT00000000").unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
