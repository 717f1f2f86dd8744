//! Binary checkpoint container: magic, version, endianness tag, string
//! metadata and named little-endian `f64` tensors.

use std::collections::BTreeMap;
use std::path::Path;

use crate::datafid::{DataTerm, DataTermKind, SplineCoeffs1D, SplineCoeffs2D};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"ERCKPT\0\0";
pub const VERSION: u32 = 1;
const ENDIAN_TAG: u32 = 0x0102_0304;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl NamedTensor {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { name: name.into(), shape, data }
    }

    pub fn vector(name: impl Into<String>, data: Vec<f64>) -> Self {
        let n = data.len();
        Self::new(name, vec![n], data)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<NamedTensor>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| bad("truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| bad("invalid UTF-8"))
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = MAGIC.to_vec();
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&ENDIAN_TAG.to_le_bytes());
        out.extend_from_slice(&(self.meta.len() as u32).to_le_bytes());
        for (k, v) in &self.meta {
            put_str(&mut out, k);
            put_str(&mut out, v);
        }
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            put_str(&mut out, &t.name);
            out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
            for &d in &t.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(bad("not a checkpoint (bad magic)"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(bad(format!("unsupported version {version} (expected {VERSION})")));
        }
        if r.u32()? != ENDIAN_TAG {
            return Err(bad("endianness tag mismatch"));
        }
        let mut meta = BTreeMap::new();
        for _ in 0..r.u32()? {
            let k = r.string()?;
            meta.insert(k, r.string()?);
        }
        let count = r.u32()?;
        let mut tensors = Vec::new();
        for _ in 0..count {
            let name = r.string()?;
            let ndim = r.u32()? as usize;
            let shape = (0..ndim).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let len = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| bad("shape overflow"))?;
            let raw = r.take(len.checked_mul(8).ok_or_else(|| bad("shape overflow"))?)?;
            let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
            tensors.push(NamedTensor { name, shape, data });
        }
        if r.pos != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(Self { meta, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }

    pub fn push(&mut self, t: NamedTensor) {
        self.tensors.push(t);
    }

    pub fn tensor(&self, name: &str) -> Result<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name).ok_or_else(|| bad(format!("missing tensor '{name}'")))
    }

    pub fn has_tensor(&self, name: &str) -> bool {
        self.tensors.iter().any(|t| t.name == name)
    }

    pub fn meta(&self, key: &str) -> Result<&str> {
        self.meta.get(key).map(String::as_str).ok_or_else(|| bad(format!("missing metadata '{key}'")))
    }

    pub fn scalar(&self, name: &str) -> Result<f64> {
        match self.tensor(name)?.data.as_slice() {
            [v] => Ok(*v),
            _ => Err(bad(format!("tensor '{name}' is not a scalar"))),
        }
    }
}

/// Structure of a data term without its coefficients, e.g.
/// `frechet q=2 n=31 prox=0`.
pub fn term_descriptor(term: &DataTerm) -> String {
    let prox = u8::from(term.prox_mode);
    match &term.kind {
        DataTermKind::ScaledL2 { .. } => "l2".into(),
        DataTermKind::Frechet(s) => format!("frechet q={} n={} prox={prox}", s.q, s.n_knots()),
        DataTermKind::Divergence(s) => format!("divergence q={} half={} prox={prox}", s.q, s.half),
    }
}

/// Inverse of [`term_descriptor`] given the coefficients.
pub fn term_from_descriptor(desc: &str, params: &[f64]) -> Result<DataTerm> {
    let mut parts = desc.split_whitespace();
    let kind = parts.next().unwrap_or_default();
    let mut fields = BTreeMap::new();
    for p in parts {
        let (k, v) = p.split_once('=').ok_or_else(|| bad(format!("bad descriptor field '{p}'")))?;
        fields.insert(k, v);
    }
    let num = |k: &str| -> Result<f64> {
        fields.get(k).and_then(|v| v.parse().ok()).ok_or_else(|| bad(format!("descriptor '{desc}' lacks {k}")))
    };
    let prox_mode = num("prox").map(|v| v != 0.0).unwrap_or(false);
    let term = match kind {
        "l2" => match params {
            [s] => DataTerm::scaled_l2(*s)?,
            _ => return Err(bad("l2 term needs one parameter")),
        },
        "frechet" => {
            if params.len() != num("n")? as usize {
                return Err(bad("frechet coefficient count mismatch"));
            }
            DataTerm { kind: DataTermKind::Frechet(SplineCoeffs1D::new(num("q")?, params.to_vec())), prox_mode }
        }
        "divergence" => {
            let half = num("half")? as usize;
            if params.len() != (2 * half + 1).pow(2) {
                return Err(bad("divergence coefficient count mismatch"));
            }
            DataTerm {
                kind: DataTermKind::Divergence(SplineCoeffs2D::new(half, num("q")?, params.to_vec())),
                prox_mode,
            }
        }
        other => return Err(bad(format!("unknown data term '{other}'"))),
    };
    Ok(term)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut c = Checkpoint::default();
        c.meta.insert("config.hash".into(), "abc".into());
        c.meta.insert("note".into(), "ünïcode".into());
        c.push(NamedTensor::new("w", vec![2, 3], vec![0.1, -0.0, f64::MIN_POSITIVE, 1e300, -7.5, 3.0]));
        c.push(NamedTensor::vector("t", vec![0.25]));
        c
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let c = sample();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a/b.ckpt");
        c.save(&p).unwrap();
        let back = Checkpoint::load(&p).unwrap();
        assert_eq!(back.to_bytes(), c.to_bytes());
        let bits = |t: &NamedTensor| t.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(back.tensor("w").unwrap()), bits(c.tensor("w").unwrap()));
        assert_eq!(back.scalar("t").unwrap(), 0.25);
        assert_eq!(back.meta("note").unwrap(), "ünïcode");
    }

    #[test]
    fn rejects_corruption() {
        let bytes = sample().to_bytes();
        let mut wrong_version = bytes.clone();
        wrong_version[8] = 2;
        assert!(Checkpoint::from_bytes(&wrong_version).unwrap_err().to_string().contains("version"));
        let mut wrong_magic = bytes.clone();
        wrong_magic[0] = b'X';
        assert!(Checkpoint::from_bytes(&wrong_magic).is_err());
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut trailing = bytes;
        trailing.push(0);
        assert!(Checkpoint::from_bytes(&trailing).is_err());
    }

    #[test]
    fn descriptors_round_trip() {
        let terms = [
            DataTerm::scaled_l2(0.7).unwrap(),
            DataTerm::frechet(31, 2.0),
            DataTerm::frechet_prox(11, 1.5, 0.3),
            DataTerm::divergence(4, 2.0),
        ];
        for t in terms {
            let back = term_from_descriptor(&term_descriptor(&t), &t.params()).unwrap();
            assert_eq!(back, t);
        }
        assert!(term_from_descriptor("frechet q=2 n=3 prox=0", &[1.0]).is_err());
        assert!(term_from_descriptor("huber", &[1.0]).is_err());
    }
}
