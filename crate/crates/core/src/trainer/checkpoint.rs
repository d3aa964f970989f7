//! Binary checkpoint files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "MEMBCKPT"
//! version    u32
//! header_len u32, then header_len bytes of UTF-8 "key = value" lines
//! n_arrays   u32, then per array:
//!   name_len u16, name bytes
//!   kind     u8   (0 = dense, 1 = sparse)
//!   rows     u64, cols u64
//!   dense:   rows*cols f64, row-major
//!   sparse:  nnz u64, row_offsets (rows+1) u64, col_indices nnz u64, values nnz f64
//! ```
//!
//! The header carries the stage, entity counts, epoch, best validation metric and the
//! full training config (whose seed, together with the epoch, pins every random stream).

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use super::config::TrainConfig;
use crate::codebook::{CoarseState, FineState};
use crate::error::{Error, Result};
use crate::graphkit::SparseMatrix;
use crate::numerics::DenseMatrix;

pub const MAGIC: &[u8; 8] = b"MEMBCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageMarker {
    Coarse,
    Fine,
}

impl StageMarker {
    fn as_str(self) -> &'static str {
        match self {
            StageMarker::Coarse => "coarse",
            StageMarker::Fine => "fine",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub stage: StageMarker,
    pub num_users: usize,
    pub num_items: usize,
    pub coarse: CoarseState,
    pub fine: Option<FineState>,
    pub epoch: usize,
    pub best_metric: f64,
}

enum Array<'a> {
    Dense(&'a DenseMatrix),
    Sparse(&'a SparseMatrix),
}

fn put_u64(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u64).to_le_bytes());
}

fn encode_array(out: &mut Vec<u8>, name: &str, a: Array<'_>) {
    out.extend_from_slice(&(name.len() as u16).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    match a {
        Array::Dense(m) => {
            out.push(0);
            put_u64(out, m.rows());
            put_u64(out, m.cols());
            for v in m.as_slice() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Array::Sparse(m) => {
            out.push(1);
            put_u64(out, m.rows());
            put_u64(out, m.cols());
            put_u64(out, m.nnz());
            for &o in m.row_offsets() {
                put_u64(out, o);
            }
            for &c in m.col_indices() {
                put_u64(out, c);
            }
            for v in m.values() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
}

impl Checkpoint {
    fn header(&self) -> String {
        let mut h = String::new();
        let _ = writeln!(h, "stage = {}", self.stage.as_str());
        let _ = writeln!(h, "num_users = {}", self.num_users);
        let _ = writeln!(h, "num_items = {}", self.num_items);
        let _ = writeln!(h, "epoch = {}", self.epoch);
        let _ = writeln!(h, "best_metric = {:?}", self.best_metric);
        if let Some(fs) = &self.fine {
            let _ = writeln!(h, "fine.w_cr = {:?}", fs.w_cr);
            let _ = writeln!(h, "fine.lambda_thr = {:?}", fs.lambda_thr);
        }
        for (k, v) in self.config.entries() {
            let _ = writeln!(h, "config.{k} = {v}");
        }
        h
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let header = self.header();
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        let mut arrays = vec![
            ("e_meta_c", Array::Dense(&self.coarse.e_meta_c)),
            ("s_c", Array::Sparse(&self.coarse.s_c)),
        ];
        if let Some(fs) = &self.fine {
            arrays.push(("e_meta_r", Array::Dense(&fs.e_meta_r)));
            arrays.push(("s_r", Array::Sparse(&fs.s_r)));
        }
        out.extend_from_slice(&(arrays.len() as u32).to_le_bytes());
        for (name, a) in arrays {
            encode_array(&mut out, name, a);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::CorruptCheckpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::CheckpointVersion(format!("file version {version}, reader supports {VERSION}")));
        }
        let hlen = r.u32()? as usize;
        let header = std::str::from_utf8(r.take(hlen)?)
            .map_err(|_| Error::CorruptCheckpoint("header is not UTF-8".into()))?
            .to_string();
        let n_arrays = r.u32()?;
        let mut dense = std::collections::HashMap::new();
        let mut sparse = std::collections::HashMap::new();
        for _ in 0..n_arrays {
            let nlen = r.u16()? as usize;
            let name = String::from_utf8(r.take(nlen)?.to_vec())
                .map_err(|_| Error::CorruptCheckpoint("array name is not UTF-8".into()))?;
            let kind = r.take(1)?[0];
            let rows = r.usize()?;
            let cols = r.usize()?;
            match kind {
                0 => {
                    let len = rows
                        .checked_mul(cols)
                        .ok_or_else(|| Error::CorruptCheckpoint(format!("{name}: size overflow")))?;
                    let data = r.f64s(len)?;
                    dense.insert(name, DenseMatrix::from_vec(rows, cols, data)?);
                }
                1 => {
                    let nnz = r.usize()?;
                    let offsets = r.usizes(rows + 1)?;
                    let cols_idx = r.usizes(nnz)?;
                    let vals = r.f64s(nnz)?;
                    let m = SparseMatrix::from_csr(rows, cols, offsets, cols_idx, vals)
                        .map_err(|e| Error::CorruptCheckpoint(format!("{name}: {e}")))?;
                    sparse.insert(name, m);
                }
                k => return Err(Error::CorruptCheckpoint(format!("{name}: unknown array kind {k}"))),
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::CorruptCheckpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }

        let mut config = TrainConfig::default();
        let mut fields = std::collections::HashMap::new();
        for line in header.lines() {
            let (k, v) = line
                .split_once(" = ")
                .ok_or_else(|| Error::CorruptCheckpoint(format!("header line '{line}'")))?;
            if let Some(key) = k.strip_prefix("config.") {
                config
                    .set(key, v)
                    .map_err(|e| Error::CorruptCheckpoint(format!("header: {e}")))?;
            } else {
                fields.insert(k.to_string(), v.to_string());
            }
        }
        fn field<T: std::str::FromStr>(f: &std::collections::HashMap<String, String>, k: &str) -> Result<T> {
            f.get(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::CorruptCheckpoint(format!("header field '{k}' missing or invalid")))
        }
        let stage = match fields.get("stage").map(String::as_str) {
            Some("coarse") => StageMarker::Coarse,
            Some("fine") => StageMarker::Fine,
            other => return Err(Error::CorruptCheckpoint(format!("stage {other:?}"))),
        };
        let missing = |n: &str| Error::CorruptCheckpoint(format!("array '{n}' missing"));
        let coarse = CoarseState::new(
            dense.remove("e_meta_c").ok_or_else(|| missing("e_meta_c"))?,
            sparse.remove("s_c").ok_or_else(|| missing("s_c"))?,
        )
        .map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
        let fine = match stage {
            StageMarker::Coarse => None,
            StageMarker::Fine => Some(
                FineState::new(
                    dense.remove("e_meta_r").ok_or_else(|| missing("e_meta_r"))?,
                    sparse.remove("s_r").ok_or_else(|| missing("s_r"))?,
                    field(&fields, "fine.w_cr")?,
                    field(&fields, "fine.lambda_thr")?,
                )
                .map_err(|e| Error::CorruptCheckpoint(e.to_string()))?,
            ),
        };
        let ck = Checkpoint {
            config,
            stage,
            num_users: field(&fields, "num_users")?,
            num_items: field(&fields, "num_items")?,
            coarse,
            fine,
            epoch: field(&fields, "epoch")?,
            best_metric: field(&fields, "best_metric")?,
        };
        if ck.coarse.num_entities() != ck.num_users + ck.num_items {
            return Err(Error::CorruptCheckpoint("entity count disagrees with s_c".into()));
        }
        Ok(ck)
    }

    /// Rejects checkpoints whose shapes disagree with `cfg`.
    pub fn check_compatible(&self, cfg: &TrainConfig) -> Result<()> {
        let mut problems = Vec::new();
        if self.coarse.dim() != cfg.d {
            problems.push(format!("d: checkpoint {} vs config {}", self.coarse.dim(), cfg.d));
        }
        if self.coarse.num_buckets() != cfg.m_c {
            problems.push(format!("m_c: checkpoint {} vs config {}", self.coarse.num_buckets(), cfg.m_c));
        }
        if let Some(fs) = &self.fine {
            if fs.e_meta_r.rows() != cfg.m_r {
                problems.push(format!("m_r: checkpoint {} vs config {}", fs.e_meta_r.rows(), cfg.m_r));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::CheckpointVersion(format!("incompatible checkpoint ({})", problems.join("; "))))
        }
    }
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
            .ok_or_else(|| Error::CorruptCheckpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn usize(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| Error::CorruptCheckpoint(format!("value {v} exceeds usize")))
    }

    fn usizes(&mut self, n: usize) -> Result<Vec<usize>> {
        self.check_room(n)?;
        (0..n).map(|_| self.usize()).collect()
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        self.check_room(n)?;
        (0..n)
            .map(|_| Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"))))
            .collect()
    }

    fn check_room(&self, n: usize) -> Result<()> {
        if n.checked_mul(8).map_or(true, |b| b > self.bytes.len() - self.pos) {
            return Err(Error::CorruptCheckpoint(format!("array of {n} words overruns the file")));
        }
        Ok(())
    }
}

/// Writes to a sibling temp file then renames it into place.
pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("checkpoint path {} has no file name", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", file_name.to_string_lossy()));
    let bytes = ck.to_bytes();
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::xavier_init;

    fn sample(fine: bool) -> Checkpoint {
        let s_c = SparseMatrix::from_triplets(3, 2, vec![(0, 0, 0.5), (1, 1, -0.25), (2, 0, 1.0)]).unwrap();
        let coarse = CoarseState::new(xavier_init(2, 4, 1), s_c).unwrap();
        let fine = fine.then(|| {
            let s_r = SparseMatrix::from_triplets(2, 1, vec![(0, 0, 1.5)]).unwrap();
            FineState::new(xavier_init(1, 4, 2), s_r, 0.3, 0.01).unwrap()
        });
        let config = TrainConfig {
            d: 4,
            m_c: 2,
            m_r: 1,
            ..TrainConfig::default()
        };
        Checkpoint {
            config,
            stage: if fine.is_some() { StageMarker::Fine } else { StageMarker::Coarse },
            num_users: 1,
            num_items: 2,
            coarse,
            fine,
            epoch: 4,
            best_metric: f64::NEG_INFINITY,
        }
    }

    #[test]
    fn bytes_round_trip() {
        for fine in [false, true] {
            let ck = sample(fine);
            let bytes = ck.to_bytes();
            let back = Checkpoint::from_bytes(&bytes).unwrap();
            assert_eq!(back, ck);
            assert_eq!(back.to_bytes(), bytes);
        }
    }

    #[test]
    fn corruption_detected() {
        let bytes = sample(true).to_bytes();
        assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]), Err(Error::CorruptCheckpoint(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::CorruptCheckpoint(_))));
        let mut bad = bytes;
        bad[8] = 9;
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::CheckpointVersion(_))));
    }

    #[test]
    fn mismatched_dim_is_version_error() {
        let ck = sample(false);
        let cfg = TrainConfig { d: 8, m_c: 2, ..TrainConfig::default() };
        assert!(matches!(ck.check_compatible(&cfg), Err(Error::CheckpointVersion(_))));
        assert!(ck.check_compatible(&ck.config).is_ok());
    }
}
