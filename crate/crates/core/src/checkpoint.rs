//! Snapshot container for accumulators and fitted ridge classifiers.
//!
//! ```text
//! magic "LAYC" | version u32 = 1 | kind u32 | dtype u32 = 1 (f64) | body | fnv1a64 u64
//! accumulator body: dim u32 | classes u32 | k u32 | samples_seen u64
//!                   | counts[classes] u64 | gram[dim*dim] f64 | proto_sums[classes*dim] f64
//! classifier body:  dim u32 | classes u32 | lambda f64 | solve_method u32
//!                   | weights[classes*dim] f64
//! ```
//!
//! Little-endian throughout, matrices row-major. The trailing checksum
//! covers every preceding byte. Values are always stored as f64 so a
//! restore is bit-exact.

use std::path::Path;

use nalgebra::DMatrix;

use crate::accumulator::StatAccumulator;
use crate::error::{Error, Result};
use crate::feature_io::{Dtype, Fnv1a64};
use crate::solver::{RidgeClassifier, SolveMethod};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"LAYC";
pub const CHECKPOINT_VERSION: u32 = 1;

const KIND_ACCUMULATOR: u32 = 0;
const KIND_RIDGE: u32 = 1;
const PREAMBLE_LEN: usize = 16;

struct Encoder(Vec<u8>);

impl Encoder {
    fn new(kind: u32) -> Self {
        let mut e = Self(Vec::new());
        e.0.extend_from_slice(&CHECKPOINT_MAGIC);
        e.u32(CHECKPOINT_VERSION);
        e.u32(kind);
        e.u32(Dtype::F64.tag());
        e
    }

    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn matrix(&mut self, m: &DMatrix<f64>) {
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                self.f64(m[(r, c)]);
            }
        }
    }

    fn finish(mut self) -> Vec<u8> {
        let sum = Fnv1a64::hash(&self.0);
        self.u64(sum);
        self.0
    }
}

struct Decoder<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Decoder<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Corruption {
                path: self.path.to_path_buf(),
                offset: self.bytes.len() as u64,
                reason: "checkpoint ends early".into(),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
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

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
        let needed = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(8))
            .filter(|&n| self.pos + n <= self.bytes.len());
        if needed.is_none() {
            return Err(Error::Corruption {
                path: self.path.to_path_buf(),
                offset: self.bytes.len() as u64,
                reason: format!("checkpoint too short for a {rows}x{cols} matrix"),
            });
        }
        let mut m = DMatrix::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m[(r, c)] = self.f64()?;
            }
        }
        Ok(m)
    }

    fn end(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Corruption {
                path: self.path.to_path_buf(),
                offset: self.pos as u64,
                reason: "trailing bytes after checkpoint body".into(),
            });
        }
        Ok(())
    }
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads a checkpoint, verifies its preamble and checksum, and returns a
/// decoder positioned at the body.
fn open<'a>(path: &'a Path, bytes: &'a [u8], kind: u32) -> Result<Decoder<'a>> {
    if bytes.len() >= 4 && bytes[..4] != CHECKPOINT_MAGIC {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: "bad magic, expected \"LAYC\"".into(),
        });
    }
    if bytes.len() < PREAMBLE_LEN + 8 {
        return Err(Error::Corruption {
            path: path.to_path_buf(),
            offset: bytes.len() as u64,
            reason: "checkpoint shorter than its preamble".into(),
        });
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 8);
    let mut d = Decoder {
        bytes: body,
        pos: 4,
        path,
    };
    let version = d.u32()?;
    if version == 0 || version > CHECKPOINT_VERSION {
        return Err(Error::UnsupportedVersion {
            path: path.to_path_buf(),
            version,
        });
    }
    let stored = u64::from_le_bytes(trailer.try_into().unwrap());
    if Fnv1a64::hash(body) != stored {
        return Err(Error::Corruption {
            path: path.to_path_buf(),
            offset: body.len() as u64,
            reason: "checksum mismatch".into(),
        });
    }
    let found = d.u32()?;
    if found != kind {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("checkpoint kind {found}, expected {kind}"),
        });
    }
    let dtype = d.u32()?;
    if dtype != Dtype::F64.tag() {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("checkpoint dtype tag {dtype}, expected f64"),
        });
    }
    Ok(d)
}

pub fn encode_accumulator(acc: &StatAccumulator) -> Vec<u8> {
    let mut e = Encoder::new(KIND_ACCUMULATOR);
    e.u32(acc.dim() as u32);
    e.u32(acc.num_classes() as u32);
    e.u32(acc.k() as u32);
    e.u64(acc.samples_seen());
    for &n in acc.class_counts() {
        e.u64(n);
    }
    e.matrix(acc.gram());
    e.matrix(acc.proto_sums());
    e.finish()
}

pub fn save_accumulator(acc: &StatAccumulator, path: &Path) -> Result<()> {
    write_bytes(path, &encode_accumulator(acc))
}

pub fn load_accumulator(path: &Path) -> Result<StatAccumulator> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut d = open(path, &bytes, KIND_ACCUMULATOR)?;
    let dim = d.u32()? as usize;
    let classes = d.u32()? as usize;
    let k = d.u32()? as usize;
    let seen = d.u64()?;
    let counts = (0..classes).map(|_| d.u64()).collect::<Result<Vec<_>>>()?;
    let gram = d.matrix(dim, dim)?;
    let protos = d.matrix(classes, dim)?;
    d.end()?;
    StatAccumulator::from_parts(gram, protos, counts, k, seen)
}

/// Restores an accumulator and checks it against the running configuration.
pub fn load_accumulator_expecting(
    path: &Path,
    dim: usize,
    num_classes: usize,
    k: usize,
) -> Result<StatAccumulator> {
    let acc = load_accumulator(path)?;
    if acc.dim() != dim || acc.num_classes() != num_classes || acc.k() != k {
        return Err(Error::Shape(format!(
            "checkpoint holds (dim {}, C {}, k {}), configuration expects (dim {dim}, C {num_classes}, k {k})",
            acc.dim(),
            acc.num_classes(),
            acc.k()
        )));
    }
    Ok(acc)
}

pub fn encode_classifier(clf: &RidgeClassifier) -> Vec<u8> {
    let mut e = Encoder::new(KIND_RIDGE);
    e.u32(clf.dim() as u32);
    e.u32(clf.num_classes() as u32);
    e.f64(clf.lambda());
    e.u32(match clf.solve_method() {
        SolveMethod::FactorizedSolve => 0,
        SolveMethod::PseudoInverse => 1,
    });
    e.matrix(clf.weights());
    e.finish()
}

pub fn save_classifier(clf: &RidgeClassifier, path: &Path) -> Result<()> {
    write_bytes(path, &encode_classifier(clf))
}

pub fn load_classifier(path: &Path) -> Result<RidgeClassifier> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut d = open(path, &bytes, KIND_RIDGE)?;
    let dim = d.u32()? as usize;
    let classes = d.u32()? as usize;
    let lambda = d.f64()?;
    let method = match d.u32()? {
        0 => SolveMethod::FactorizedSolve,
        1 => SolveMethod::PseudoInverse,
        other => {
            return Err(Error::Format {
                path: path.to_path_buf(),
                reason: format!("unknown solve method tag {other}"),
            })
        }
    };
    let weights = d.matrix(classes, dim)?;
    d.end()?;
    if dim == 0 || classes == 0 || !(lambda >= 0.0) {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: "classifier checkpoint has an empty shape or negative lambda".into(),
        });
    }
    Ok(RidgeClassifier::from_parts(weights, lambda, method))
}
