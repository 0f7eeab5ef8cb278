//! The `LAYF` on-disk format for multi-layer feature streams.
//!
//! Layout (all integers and floats little-endian, no padding):
//!
//! ```text
//! header:  magic "LAYF" | version u32 = 1 | L u32 | d_1..d_L u32
//!          | sample_count u64 | class_count u32 | dtype u32 (0 = f32, 1 = f64)
//! record:  label u32 | task_id u32 | layer 1 values | ... | layer L values
//! ```
//!
//! The header is `28 + 4·L` bytes. A sibling JSON manifest at `<path>.json`
//! carries the [`StreamManifest`] fields, the dtype, the sample count, and a
//! 64-bit FNV-1a checksum of every byte after the header.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{validate_sample, LayerFeatureSample, StreamManifest, TaskStream};

pub const MAGIC: [u8; 4] = *b"LAYF";
pub const FORMAT_VERSION: u32 = 1;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Incremental 64-bit FNV-1a.
#[derive(Debug, Clone, Copy)]
pub struct Fnv1a64(u64);

impl Default for Fnv1a64 {
    fn default() -> Self {
        Self(FNV_OFFSET)
    }
}

impl Fnv1a64 {
    pub fn update(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(FNV_PRIME);
        }
    }

    pub fn finish(&self) -> u64 {
        self.0
    }

    pub fn hash(bytes: &[u8]) -> u64 {
        let mut h = Self::default();
        h.update(bytes);
        h.finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    #[default]
    F32,
    F64,
}

impl Dtype {
    pub fn tag(self) -> u32 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        match tag {
            0 => Some(Dtype::F32),
            1 => Some(Dtype::F64),
            _ => None,
        }
    }

    pub fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureFileHeader {
    pub version: u32,
    pub layer_dims: Vec<u32>,
    pub sample_count: u64,
    pub class_count: u32,
    pub dtype: Dtype,
}

impl FeatureFileHeader {
    pub fn encoded_len(num_layers: usize) -> u64 {
        28 + 4 * num_layers as u64
    }

    pub fn len(&self) -> u64 {
        Self::encoded_len(self.layer_dims.len())
    }

    pub fn record_len(&self) -> u64 {
        8 + self.dtype.width() as u64 * self.layer_dims.iter().map(|&d| u64::from(d)).sum::<u64>()
    }

    pub fn expected_file_len(&self) -> u64 {
        self.len() + self.sample_count * self.record_len()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.len() as usize);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.extend_from_slice(&(self.layer_dims.len() as u32).to_le_bytes());
        for d in &self.layer_dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        out.extend_from_slice(&self.sample_count.to_le_bytes());
        out.extend_from_slice(&self.class_count.to_le_bytes());
        out.extend_from_slice(&self.dtype.tag().to_le_bytes());
        out
    }

    /// Reads and checks the header from the start of `r`. `file_len` is used
    /// to tell truncation apart from a malformed header.
    pub fn decode<R: Read>(r: &mut R, path: &Path, file_len: u64) -> Result<Self> {
        let truncated = |offset: u64| Error::Corruption {
            path: path.to_path_buf(),
            offset,
            reason: "file ends inside the header".into(),
        };
        let mut word = [0u8; 4];
        if file_len < 4 {
            return Err(truncated(file_len));
        }
        read_exact(r, &mut word, path)?;
        if word != MAGIC {
            return Err(Error::Format {
                path: path.to_path_buf(),
                reason: format!("bad magic {:?}, expected \"LAYF\"", String::from_utf8_lossy(&word)),
            });
        }
        if file_len < 12 {
            return Err(truncated(file_len));
        }
        read_exact(r, &mut word, path)?;
        let version = u32::from_le_bytes(word);
        if version > FORMAT_VERSION || version == 0 {
            return Err(Error::UnsupportedVersion {
                path: path.to_path_buf(),
                version,
            });
        }
        read_exact(r, &mut word, path)?;
        let num_layers = u32::from_le_bytes(word) as usize;
        if num_layers == 0 {
            return Err(Error::Format {
                path: path.to_path_buf(),
                reason: "header declares zero layers".into(),
            });
        }
        let header_len = Self::encoded_len(num_layers);
        if file_len < header_len {
            return Err(truncated(file_len));
        }
        let mut layer_dims = Vec::with_capacity(num_layers);
        for _ in 0..num_layers {
            read_exact(r, &mut word, path)?;
            layer_dims.push(u32::from_le_bytes(word));
        }
        let mut long = [0u8; 8];
        read_exact(r, &mut long, path)?;
        let sample_count = u64::from_le_bytes(long);
        read_exact(r, &mut word, path)?;
        let class_count = u32::from_le_bytes(word);
        read_exact(r, &mut word, path)?;
        let tag = u32::from_le_bytes(word);
        let dtype = Dtype::from_tag(tag).ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            reason: format!("unknown dtype tag {tag}"),
        })?;
        Ok(Self {
            version,
            layer_dims,
            sample_count,
            class_count,
            dtype,
        })
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], path: &Path) -> Result<()> {
    r.read_exact(buf).map_err(|e| Error::io(path, e))
}

/// Contents of the sibling `<path>.json` manifest file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    #[serde(flatten)]
    pub manifest: StreamManifest,
    pub dtype: Dtype,
    pub sample_count: u64,
    /// Lower-case hex of the FNV-1a 64 hash of the payload.
    pub payload_fnv1a64: String,
}

pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Where the test split of the stream stored at `path` lives:
/// `x.layf` pairs with `x.test.layf`.
pub fn test_split_path(path: &Path) -> PathBuf {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let test_name = match name.strip_suffix(".layf") {
        Some(stem) => format!("{stem}.test.layf"),
        None => format!("{name}.test"),
    };
    path.with_file_name(test_name)
}

fn encode_record(
    sample: &LayerFeatureSample,
    dtype: Dtype,
    buf: &mut Vec<u8>,
) -> Result<()> {
    buf.clear();
    buf.extend_from_slice(&(sample.label as u32).to_le_bytes());
    buf.extend_from_slice(&(sample.task_id as u32).to_le_bytes());
    for (l, layer) in sample.layer_features.iter().enumerate() {
        for (i, &v) in layer.iter().enumerate() {
            match dtype {
                Dtype::F32 => {
                    let narrow = v as f32;
                    if !narrow.is_finite() {
                        return Err(Error::Contract(format!(
                            "layer {} index {i} value {v} does not fit in f32",
                            l + 1
                        )));
                    }
                    buf.extend_from_slice(&narrow.to_le_bytes());
                }
                Dtype::F64 => buf.extend_from_slice(&v.to_le_bytes()),
            }
        }
    }
    Ok(())
}

/// Writes `samples` and the sibling manifest. Every sample is checked
/// against `manifest` before any byte is written.
pub fn write_stream<'a, I>(samples: I, manifest: &StreamManifest, path: &Path, dtype: Dtype) -> Result<()>
where
    I: IntoIterator<Item = &'a LayerFeatureSample>,
    I::IntoIter: Clone,
{
    manifest.validate()?;
    let samples = samples.into_iter();
    let mut per_task = vec![0usize; manifest.num_tasks()];
    let mut scratch = Vec::new();
    for s in samples.clone() {
        validate_sample(s, manifest)?;
        encode_record(s, dtype, &mut scratch)?;
        per_task[s.task_id] += 1;
    }
    if per_task != manifest.task_sizes {
        return Err(Error::Contract(format!(
            "per-task sample counts {per_task:?} disagree with manifest task sizes {:?}",
            manifest.task_sizes
        )));
    }
    let header = FeatureFileHeader {
        version: FORMAT_VERSION,
        layer_dims: manifest.layer_dims.iter().map(|&d| d as u32).collect(),
        sample_count: manifest.total_samples() as u64,
        class_count: manifest.num_classes as u32,
        dtype,
    };

    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&header.encode()).map_err(|e| Error::io(path, e))?;
    let mut hash = Fnv1a64::default();
    for s in samples {
        encode_record(s, dtype, &mut scratch)?;
        hash.update(&scratch);
        w.write_all(&scratch).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;

    let mf = ManifestFile {
        manifest: manifest.clone(),
        dtype,
        sample_count: header.sample_count,
        payload_fnv1a64: format!("{:016x}", hash.finish()),
    };
    let mpath = manifest_path(path);
    let json = serde_json::to_string_pretty(&mf).map_err(|e| Error::Json {
        path: mpath.clone(),
        source: e,
    })?;
    std::fs::write(&mpath, json + "\n").map_err(|e| Error::io(&mpath, e))
}

pub fn read_manifest_file(path: &Path) -> Result<ManifestFile> {
    let mpath = manifest_path(path);
    let text = std::fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json { path: mpath, source: e })
}

/// Streaming reader over a validated `LAYF` file. Holds one record in memory.
pub struct StreamReader {
    path: PathBuf,
    reader: BufReader<File>,
    header: FeatureFileHeader,
    manifest: StreamManifest,
    remaining: u64,
    offset: u64,
    record: Vec<u8>,
}

impl fmt::Debug for StreamReader {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StreamReader")
            .field("path", &self.path)
            .field("header", &self.header)
            .field("remaining", &self.remaining)
            .finish()
    }
}

impl StreamReader {
    /// Opens `path`, checking magic, version, file length, manifest
    /// agreement and the payload checksum before any record is yielded.
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let file_len = file.metadata().map_err(|e| Error::io(path, e))?.len();
        let mut reader = BufReader::new(file);
        let header = FeatureFileHeader::decode(&mut reader, path, file_len)?;

        let expected = header.expected_file_len();
        if file_len != expected {
            let complete = (file_len.saturating_sub(header.len())) / header.record_len();
            let offset = header.len() + complete * header.record_len();
            let reason = if file_len < expected {
                format!(
                    "file is {file_len} bytes, header declares {expected}; last complete record ends at this offset"
                )
            } else {
                format!("file is {file_len} bytes, header declares {expected}; trailing bytes")
            };
            return Err(Error::Corruption {
                path: path.to_path_buf(),
                offset: if file_len < expected { offset } else { expected },
                reason,
            });
        }

        let mf = read_manifest_file(path)?;
        let manifest = mf.manifest;
        manifest.validate()?;
        let mismatch = |what: &str| Error::Format {
            path: path.to_path_buf(),
            reason: format!("manifest disagrees with header on {what}"),
        };
        if manifest.layer_dims.iter().map(|&d| d as u32).collect::<Vec<_>>() != header.layer_dims {
            return Err(mismatch("layer dims"));
        }
        if manifest.num_classes as u64 != u64::from(header.class_count) {
            return Err(mismatch("class count"));
        }
        if manifest.total_samples() as u64 != header.sample_count || mf.sample_count != header.sample_count {
            return Err(mismatch("sample count"));
        }
        if mf.dtype != header.dtype {
            return Err(mismatch("dtype"));
        }

        let stored = u64::from_str_radix(&mf.payload_fnv1a64, 16).map_err(|_| Error::Format {
            path: manifest_path(path),
            reason: format!("checksum {:?} is not 64-bit hex", mf.payload_fnv1a64),
        })?;
        let mut hash = Fnv1a64::default();
        let mut buf = vec![0u8; 64 * 1024];
        loop {
            let n = reader.read(&mut buf).map_err(|e| Error::io(path, e))?;
            if n == 0 {
                break;
            }
            hash.update(&buf[..n]);
        }
        if hash.finish() != stored {
            return Err(Error::Corruption {
                path: path.to_path_buf(),
                offset: header.len(),
                reason: format!(
                    "payload checksum {:016x} does not match manifest {:016x}",
                    hash.finish(),
                    stored
                ),
            });
        }
        reader
            .seek(SeekFrom::Start(header.len()))
            .map_err(|e| Error::io(path, e))?;

        Ok(Self {
            path: path.to_path_buf(),
            reader,
            remaining: header.sample_count,
            offset: header.len(),
            record: vec![0u8; header.record_len() as usize],
            header,
            manifest,
        })
    }

    pub fn header(&self) -> &FeatureFileHeader {
        &self.header
    }

    pub fn manifest(&self) -> &StreamManifest {
        &self.manifest
    }

    fn next_record(&mut self) -> Result<LayerFeatureSample> {
        if let Err(e) = self.reader.read_exact(&mut self.record) {
            self.remaining = 0;
            return Err(match e.kind() {
                std::io::ErrorKind::UnexpectedEof => Error::Corruption {
                    path: self.path.clone(),
                    offset: self.offset,
                    reason: "file ends inside a record".into(),
                },
                _ => Error::io(&self.path, e),
            });
        }
        let rec = &self.record;
        let label = u32::from_le_bytes(rec[0..4].try_into().unwrap()) as usize;
        let task_id = u32::from_le_bytes(rec[4..8].try_into().unwrap()) as usize;
        let width = self.header.dtype.width();
        let mut pos = 8;
        let layer_features = self
            .header
            .layer_dims
            .iter()
            .map(|&d| {
                let layer = (0..d as usize)
                    .map(|i| {
                        let at = pos + i * width;
                        match self.header.dtype {
                            Dtype::F32 => f64::from(f32::from_le_bytes(rec[at..at + 4].try_into().unwrap())),
                            Dtype::F64 => f64::from_le_bytes(rec[at..at + 8].try_into().unwrap()),
                        }
                    })
                    .collect();
                pos += d as usize * width;
                layer
            })
            .collect();
        let sample = LayerFeatureSample::new(layer_features, label, task_id);
        validate_sample(&sample, &self.manifest).map_err(|v| Error::Corruption {
            path: self.path.clone(),
            offset: self.offset,
            reason: v.to_string(),
        })?;
        self.offset += self.record.len() as u64;
        self.remaining -= 1;
        Ok(sample)
    }
}

impl Iterator for StreamReader {
    type Item = Result<LayerFeatureSample>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.remaining == 0 {
            return None;
        }
        let item = self.next_record();
        if item.is_err() {
            self.remaining = 0;
        }
        Some(item)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.remaining as usize;
        (0, Some(n))
    }
}

/// Opens a stream for iteration, returning its manifest alongside.
pub fn read_stream(path: &Path) -> Result<(StreamManifest, StreamReader)> {
    let reader = StreamReader::open(path)?;
    Ok((reader.manifest().clone(), reader))
}

pub fn read_all(path: &Path) -> Result<(StreamManifest, Vec<LayerFeatureSample>)> {
    let (manifest, reader) = read_stream(path)?;
    let samples = reader.collect::<Result<Vec<_>>>()?;
    Ok((manifest, samples))
}

/// Writes the train split to `path` and the test split to
/// [`test_split_path`]`(path)`.
pub fn write_task_stream(stream: &TaskStream, path: &Path, dtype: Dtype) -> Result<()> {
    write_stream(stream.train.iter().flatten(), &stream.manifest, path, dtype)?;
    write_stream(
        stream.test.iter().flatten(),
        &stream.test_manifest(),
        &test_split_path(path),
        dtype,
    )
}

/// Loads a train split and its test split, checking that they share a layout.
pub fn load_task_stream(train_path: &Path, test_path: Option<&Path>) -> Result<TaskStream> {
    let test_path = test_path.map(Path::to_path_buf).unwrap_or_else(|| test_split_path(train_path));
    let (manifest, train) = read_all(train_path)?;
    let (test_manifest, test) = read_all(&test_path)?;
    if !manifest.same_layout(&test_manifest) {
        return Err(Error::Format {
            path: test_path,
            reason: "test split layout differs from the training split".into(),
        });
    }
    TaskStream::from_samples(manifest, train, test)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSummary {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub l2_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InspectReport {
    pub path: PathBuf,
    pub header: FeatureFileHeader,
    pub manifest: StreamManifest,
    pub payload_fnv1a64: String,
    pub first_record: Option<(usize, usize, Vec<LayerSummary>)>,
}

/// Header and first-record diagnostics for a validated file.
pub fn inspect(path: &Path) -> Result<InspectReport> {
    let mf = read_manifest_file(path)?;
    let mut reader = StreamReader::open(path)?;
    let first_record = match reader.next() {
        Some(s) => {
            let s = s?;
            let layers = s
                .layer_features
                .iter()
                .map(|v| LayerSummary {
                    min: v.iter().copied().fold(f64::INFINITY, f64::min),
                    max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    mean: v.iter().sum::<f64>() / v.len() as f64,
                    l2_norm: v.iter().map(|x| x * x).sum::<f64>().sqrt(),
                })
                .collect();
            Some((s.label, s.task_id, layers))
        }
        None => None,
    };
    Ok(InspectReport {
        path: path.to_path_buf(),
        header: reader.header().clone(),
        manifest: reader.manifest().clone(),
        payload_fnv1a64: mf.payload_fnv1a64,
        first_record,
    })
}

impl fmt::Display for InspectReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let h = &self.header;
        writeln!(f, "file          {}", self.path.display())?;
        writeln!(f, "version       {}", h.version)?;
        writeln!(f, "layers        {}", h.layer_dims.len())?;
        writeln!(f, "dims          {:?}", h.layer_dims)?;
        writeln!(f, "samples       {}", h.sample_count)?;
        writeln!(f, "classes       {}", h.class_count)?;
        writeln!(f, "dtype         {:?}", h.dtype)?;
        writeln!(f, "header bytes  {}", h.len())?;
        writeln!(f, "record bytes  {}", h.record_len())?;
        writeln!(f, "tasks         {:?}", self.manifest.task_sizes)?;
        writeln!(f, "source        {}", self.manifest.source)?;
        writeln!(f, "fnv1a64       {}", self.payload_fnv1a64)?;
        match &self.first_record {
            None => writeln!(f, "first record  (none)"),
            Some((label, task, layers)) => {
                writeln!(f, "first record  label={label} task={task}")?;
                for (l, s) in layers.iter().enumerate() {
                    writeln!(
                        f,
                        "  layer {:>3}  min={:>10.4} max={:>10.4} mean={:>10.4} l2={:>10.4}",
                        l + 1,
                        s.min,
                        s.max,
                        s.mean,
                        s.l2_norm
                    )?;
                }
                Ok(())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(Fnv1a64::hash(b""), 0xcbf29ce484222325);
        assert_eq!(Fnv1a64::hash(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(Fnv1a64::hash(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn header_layout() {
        let h = FeatureFileHeader {
            version: 1,
            layer_dims: vec![3, 2],
            sample_count: 1,
            class_count: 4,
            dtype: Dtype::F32,
        };
        let bytes = h.encode();
        assert_eq!(bytes.len() as u64, h.len());
        assert_eq!(h.len(), 36);
        assert_eq!(&bytes[..4], b"LAYF");
        assert_eq!(h.record_len(), 28);
        let back = FeatureFileHeader::decode(&mut bytes.as_slice(), Path::new("x"), 64).unwrap();
        assert_eq!(back, h);
    }

    #[test]
    fn test_split_naming() {
        assert_eq!(test_split_path(Path::new("/a/s.layf")), PathBuf::from("/a/s.test.layf"));
        assert_eq!(test_split_path(Path::new("s.bin")), PathBuf::from("s.bin.test"));
        assert_eq!(manifest_path(Path::new("/a/s.layf")), PathBuf::from("/a/s.layf.json"));
    }
}
