use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::Read;
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::de::{Deserialize, Deserializer, MapAccess, Visitor};

use super::{HeaderEntry, Role, ShardIndex, StoreError, TensorBuffer, TensorMeta, INDEX_FILE_NAME};
use crate::store::DType;

const MAX_HEADER_LEN: u64 = 100 * 1024 * 1024;

#[derive(Debug, Clone)]
struct ShardInfo {
    data_start: u64,
}

/// An opened checkpoint. Only headers are parsed on open; tensor payloads
/// are read on demand by [`Checkpoint::load_tensor`], which is safe to call
/// from several threads at once.
#[derive(Debug)]
pub struct Checkpoint {
    path: PathBuf,
    dir: PathBuf,
    role: Role,
    tensors: BTreeMap<String, TensorMeta>,
    shards: BTreeMap<String, String>,
    shard_info: BTreeMap<String, ShardInfo>,
    metadata: BTreeMap<String, String>,
    param_count: u64,
    payload_bytes_read: AtomicU64,
}

impl Checkpoint {
    pub fn role(&self) -> Role {
        self.role
    }

    /// The path the checkpoint was opened from.
    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Directory holding the shard files.
    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn tensors(&self) -> &BTreeMap<String, TensorMeta> {
        &self.tensors
    }

    /// Tensor names in sorted order.
    pub fn tensor_names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn meta(&self, name: &str) -> Option<&TensorMeta> {
        self.tensors.get(name)
    }

    /// Tensor name to shard file name.
    pub fn shards(&self) -> &BTreeMap<String, String> {
        &self.shards
    }

    /// Distinct shard file names.
    pub fn shard_files(&self) -> impl Iterator<Item = &str> {
        self.shard_info.keys().map(String::as_str)
    }

    /// `__metadata__` of the first shard.
    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    pub fn param_count(&self) -> u64 {
        self.param_count
    }

    /// Total payload bytes read through this handle so far.
    pub fn payload_bytes_read(&self) -> u64 {
        self.payload_bytes_read.load(Ordering::Relaxed)
    }

    /// Byte size of the largest tensor after widening to F32.
    pub fn largest_tensor_f32_bytes(&self) -> u64 {
        self.tensors
            .values()
            .map(|m| m.numel() as u64 * 4)
            .max()
            .unwrap_or(0)
    }

    /// Reads and decodes one tensor.
    pub fn load_tensor(&self, name: &str) -> Result<TensorBuffer, StoreError> {
        let meta = self
            .tensors
            .get(name)
            .ok_or_else(|| StoreError::UnknownTensor(name.to_string()))?;
        let shard = &self.shards[name];
        let info = &self.shard_info[shard];
        let path = self.dir.join(shard);
        let file = File::open(&path).map_err(|e| StoreError::io(&path, e))?;
        let mut bytes = vec![0u8; meta.byte_len() as usize];
        file.read_exact_at(&mut bytes, info.data_start + meta.byte_range.start)
            .map_err(|e| StoreError::io(&path, e))?;
        self.payload_bytes_read
            .fetch_add(bytes.len() as u64, Ordering::Relaxed);
        let values = meta.dtype.decode(&bytes);
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(StoreError::NonFinite {
                name: name.to_string(),
                index,
            });
        }
        Ok(TensorBuffer {
            meta: meta.clone(),
            values,
        })
    }
}

/// Free-function form of [`Checkpoint::load_tensor`].
pub fn load_tensor(ckpt: &Checkpoint, name: &str) -> Result<TensorBuffer, StoreError> {
    ckpt.load_tensor(name)
}

/// Opens a single container file, a shard index file, or a directory
/// holding either. No payload bytes are read.
pub fn open_checkpoint(path: impl AsRef<Path>, role: Role) -> Result<Checkpoint, StoreError> {
    let path = path.as_ref();
    let md = std::fs::metadata(path).map_err(|e| StoreError::io(path, e))?;
    if md.is_dir() {
        let (indexes, containers) = scan_dir(path)?;
        if !indexes.is_empty() {
            let index = if indexes.len() == 1 {
                indexes[0].clone()
            } else if indexes.iter().any(|p| p.ends_with(INDEX_FILE_NAME)) {
                path.join(INDEX_FILE_NAME)
            } else {
                return Err(StoreError::InconsistentIndex(format!(
                    "{} holds several shard index files",
                    path.display()
                )));
            };
            return open_indexed(path, &index, role);
        }
        match containers.as_slice() {
            [] => Err(StoreError::NotACheckpoint(path.to_path_buf())),
            [single] => open_single(path, single, role),
            _ => Err(StoreError::InconsistentIndex(format!(
                "{} holds several containers but no shard index",
                path.display()
            ))),
        }
    } else {
        let dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if name.ends_with(".index.json") {
            let mut ck = open_indexed(&dir, path, role)?;
            ck.path = path.to_path_buf();
            Ok(ck)
        } else {
            let mut ck = open_single(&dir, path, role)?;
            ck.path = path.to_path_buf();
            Ok(ck)
        }
    }
}

fn scan_dir(dir: &Path) -> Result<(Vec<PathBuf>, Vec<PathBuf>), StoreError> {
    let mut indexes = Vec::new();
    let mut containers = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| StoreError::io(dir, e))? {
        let entry = entry.map_err(|e| StoreError::io(dir, e))?;
        let p = entry.path();
        let Some(name) = p.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if name.ends_with(".safetensors.index.json") {
            indexes.push(p);
        } else if name.ends_with(".safetensors") && p.is_file() {
            containers.push(p);
        }
    }
    indexes.sort();
    containers.sort();
    Ok((indexes, containers))
}

fn open_single(dir: &Path, file: &Path, role: Role) -> Result<Checkpoint, StoreError> {
    let header = read_header(file)?;
    let shard_name = file
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| StoreError::NotACheckpoint(file.to_path_buf()))?
        .to_string();
    let mut ck = Checkpoint {
        path: dir.to_path_buf(),
        dir: dir.to_path_buf(),
        role,
        tensors: BTreeMap::new(),
        shards: BTreeMap::new(),
        shard_info: BTreeMap::new(),
        metadata: header.metadata.clone(),
        param_count: 0,
        payload_bytes_read: AtomicU64::new(0),
    };
    ck.add_shard(&shard_name, header)?;
    Ok(ck)
}

fn open_indexed(dir: &Path, index_path: &Path, role: Role) -> Result<Checkpoint, StoreError> {
    let text = std::fs::read_to_string(index_path).map_err(|e| StoreError::io(index_path, e))?;
    let index: ShardIndex =
        serde_json::from_str(&text).map_err(|e| StoreError::MalformedHeader {
            path: index_path.to_path_buf(),
            reason: e.to_string(),
        })?;
    let mut files: Vec<&String> = index.weight_map.values().collect();
    files.sort();
    files.dedup();

    let mut ck = Checkpoint {
        path: dir.to_path_buf(),
        dir: dir.to_path_buf(),
        role,
        tensors: BTreeMap::new(),
        shards: BTreeMap::new(),
        shard_info: BTreeMap::new(),
        metadata: BTreeMap::new(),
        param_count: 0,
        payload_bytes_read: AtomicU64::new(0),
    };
    for (i, shard) in files.iter().enumerate() {
        let shard_path = dir.join(shard);
        if !shard_path.is_file() {
            return Err(StoreError::MissingShard(shard_path));
        }
        let header = read_header(&shard_path)?;
        if i == 0 {
            ck.metadata = header.metadata.clone();
        }
        ck.add_shard(shard, header)?;
    }
    for (name, shard) in &index.weight_map {
        match ck.shards.get(name) {
            Some(actual) if actual == shard => {}
            Some(actual) => {
                return Err(StoreError::InconsistentIndex(format!(
                    "{name} mapped to {shard} but stored in {actual}"
                )))
            }
            None => {
                return Err(StoreError::InconsistentIndex(format!(
                    "{name} mapped to {shard} but not stored there"
                )))
            }
        }
    }
    if let Some(extra) = ck
        .shards
        .keys()
        .find(|n| !index.weight_map.contains_key(*n))
    {
        return Err(StoreError::InconsistentIndex(format!(
            "{extra} is stored but absent from the weight map"
        )));
    }
    Ok(ck)
}

impl Checkpoint {
    fn add_shard(&mut self, shard: &str, header: ParsedHeader) -> Result<(), StoreError> {
        for meta in header.tensors {
            if self.tensors.contains_key(&meta.name) {
                return Err(StoreError::DuplicateTensor(meta.name));
            }
            self.param_count += meta.numel() as u64;
            self.shards.insert(meta.name.clone(), shard.to_string());
            self.tensors.insert(meta.name.clone(), meta);
        }
        self.shard_info.insert(
            shard.to_string(),
            ShardInfo {
                data_start: header.data_start,
            },
        );
        Ok(())
    }
}

pub(crate) struct ParsedHeader {
    pub tensors: Vec<TensorMeta>,
    pub metadata: BTreeMap<String, String>,
    pub data_start: u64,
}

/// Header object entries in file order, so duplicate keys stay visible.
struct OrderedEntries(Vec<(String, serde_json::Value)>);

impl<'de> Deserialize<'de> for OrderedEntries {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = OrderedEntries;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a JSON object")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Self::Value, A::Error> {
                let mut out = Vec::new();
                while let Some((k, v)) = map.next_entry::<String, serde_json::Value>()? {
                    out.push((k, v));
                }
                Ok(OrderedEntries(out))
            }
        }
        d.deserialize_map(V)
    }
}

pub(crate) fn read_header(path: &Path) -> Result<ParsedHeader, StoreError> {
    let mut file = File::open(path).map_err(|e| StoreError::io(path, e))?;
    let file_len = file.metadata().map_err(|e| StoreError::io(path, e))?.len();
    let malformed = |reason: String| StoreError::MalformedHeader {
        path: path.to_path_buf(),
        reason,
    };
    let mut len_bytes = [0u8; 8];
    file.read_exact(&mut len_bytes)
        .map_err(|_| malformed("file shorter than the 8-byte length prefix".into()))?;
    let header_len = u64::from_le_bytes(len_bytes);
    if header_len > MAX_HEADER_LEN || header_len > file_len - 8 {
        return Err(malformed(format!(
            "header length {header_len} out of range"
        )));
    }
    let mut header_bytes = vec![0u8; header_len as usize];
    file.read_exact(&mut header_bytes)
        .map_err(|e| StoreError::io(path, e))?;
    let data_start = 8 + header_len;
    let payload_len = file_len - data_start;
    let (tensors, metadata) = parse_header(&header_bytes, payload_len).map_err(|e| match e {
        HeaderProblem::Json(reason) => malformed(reason),
        HeaderProblem::Store(e) => e,
    })?;
    Ok(ParsedHeader {
        tensors,
        metadata,
        data_start,
    })
}

enum HeaderProblem {
    Json(String),
    Store(StoreError),
}

fn parse_header(
    bytes: &[u8],
    payload_len: u64,
) -> Result<(Vec<TensorMeta>, BTreeMap<String, String>), HeaderProblem> {
    let entries: OrderedEntries =
        serde_json::from_slice(bytes).map_err(|e| HeaderProblem::Json(e.to_string()))?;
    let mut seen = HashSet::new();
    let mut metadata = BTreeMap::new();
    let mut tensors = Vec::with_capacity(entries.0.len());
    for (name, value) in entries.0 {
        if !seen.insert(name.clone()) {
            return Err(HeaderProblem::Store(StoreError::DuplicateTensor(name)));
        }
        if name == "__metadata__" {
            let obj = value
                .as_object()
                .ok_or_else(|| HeaderProblem::Json("__metadata__ is not an object".into()))?;
            for (k, v) in obj {
                let s = match v {
                    serde_json::Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                metadata.insert(k.clone(), s);
            }
            continue;
        }
        let entry: HeaderEntry = serde_json::from_value(value)
            .map_err(|e| HeaderProblem::Json(format!("tensor {name}: {e}")))?;
        let dtype = DType::parse(&entry.dtype).ok_or_else(|| {
            HeaderProblem::Store(StoreError::UnsupportedDtype {
                name: name.clone(),
                dtype: entry.dtype.clone(),
            })
        })?;
        let [begin, end] = entry.data_offsets;
        let expected = super::numel(&entry.shape) as u64 * dtype.width() as u64;
        if end < begin || end - begin != expected {
            return Err(HeaderProblem::Store(StoreError::ByteLengthMismatch {
                name,
                begin,
                end,
                shape: entry.shape,
                width: dtype.width(),
            }));
        }
        if end > payload_len {
            return Err(HeaderProblem::Store(StoreError::OutOfBounds {
                name,
                begin,
                end,
                payload_len,
            }));
        }
        tensors.push(TensorMeta {
            name,
            dtype,
            shape: entry.shape,
            byte_range: begin..end,
        });
    }

    let mut order: Vec<&TensorMeta> = tensors.iter().filter(|m| m.byte_len() > 0).collect();
    order.sort_by_key(|m| (m.byte_range.start, m.byte_range.end));
    let mut reach: Option<&TensorMeta> = None;
    for m in order {
        if let Some(prev) = reach {
            if m.byte_range.start < prev.byte_range.end {
                return Err(HeaderProblem::Store(StoreError::OverlappingRanges {
                    first: prev.name.clone(),
                    second: m.name.clone(),
                }));
            }
        }
        if reach.is_none_or(|p| m.byte_range.end > p.byte_range.end) {
            reach = Some(m);
        }
    }
    Ok((tensors, metadata))
}
