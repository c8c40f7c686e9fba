use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::{
    open_checkpoint, Checkpoint, DType, HeaderEntry, Role, StoreError, TensorBuffer,
    INDEX_FILE_NAME, SINGLE_FILE_NAME,
};

#[derive(Debug, Clone)]
pub struct WriterOptions {
    /// Upper bound on the payload bytes of one shard.
    pub shard_limit_bytes: u64,
    /// Per-tensor storage dtype overrides.
    pub target_dtypes: BTreeMap<String, DType>,
    /// Storage dtype for tensors without an override; `None` keeps the
    /// buffer's own dtype.
    pub default_dtype: Option<DType>,
    /// Extra `__metadata__` pairs written into every shard.
    pub metadata: BTreeMap<String, String>,
}

impl Default for WriterOptions {
    fn default() -> Self {
        WriterOptions {
            shard_limit_bytes: 5 * 1024 * 1024 * 1024,
            target_dtypes: BTreeMap::new(),
            default_dtype: None,
            metadata: BTreeMap::new(),
        }
    }
}

struct PendingShard {
    payload_path: PathBuf,
    file: Option<BufWriter<File>>,
    entries: Vec<(String, HeaderEntry)>,
    bytes: u64,
}

/// Streaming checkpoint writer.
///
/// Payload bytes go straight to a temporary file per shard; headers are
/// assembled in [`CheckpointWriter::finish`] once the shard count is known.
/// Memory use is independent of the number of tensors written.
pub struct CheckpointWriter {
    out_dir: PathBuf,
    opts: WriterOptions,
    closed: Vec<PendingShard>,
    current: Option<PendingShard>,
    names: HashSet<String>,
    scratch: Vec<u8>,
}

impl CheckpointWriter {
    /// Creates `out_dir` if needed and removes any container or index files
    /// already in it.
    pub fn create(out_dir: impl AsRef<Path>, opts: WriterOptions) -> Result<Self, StoreError> {
        let out_dir = out_dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&out_dir).map_err(|e| StoreError::io(&out_dir, e))?;
        for entry in std::fs::read_dir(&out_dir).map_err(|e| StoreError::io(&out_dir, e))? {
            let p = entry.map_err(|e| StoreError::io(&out_dir, e))?.path();
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            if name.ends_with(".safetensors") || name.ends_with(".safetensors.index.json") {
                std::fs::remove_file(&p).map_err(|e| StoreError::io(&p, e))?;
            }
        }
        Ok(CheckpointWriter {
            out_dir,
            opts,
            closed: Vec::new(),
            current: None,
            names: HashSet::new(),
            scratch: Vec::new(),
        })
    }

    pub fn push(&mut self, tensor: &TensorBuffer) -> Result<(), StoreError> {
        let name = tensor.name().to_string();
        if !self.names.insert(name.clone()) {
            return Err(StoreError::DuplicateTensor(name));
        }
        if let Some(index) = tensor.values.iter().position(|v| !v.is_finite()) {
            return Err(StoreError::NonFinite { name, index });
        }
        let dtype = self
            .opts
            .target_dtypes
            .get(&name)
            .copied()
            .or(self.opts.default_dtype)
            .unwrap_or(tensor.meta.dtype);
        let bytes = (tensor.values.len() * dtype.width()) as u64;
        if bytes > self.opts.shard_limit_bytes {
            return Err(StoreError::TensorExceedsShardLimit {
                name,
                bytes,
                limit: self.opts.shard_limit_bytes,
            });
        }
        self.scratch.clear();
        dtype
            .encode_into(&tensor.values, &mut self.scratch)
            .map_err(|index| StoreError::NarrowingOverflow {
                name: name.clone(),
                index,
                value: tensor.values[index],
                dtype,
            })?;

        let needs_new = match &self.current {
            None => true,
            Some(s) => s.bytes > 0 && s.bytes + bytes > self.opts.shard_limit_bytes,
        };
        if needs_new {
            self.close_current()?;
            let payload_path = self
                .out_dir
                .join(format!(".shard-{:05}.payload.tmp", self.closed.len() + 1));
            let file = File::create(&payload_path).map_err(|e| StoreError::io(&payload_path, e))?;
            self.current = Some(PendingShard {
                payload_path,
                file: Some(BufWriter::new(file)),
                entries: Vec::new(),
                bytes: 0,
            });
        }
        let shard = self.current.as_mut().expect("open shard");
        let begin = shard.bytes;
        shard
            .file
            .as_mut()
            .expect("open payload file")
            .write_all(&self.scratch)
            .map_err(|e| StoreError::io(&shard.payload_path, e))?;
        shard.bytes += bytes;
        shard.entries.push((
            name,
            HeaderEntry {
                dtype: dtype.as_str().to_string(),
                shape: tensor.shape().to_vec(),
                data_offsets: [begin, begin + bytes],
            },
        ));
        Ok(())
    }

    fn close_current(&mut self) -> Result<(), StoreError> {
        if let Some(mut shard) = self.current.take() {
            if let Some(mut f) = shard.file.take() {
                f.flush()
                    .map_err(|e| StoreError::io(&shard.payload_path, e))?;
            }
            self.closed.push(shard);
        }
        Ok(())
    }

    /// Writes headers, assembles the final container files, emits the shard
    /// index when more than one shard resulted, and reopens the output.
    pub fn finish(mut self) -> Result<Checkpoint, StoreError> {
        self.close_current()?;
        if self.closed.is_empty() {
            let payload_path = self.out_dir.join(".shard-00001.payload.tmp");
            File::create(&payload_path).map_err(|e| StoreError::io(&payload_path, e))?;
            self.closed.push(PendingShard {
                payload_path,
                file: None,
                entries: Vec::new(),
                bytes: 0,
            });
        }
        let count = self.closed.len();
        let mut weight_map = BTreeMap::new();
        let mut total_size = 0u64;
        for (i, shard) in self.closed.iter().enumerate() {
            let file_name = if count == 1 {
                SINGLE_FILE_NAME.to_string()
            } else {
                format!("model-{:05}-of-{:05}.safetensors", i + 1, count)
            };
            let header = build_header(&shard.entries, &self.opts.metadata);
            let final_path = self.out_dir.join(&file_name);
            let tmp_path = self.out_dir.join(format!(".{file_name}.tmp"));
            {
                let out = File::create(&tmp_path).map_err(|e| StoreError::io(&tmp_path, e))?;
                let mut out = BufWriter::new(out);
                let mut payload = File::open(&shard.payload_path)
                    .map_err(|e| StoreError::io(&shard.payload_path, e))?;
                out.write_all(&(header.len() as u64).to_le_bytes())
                    .and_then(|_| out.write_all(&header))
                    .and_then(|_| std::io::copy(&mut payload, &mut out).map(|_| ()))
                    .and_then(|_| out.flush())
                    .map_err(|e| StoreError::io(&tmp_path, e))?;
            }
            std::fs::rename(&tmp_path, &final_path).map_err(|e| StoreError::io(&final_path, e))?;
            std::fs::remove_file(&shard.payload_path)
                .map_err(|e| StoreError::io(&shard.payload_path, e))?;
            for (name, _) in &shard.entries {
                weight_map.insert(name.clone(), file_name.clone());
            }
            total_size += shard.bytes;
        }
        if count > 1 {
            let index = serde_json::json!({
                "metadata": { "total_size": total_size },
                "weight_map": weight_map,
            });
            let path = self.out_dir.join(INDEX_FILE_NAME);
            let text = serde_json::to_string_pretty(&index).expect("index serializes");
            std::fs::write(&path, text).map_err(|e| StoreError::io(&path, e))?;
        }
        open_checkpoint(&self.out_dir, Role::Merged)
    }
}

impl Drop for CheckpointWriter {
    fn drop(&mut self) {
        for shard in self.closed.iter().chain(self.current.iter()) {
            let _ = std::fs::remove_file(&shard.payload_path);
        }
    }
}

fn build_header(entries: &[(String, HeaderEntry)], metadata: &BTreeMap<String, String>) -> Vec<u8> {
    let mut map = serde_json::Map::new();
    let mut meta = serde_json::Map::new();
    meta.insert("format".into(), "pt".into());
    for (k, v) in metadata {
        meta.insert(k.clone(), v.clone().into());
    }
    map.insert("__metadata__".into(), meta.into());
    for (name, entry) in entries {
        map.insert(
            name.clone(),
            serde_json::to_value(entry).expect("header entry serializes"),
        );
    }
    let mut bytes = serde_json::to_vec(&map).expect("header serializes");
    while !bytes.len().is_multiple_of(8) {
        bytes.push(b' ');
    }
    bytes
}

/// Writes a stream of tensors as a (possibly sharded) checkpoint in
/// `out_dir` and returns the reopened result.
pub fn write_checkpoint<I>(
    tensors: I,
    out_dir: impl AsRef<Path>,
    opts: WriterOptions,
) -> Result<Checkpoint, StoreError>
where
    I: IntoIterator<Item = TensorBuffer>,
{
    let mut writer = CheckpointWriter::create(out_dir, opts)?;
    for t in tensors {
        writer.push(&t)?;
    }
    writer.finish()
}

/// SHA-256 content digest of a checkpoint: each container is hashed over
/// its header JSON and payload, and the per-shard digests are combined in
/// file-name order together with the shard index, if any.
pub fn content_digest(path: impl AsRef<Path>) -> Result<String, StoreError> {
    let path = path.as_ref();
    let mut files = Vec::new();
    let mut index = None;
    if path.is_dir() {
        for entry in std::fs::read_dir(path).map_err(|e| StoreError::io(path, e))? {
            let p = entry.map_err(|e| StoreError::io(path, e))?.path();
            let name = p
                .file_name()
                .and_then(|n| n.to_str())
                .unwrap_or("")
                .to_string();
            if name.ends_with(".safetensors") {
                files.push((name, p));
            } else if name.ends_with(".safetensors.index.json") {
                index = Some(p);
            }
        }
    } else {
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or("")
            .to_string();
        files.push((name, path.to_path_buf()));
    }
    if files.is_empty() {
        return Err(StoreError::NotACheckpoint(path.to_path_buf()));
    }
    files.sort();
    let mut combined = Sha256::new();
    let mut buf = vec![0u8; 1 << 20];
    for (name, p) in &files {
        let mut f = File::open(p).map_err(|e| StoreError::io(p, e))?;
        let mut prefix = [0u8; 8];
        f.read_exact(&mut prefix)
            .map_err(|e| StoreError::io(p, e))?;
        let mut shard = Sha256::new();
        loop {
            let n = f.read(&mut buf).map_err(|e| StoreError::io(p, e))?;
            if n == 0 {
                break;
            }
            shard.update(&buf[..n]);
        }
        combined.update(name.as_bytes());
        combined.update([0u8]);
        combined.update(shard.finalize());
    }
    if let Some(p) = index {
        let bytes = std::fs::read(&p).map_err(|e| StoreError::io(&p, e))?;
        combined.update(b"index\0");
        combined.update(&bytes);
    }
    Ok(hex::encode(combined.finalize()))
}
