use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    copy_sidecars, merge_checkpoint, relative_entry_dir, MergeOptions, SidecarSource, SweepError,
    SweepPlan,
};
use crate::merge::{MergeMethod, MergeRecipe};
use crate::store::{content_digest, open_checkpoint, Checkpoint, Role};

pub const MANIFEST_FILE_NAME: &str = "sweep_manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryStatus {
    Pending,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub method: MergeMethod,
    pub strength: f64,
    /// Relative to the sweep's output root.
    pub output_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tensor_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_digest: Option<String>,
    pub status: EntryStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepManifest {
    pub toolkit_version: String,
    pub plan_digest: String,
    pub entries: Vec<ManifestEntry>,
}

impl SweepManifest {
    fn fresh(plan: &SweepPlan) -> Self {
        SweepManifest {
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            plan_digest: plan.digest(),
            entries: plan
                .recipes()
                .iter()
                .map(|r| ManifestEntry {
                    method: r.method,
                    strength: r.strength,
                    output_path: relative_entry_dir(r.method, r.strength),
                    tensor_count: None,
                    content_digest: None,
                    status: EntryStatus::Pending,
                    error: None,
                })
                .collect(),
        }
    }

    pub fn count(&self, status: EntryStatus) -> usize {
        self.entries.iter().filter(|e| e.status == status).count()
    }
}

#[derive(Debug, Clone, Default)]
pub struct ExecuteOptions {
    /// Stop after this many merges, leaving the rest pending.
    pub max_merges: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub manifest: SweepManifest,
    /// Merges performed by this run, including failed attempts.
    pub executed: usize,
    /// Done entries whose digest verified and were left alone.
    pub skipped: usize,
    pub failed: usize,
    /// Done entries whose output no longer matched the recorded digest;
    /// these were merged again.
    pub digest_mismatches: Vec<PathBuf>,
    pub interrupted: bool,
}

/// Reads `<output_root>/sweep_manifest.json`.
pub fn load_manifest(output_root: &Path) -> Result<SweepManifest, SweepError> {
    let path = output_root.join(MANIFEST_FILE_NAME);
    let text = std::fs::read_to_string(&path).map_err(|e| SweepError::io(&path, e))?;
    serde_json::from_str(&text).map_err(|source| SweepError::Parse { path, source })
}

fn save_manifest(output_root: &Path, manifest: &SweepManifest) -> Result<(), SweepError> {
    let path = output_root.join(MANIFEST_FILE_NAME);
    let tmp = output_root.join(format!(".{MANIFEST_FILE_NAME}.tmp"));
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    let mut f = std::fs::File::create(&tmp).map_err(|e| SweepError::io(&tmp, e))?;
    f.write_all(text.as_bytes())
        .and_then(|_| f.sync_all())
        .map_err(|e| SweepError::io(&tmp, e))?;
    std::fs::rename(&tmp, &path).map_err(|e| SweepError::io(&path, e))
}

pub fn execute_sweep(plan: &SweepPlan) -> Result<SweepReport, SweepError> {
    execute_sweep_with(plan, &ExecuteOptions::default())
}

/// Runs every pending entry of `plan`, resuming from an existing manifest
/// in the output root. Entry failures are recorded and do not stop the
/// sweep.
pub fn execute_sweep_with(
    plan: &SweepPlan,
    opts: &ExecuteOptions,
) -> Result<SweepReport, SweepError> {
    let root = &plan.output_root;
    std::fs::create_dir_all(root).map_err(|e| SweepError::io(root, e))?;
    let mut manifest = if root.join(MANIFEST_FILE_NAME).exists() {
        let m = load_manifest(root)?;
        let expected = plan.digest();
        if m.plan_digest != expected {
            return Err(SweepError::PlanMismatch {
                path: root.clone(),
                expected,
                found: m.plan_digest,
            });
        }
        m
    } else {
        SweepManifest::fresh(plan)
    };
    save_manifest(root, &manifest)?;

    let direct = open_checkpoint(&plan.parents.direct, Role::Direct)?;
    let think = open_checkpoint(&plan.parents.think, Role::Thinking)?;
    let base = plan
        .parents
        .base
        .as_ref()
        .map(|p| open_checkpoint(p, Role::Base))
        .transpose()?;
    let sidecar_dir = match plan.sidecars {
        SidecarSource::Think => Some(think.dir().to_path_buf()),
        SidecarSource::Direct => Some(direct.dir().to_path_buf()),
        SidecarSource::None => None,
    };
    let merge_opts = MergeOptions {
        dtype_policy: plan.dtype_policy,
        shard_limit_bytes: plan.shard_limit_bytes,
        workers: plan.workers,
    };

    let mut report = SweepReport {
        manifest: manifest.clone(),
        executed: 0,
        skipped: 0,
        failed: 0,
        digest_mismatches: Vec::new(),
        interrupted: false,
    };
    for (i, recipe) in plan.recipes().into_iter().enumerate() {
        let entry = &mut manifest.entries[i];
        let out_dir = root.join(&entry.output_path);
        if entry.status == EntryStatus::Done {
            let recorded = entry.content_digest.as_deref();
            match content_digest(&out_dir) {
                Ok(d) if Some(d.as_str()) == recorded => {
                    report.skipped += 1;
                    continue;
                }
                _ => {
                    log::warn!(
                        "{} changed since it was written; merging again",
                        out_dir.display()
                    );
                    report.digest_mismatches.push(out_dir.clone());
                }
            }
        }
        if opts.max_merges.is_some_and(|n| report.executed >= n) {
            report.interrupted = true;
            break;
        }
        report.executed += 1;
        log::info!("merging {} at {:.4}", recipe.method, recipe.strength);
        let ctx = Parents {
            direct: &direct,
            think: &think,
            base: base.as_ref(),
            sidecar_dir: sidecar_dir.as_deref(),
        };
        match run_entry(&ctx, &recipe, &out_dir, &merge_opts) {
            Ok((count, digest)) => {
                entry.status = EntryStatus::Done;
                entry.tensor_count = Some(count);
                entry.content_digest = Some(digest);
                entry.error = None;
            }
            Err(e) => {
                log::error!("{} at {:.4} failed: {e}", recipe.method, recipe.strength);
                report.failed += 1;
                entry.status = EntryStatus::Failed;
                entry.tensor_count = None;
                entry.content_digest = None;
                entry.error = Some(e.to_string());
            }
        }
        save_manifest(root, &manifest)?;
    }
    report.manifest = manifest;
    Ok(report)
}

struct Parents<'a> {
    direct: &'a Checkpoint,
    think: &'a Checkpoint,
    base: Option<&'a Checkpoint>,
    sidecar_dir: Option<&'a Path>,
}

fn run_entry(
    p: &Parents<'_>,
    recipe: &MergeRecipe,
    out_dir: &Path,
    opts: &MergeOptions,
) -> Result<(usize, String), SweepError> {
    let out = merge_checkpoint(p.direct, p.think, p.base, recipe, out_dir, opts)?;
    if let Some(dir) = p.sidecar_dir {
        copy_sidecars(dir, out_dir)?;
    }
    Ok((out.checkpoint.tensors().len(), content_digest(out_dir)?))
}
