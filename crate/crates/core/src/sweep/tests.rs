use std::path::Path;

use super::*;
use crate::store::{content_digest, open_checkpoint, write_checkpoint, Role};

fn write(dir: &Path, tensors: &[(&str, Vec<usize>, Vec<f32>)]) {
    let bufs = tensors
        .iter()
        .map(|(n, s, v)| TensorBuffer::new(*n, DType::F32, s.clone(), v.clone()).unwrap());
    write_checkpoint(bufs, dir, WriterOptions::default()).unwrap();
}

fn toy_parents(root: &Path) {
    write(
        &root.join("direct"),
        &[
            (
                "layer.0.weight",
                vec![2, 3],
                vec![0.1, -0.2, 0.3, 0.4, -0.5, 0.6],
            ),
            ("layer.1.bias", vec![3], vec![1.0, 2.0, -3.0]),
        ],
    );
    write(
        &root.join("think"),
        &[
            ("layer.1.bias", vec![3], vec![1.5, 1.0, -2.0]),
            (
                "layer.0.weight",
                vec![2, 3],
                vec![0.15, -0.1, 0.2, 0.45, -0.4, 0.7],
            ),
        ],
    );
    write(
        &root.join("base"),
        &[
            ("layer.0.weight", vec![2, 3], vec![0.0; 6]),
            ("layer.1.bias", vec![3], vec![1.0, 1.5, -2.5]),
        ],
    );
    std::fs::write(
        root.join("think/tokenizer_config.json"),
        b"{\"chat\":\"<think>\"}",
    )
    .unwrap();
    std::fs::write(
        root.join("direct/tokenizer_config.json"),
        b"{\"chat\":\"plain\"}",
    )
    .unwrap();
}

fn config(root: &Path, grid: GridSpec, methods: Vec<MethodSpec>) -> SweepConfig {
    SweepConfig {
        parents: ParentPaths {
            direct: root.join("direct"),
            think: root.join("think"),
            base: Some(root.join("base")),
        },
        output_root: root.join("out"),
        grid,
        methods,
        dtype_policy: DtypePolicy::ForceF32,
        sidecars: SidecarSource::Think,
        seed: 1,
        shard_limit_bytes: None,
        workers: Some(2),
    }
}

fn unit_range(step: f64) -> GridSpec {
    GridSpec::Range {
        start: 0.0,
        stop: 1.0,
        step,
    }
}

#[test]
fn grid_expansion() {
    assert_eq!(unit_range(0.1).expand().unwrap().len(), 11);
    let fine = GridSpec::Range {
        start: 0.6,
        stop: 0.7,
        step: 0.01,
    }
    .expand()
    .unwrap();
    let expected: Vec<f64> = (60..=70)
        .map(|i| format!("0.{i}").parse().unwrap())
        .collect();
    assert_eq!(fine, expected);
    assert!(GridSpec::List(vec![0.2, 0.1]).expand().is_err());
    assert!(GridSpec::List(vec![0.5, 0.5]).expand().is_err());
    assert!(GridSpec::List(vec![0.5, 1.2]).expand().is_err());
    assert!(GridSpec::List(vec![]).expand().is_err());
    assert!(unit_range(0.3).expand().is_err());
    assert!(unit_range(0.0).expand().is_err());
}

#[test]
fn plan_validation() {
    let tmp = tempfile::tempdir().unwrap();
    toy_parents(tmp.path());
    let cfg = config(
        tmp.path(),
        unit_range(0.1),
        vec![MethodSpec::Name(MergeMethod::WeightedAverage)],
    );
    let plan = plan_sweep(&cfg).unwrap();
    assert_eq!(plan.recipes().len(), 11);
    assert!(plan.recipes().iter().all(|r| r.seed == 1));

    let mut no_base = config(
        tmp.path(),
        unit_range(0.1),
        vec![MethodSpec::Name(MergeMethod::Dare)],
    );
    no_base.parents.base = None;
    assert!(matches!(
        plan_sweep(&no_base),
        Err(SweepError::BaseRequired {
            method: MergeMethod::Dare
        })
    ));

    let dup = config(
        tmp.path(),
        unit_range(0.5),
        vec![
            MethodSpec::Name(MergeMethod::Slerp),
            MethodSpec::Name(MergeMethod::Slerp),
        ],
    );
    assert!(matches!(
        plan_sweep(&dup),
        Err(SweepError::InvalidConfig(_))
    ));

    let mut missing = cfg.clone();
    missing.parents.think = tmp.path().join("nope");
    let err = plan_sweep(&missing).unwrap_err();
    assert!(matches!(err, SweepError::MissingParent(_)) && err.is_io());

    let bad_rate = config(
        tmp.path(),
        unit_range(0.5),
        vec![MethodSpec::Template(plan::MethodTemplate {
            method: MergeMethod::Dare,
            drop_rate: Some(1.0),
            top_k_fraction: None,
            svt_threshold_fraction: None,
            lore_iters: None,
            seed: None,
        })],
    );
    assert!(plan_sweep(&bad_rate).is_err());
}

#[test]
fn config_document_parses_with_relative_paths() {
    let tmp = tempfile::tempdir().unwrap();
    toy_parents(tmp.path());
    let text = r#"{
        "parents": {"direct": "direct", "think": "think", "base": "base"},
        "output_root": "out",
        "grid": {"start": 0.0, "stop": 1.0, "step": 0.25},
        "methods": ["slerp", {"method": "dare", "drop_rate": 0.5, "seed": 9}],
        "dtype_policy": "force_f32"
    }"#;
    std::fs::write(tmp.path().join("plan.json"), text).unwrap();
    let cfg = SweepConfig::load(tmp.path().join("plan.json")).unwrap();
    assert_eq!(cfg.output_root, tmp.path().join("out"));
    let plan = plan_sweep(&cfg).unwrap();
    assert_eq!(plan.recipes().len(), 10);
    assert_eq!(plan.methods[1].drop_rate, 0.5);
    assert_eq!(plan.methods[1].seed, 9);
    assert_eq!(plan.methods[0].drop_rate, crate::merge::DEFAULT_DROP_RATE);

    std::fs::write(
        tmp.path().join("bad.json"),
        r#"{"parents": {}, "bogus": 1}"#,
    )
    .unwrap();
    assert!(matches!(
        SweepConfig::load(tmp.path().join("bad.json")),
        Err(SweepError::Parse { .. })
    ));
}

#[test]
fn endpoints_reproduce_parents_bitwise() {
    let tmp = tempfile::tempdir().unwrap();
    toy_parents(tmp.path());
    let cfg = config(
        tmp.path(),
        GridSpec::List(vec![0.0, 1.0]),
        vec![MethodSpec::Name(MergeMethod::WeightedAverage)],
    );
    let report = execute_sweep(&plan_sweep(&cfg).unwrap()).unwrap();
    assert_eq!(report.executed, 2);
    assert_eq!(report.manifest.count(EntryStatus::Done), 2);
    let direct = open_checkpoint(tmp.path().join("direct"), Role::Direct).unwrap();
    let think = open_checkpoint(tmp.path().join("think"), Role::Thinking).unwrap();
    for (strength, parent) in [(0.0, &direct), (1.0, &think)] {
        let out = entry_dir(
            &tmp.path().join("out"),
            MergeMethod::WeightedAverage,
            strength,
        );
        let merged = open_checkpoint(&out, Role::Merged).unwrap();
        assert_eq!(merged.tensors().len(), 2);
        for name in parent.tensor_names() {
            let a = parent.load_tensor(name).unwrap();
            let b = merged.load_tensor(name).unwrap();
            assert_eq!(a.meta.shape, b.meta.shape);
            let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.values), bits(&b.values));
        }
        assert_eq!(
            std::fs::read(out.join("tokenizer_config.json")).unwrap(),
            b"{\"chat\":\"<think>\"}"
        );
    }
    assert!(tmp.path().join("out/weighted_average/0.0000").is_dir());
    assert!(tmp.path().join("out/weighted_average/1.0000").is_dir());
}

#[test]
fn interrupted_sweep_resumes_with_remaining_entries() {
    let tmp = tempfile::tempdir().unwrap();
    toy_parents(tmp.path());
    let cfg = config(
        tmp.path(),
        unit_range(0.1),
        vec![MethodSpec::Name(MergeMethod::Dare)],
    );
    let plan = plan_sweep(&cfg).unwrap();
    let first = execute_sweep_with(
        &plan,
        &ExecuteOptions {
            max_merges: Some(3),
        },
    )
    .unwrap();
    assert!(first.interrupted);
    assert_eq!(first.executed, 3);
    let on_disk = load_manifest(&plan.output_root).unwrap();
    assert_eq!(on_disk.count(EntryStatus::Done), 3);
    assert_eq!(on_disk.count(EntryStatus::Pending), 8);

    let second = execute_sweep(&plan).unwrap();
    assert_eq!((second.executed, second.skipped), (8, 3));
    let third = execute_sweep(&plan).unwrap();
    assert_eq!((third.executed, third.skipped), (0, 11));
    assert_eq!(second.manifest, third.manifest);
}

#[test]
fn tampered_output_is_merged_again() {
    let tmp = tempfile::tempdir().unwrap();
    toy_parents(tmp.path());
    let cfg = config(
        tmp.path(),
        GridSpec::List(vec![0.5]),
        vec![MethodSpec::Name(MergeMethod::Ties)],
    );
    let plan = plan_sweep(&cfg).unwrap();
    let first = execute_sweep(&plan).unwrap();
    let out = entry_dir(&plan.output_root, MergeMethod::Ties, 0.5);
    let file = out.join(crate::store::SINGLE_FILE_NAME);
    let mut bytes = std::fs::read(&file).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0x01;
    std::fs::write(&file, bytes).unwrap();
    let second = execute_sweep(&plan).unwrap();
    assert_eq!(second.executed, 1);
    assert_eq!(second.digest_mismatches, vec![out.clone()]);
    assert_eq!(second.manifest, first.manifest);
}

#[test]
fn changed_plan_is_rejected_on_resume() {
    let tmp = tempfile::tempdir().unwrap();
    toy_parents(tmp.path());
    let cfg = config(
        tmp.path(),
        GridSpec::List(vec![0.5]),
        vec![MethodSpec::Name(MergeMethod::Slerp)],
    );
    execute_sweep(&plan_sweep(&cfg).unwrap()).unwrap();
    let mut other = cfg.clone();
    other.seed = 2;
    assert!(matches!(
        execute_sweep(&plan_sweep(&other).unwrap()),
        Err(SweepError::PlanMismatch { .. })
    ));
    // the worker count does not change the outputs, so it is not part of the plan
    other.seed = 1;
    other.workers = Some(1);
    assert_eq!(
        execute_sweep(&plan_sweep(&other).unwrap()).unwrap().skipped,
        1
    );
}

#[test]
fn digests_ignore_parent_tensor_order() {
    let tmp = tempfile::tempdir().unwrap();
    toy_parents(tmp.path());
    // same tensors, written in the opposite order
    let alt = tmp.path().join("alt");
    std::fs::create_dir_all(&alt).unwrap();
    for (role, names) in [
        ("direct", ["layer.1.bias", "layer.0.weight"]),
        ("think", ["layer.0.weight", "layer.1.bias"]),
    ] {
        let ck = open_checkpoint(tmp.path().join(role), Role::Direct).unwrap();
        let bufs: Vec<_> = names.iter().map(|n| ck.load_tensor(n).unwrap()).collect();
        write_checkpoint(bufs, alt.join(role), WriterOptions::default()).unwrap();
    }
    let ck = open_checkpoint(tmp.path().join("base"), Role::Base).unwrap();
    let bufs: Vec<_> = ["layer.1.bias", "layer.0.weight"]
        .iter()
        .map(|n| ck.load_tensor(n).unwrap())
        .collect();
    write_checkpoint(bufs, alt.join("base"), WriterOptions::default()).unwrap();

    let methods = vec![
        MethodSpec::Name(MergeMethod::Dare),
        MethodSpec::Name(MergeMethod::Lore),
        MethodSpec::Name(MergeMethod::TopkReplace),
    ];
    let a =
        execute_sweep(&plan_sweep(&config(tmp.path(), unit_range(0.5), methods.clone())).unwrap())
            .unwrap();
    let mut cfg_b = config(&alt, unit_range(0.5), methods);
    cfg_b.workers = Some(1);
    let b = execute_sweep(&plan_sweep(&cfg_b).unwrap()).unwrap();
    let digests = |r: &SweepReport| {
        r.manifest
            .entries
            .iter()
            .map(|e| e.content_digest.clone().unwrap())
            .collect::<Vec<_>>()
    };
    assert_eq!(digests(&a), digests(&b));
    assert_eq!(a.manifest.count(EntryStatus::Done), 9);
}

#[test]
fn failed_entries_do_not_stop_the_sweep() {
    let tmp = tempfile::tempdir().unwrap();
    toy_parents(tmp.path());
    // corrupt the direct parent's first payload value to a NaN
    let file = tmp
        .path()
        .join("direct")
        .join(crate::store::SINGLE_FILE_NAME);
    let mut bytes = std::fs::read(&file).unwrap();
    let header_len = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
    bytes[8 + header_len..12 + header_len].copy_from_slice(&f32::NAN.to_le_bytes());
    std::fs::write(&file, bytes).unwrap();

    let cfg = config(
        tmp.path(),
        unit_range(0.5),
        vec![MethodSpec::Name(MergeMethod::WeightedAverage)],
    );
    let report = execute_sweep(&plan_sweep(&cfg).unwrap()).unwrap();
    assert_eq!(report.executed, 3);
    assert_eq!(report.failed, 3);
    assert!(report
        .manifest
        .entries
        .iter()
        .all(|e| e.status == EntryStatus::Failed
            && e.error
                .as_deref()
                .is_some_and(|m| m.contains("non-finite") || m.contains("NaN"))));
}

#[test]
fn preserve_source_keeps_thinking_dtypes() {
    let tmp = tempfile::tempdir().unwrap();
    let bf = |dir: &str, v: Vec<f32>| {
        let t = TensorBuffer::new("w", DType::BF16, vec![2], v).unwrap();
        write_checkpoint([t], tmp.path().join(dir), WriterOptions::default()).unwrap()
    };
    let d = bf("d", vec![1.0, 2.0]);
    let t = bf("t", vec![2.0, 4.0]);
    let out = tmp.path().join("m");
    let merged = merge_checkpoint(
        &d,
        &t,
        None,
        &MergeRecipe::new(MergeMethod::WeightedAverage, 0.5),
        &out,
        &MergeOptions::default(),
    )
    .unwrap();
    assert_eq!(merged.checkpoint.meta("w").unwrap().dtype, DType::BF16);
    assert_eq!(
        merged.checkpoint.load_tensor("w").unwrap().values,
        vec![1.5, 3.0]
    );
    assert!(content_digest(&out).is_ok());
    assert!(matches!(
        merge_checkpoint(
            &d,
            &t,
            None,
            &MergeRecipe::new(MergeMethod::Emr, 0.5),
            &out,
            &MergeOptions::default()
        ),
        Err(SweepError::BaseRequired { .. })
    ));
}
