use std::path::Path;

use sha2::{Digest, Sha256};
use stabinf_core::model::{GbdtParams, HyperParamGrid};
use stabinf_core::pipeline::{cmd_features, cmd_label, cmd_score, cmd_synth, cmd_train, derive_seed, Manifest, PipelineConfig};
use stabinf_core::{Error, InfluenceKind, MonthId};

fn small(root: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig {
        out: root.join("out"),
        grid: HyperParamGrid::single(GbdtParams {
            n_trees: 20,
            learning_rate: 0.1,
            max_depth: 3,
            max_leaves: 8,
            min_leaf: 5,
        }),
        ..PipelineConfig::default()
    };
    cfg.data.events = root.join("data/events.jsonl");
    cfg.data.follows = root.join("data/follows");
    cfg.synth.users = 400;
    cfg
}

#[test]
fn stage_seeds_are_sha256_prefixes() {
    for (master, stage) in [(0u64, "synth"), (1, "leiden"), (42, "split"), (u64::MAX, "importance")] {
        let mut bytes = master.to_le_bytes().to_vec();
        bytes.extend_from_slice(stage.as_bytes());
        let digest = Sha256::digest(&bytes);
        let mut prefix = [0u8; 8];
        prefix.copy_from_slice(&digest[..8]);
        assert_eq!(derive_seed(master, stage), u64::from_le_bytes(prefix));
    }
    assert_ne!(derive_seed(1, "synth"), derive_seed(1, "split"));
    assert_ne!(derive_seed(1, "synth"), derive_seed(2, "synth"));
}

#[test]
fn run_id_tracks_only_upstream_settings() {
    let base = PipelineConfig::default();
    let id = base.run_id();
    assert_eq!(id.len(), 16);

    let mut cosmetic = base.clone();
    cosmetic.out = "elsewhere".into();
    cosmetic.workers = 3;
    cosmetic.plot_data = true;
    cosmetic.importance.repeats = 5;
    cosmetic.sweep.m_values = vec![2];
    assert_eq!(cosmetic.run_id(), id);

    for changed in [
        PipelineConfig { seed: 2, ..base.clone() },
        PipelineConfig { kind: InfluenceKind::Broker, ..base.clone() },
        PipelineConfig { fraction: 0.2, ..base.clone() },
        PipelineConfig { n: 3, ..base.clone() },
    ] {
        assert_ne!(changed.run_id(), id);
    }
}

#[test]
fn toml_round_trip_and_strict_fields() {
    let mut cfg = PipelineConfig::default();
    cfg.eval_ref = Some(MonthId::new(2022, 9).unwrap());
    cfg.kind = InfluenceKind::Broker;
    cfg.features = "rt,br".parse().unwrap();
    let text = cfg.to_toml().unwrap();
    assert_eq!(PipelineConfig::from_toml(&text).unwrap(), cfg);

    let partial = PipelineConfig::from_toml("seed = 7\nkind = \"broker\"\n[grid]\nn_trees = [50]\n").unwrap();
    assert_eq!(partial.seed, 7);
    assert_eq!(partial.kind, InfluenceKind::Broker);
    assert_eq!(partial.grid.n_trees, vec![50]);
    assert_eq!(partial.n, PipelineConfig::default().n);

    assert!(PipelineConfig::from_toml("sede = 7\n").is_err());
    assert!(PipelineConfig::from_toml("[grid]\ntrees = [50]\n").is_err());
}

#[test]
fn validation_rejects_bad_settings() {
    let base = PipelineConfig::default();
    assert!(base.validate().is_ok());
    for bad in [
        PipelineConfig { fraction: 0.0, ..base.clone() },
        PipelineConfig { fraction: 1.0, ..base.clone() },
        PipelineConfig { fraction: f64::NAN, ..base.clone() },
        PipelineConfig { n: 0, ..base.clone() },
        PipelineConfig { m: 0, ..base.clone() },
    ] {
        assert!(bad.validate().is_err(), "{:?} {} {}", bad.fraction, bad.n, bad.m);
    }
}

#[test]
fn stages_fill_the_run_directory_and_manifest() {
    let root = tempfile::tempdir().unwrap();
    let cfg = small(root.path());
    cmd_synth(&cfg).unwrap();
    assert!(cfg.data.events.exists());
    assert!(cfg.data.follows.join("follows_2022-01.csv").exists());

    cmd_score(&cfg).unwrap();
    match cmd_train(&cfg) {
        Err(Error::MissingArtifact(msg)) => assert!(msg.contains("features"), "{msg}"),
        other => panic!("expected a missing artifact, got {other:?}"),
    }
    cmd_label(&cfg).unwrap();
    cmd_features(&cfg).unwrap();
    cmd_train(&cfg).unwrap();

    let dir = cfg.run_dir();
    assert!(dir.join("config.toml").exists());
    let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.run_id, cfg.run_id());
    for stage in ["score", "label", "features", "train"] {
        assert!(manifest.artifacts.values().any(|e| e.stage == stage), "{stage}");
    }
    for rel in manifest.artifacts.keys() {
        assert!(dir.join(rel).exists(), "{rel}");
    }
    for rel in ["scores/artifacts.json", "features/train.csv", "models/model.json", "reports/labels_spreader.csv"] {
        assert!(manifest.artifacts.contains_key(rel), "{rel}");
    }
}
