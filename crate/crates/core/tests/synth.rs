use std::collections::BTreeMap;
use std::sync::OnceLock;

use stabinf_core::artifacts::{ArtifactConfig, Artifacts};
use stabinf_core::ingest::{load_follow_snapshots, load_retweet_events, EventFormat};
use stabinf_core::labeling::persistence_curve;
use stabinf_core::synth::{generate, read_ground_truth, PlantedClass, SynthConfig, SynthData};
use stabinf_core::{InfluenceKind, MonthId, UserId};

fn small(seed: u64) -> SynthConfig {
    SynthConfig {
        users: 1500,
        seed,
        ..SynthConfig::default()
    }
}

fn artifacts_of(cfg: &SynthConfig, data: &SynthData) -> Artifacts {
    Artifacts::compute(&data.events, &data.follows, cfg.start, cfg.last_month(), 0.1, &ArtifactConfig::default()).unwrap()
}

struct Run {
    cfg: SynthConfig,
    truth: BTreeMap<UserId, PlantedClass>,
    artifacts: Artifacts,
}

/// The default generator, since small populations make the cohorts noisy.
fn twenty_runs() -> &'static [Run] {
    static RUNS: OnceLock<Vec<Run>> = OnceLock::new();
    RUNS.get_or_init(|| {
        (1..=20)
            .map(|seed| {
                let cfg = SynthConfig { seed, ..SynthConfig::default() };
                let data = generate(&cfg).unwrap();
                let artifacts = artifacts_of(&cfg, &data);
                Run { cfg, truth: data.truth, artifacts }
            })
            .collect()
    })
}

/// Share of the reference-month influencers of `class` that stay in the
/// top set for six consecutive months.
fn retention(run: &Run, kind: InfluenceKind, class: PlantedClass) -> Option<f64> {
    let sets = run.artifacts.sets(kind);
    let reference = run.cfg.start.offset(3);
    let cohort: Vec<&UserId> = sets.sets[&reference].iter().filter(|u| run.truth[*u] == class).collect();
    if cohort.is_empty() {
        return None;
    }
    let kept = cohort
        .iter()
        .filter(|u| (0..6).all(|k| sets.sets[&reference.offset(k)].contains(**u)))
        .count();
    Some(kept as f64 / cohort.len() as f64)
}

#[test]
fn generation_is_deterministic_and_ingests_cleanly() {
    let cfg = SynthConfig { users: 400, ..small(3) };
    let a = generate(&cfg).unwrap();
    let b = generate(&cfg).unwrap();
    assert_eq!(a.events, b.events);
    assert_eq!(a.follows, b.follows);
    assert_eq!(a.truth, b.truth);

    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    a.write(d1.path()).unwrap();
    b.write(d2.path()).unwrap();
    for name in ["events.jsonl", "ground_truth.csv", "follows/follows_2022-03.csv"] {
        assert_eq!(std::fs::read(d1.path().join(name)).unwrap(), std::fs::read(d2.path().join(name)).unwrap(), "{name}");
    }

    let log = load_retweet_events(&d1.path().join("events.jsonl"), EventFormat::Jsonl).unwrap();
    assert_eq!(log.dropped.total(), 0);
    assert_eq!(log.events, a.events);
    let follows = load_follow_snapshots(&d1.path().join("follows")).unwrap();
    assert_eq!(follows.snapshots, a.follows);
    assert_eq!(follows.snapshots.len(), cfg.months);
    assert_eq!(read_ground_truth(&d1.path().join("ground_truth.csv")).unwrap(), a.truth);
}

#[test]
fn invalid_settings_are_rejected() {
    for bad in [
        SynthConfig { rho: 1.2, ..small(1) },
        SynthConfig { months: 12, ..small(1) },
        SynthConfig { stable_fraction: 0.6, temporal_fraction: 0.6, ..small(1) },
        SynthConfig { cascade_alpha: 1.0, ..small(1) },
        SynthConfig { activity_sd: -1.0, ..small(1) },
    ] {
        assert!(generate(&bad).is_err());
    }
}

#[test]
fn frozen_latents_keep_stable_users_on_top() {
    // fully persistent, spike-free and with the stable class far from the rest
    let cfg = SynthConfig {
        users: 1000,
        rho: 1.0,
        spike_prob: 0.0,
        stable_fraction: 0.05,
        stable_mean: 8.0,
        stable_sd: 0.5,
        activity_stable_mean: 8.0,
        ..small(5)
    };
    let data = generate(&cfg).unwrap();
    let artifacts = artifacts_of(&cfg, &data);
    for kind in [InfluenceKind::Spreader, InfluenceKind::Broker] {
        let sets = artifacts.sets(kind);
        let cohort: Vec<&UserId> = sets.sets[&cfg.start]
            .iter()
            .filter(|u| data.truth[*u] == PlantedClass::Stable)
            .collect();
        assert!(!cohort.is_empty());
        for month in MonthId::range(cfg.start, cfg.last_month()) {
            assert!(cohort.iter().all(|u| sets.sets[&month].contains(*u)), "{kind} {month}");
        }
    }
}

#[test]
fn planted_stable_users_outlast_temporal_ones() {
    for kind in [InfluenceKind::Spreader, InfluenceKind::Broker] {
        let wins = twenty_runs()
            .iter()
            .filter(|run| {
                match (retention(run, kind, PlantedClass::Stable), retention(run, kind, PlantedClass::Temporal)) {
                    (Some(s), Some(t)) => s > t,
                    (Some(_), None) => true,
                    _ => false,
                }
            })
            .count();
        assert!(wins >= 19, "{kind}: {wins}/20");
    }
}

#[test]
fn longer_histories_persist_longer() {
    let mut ok = 0;
    for run in twenty_runs() {
        let reference = run.cfg.start.offset(3);
        let curves: Vec<Vec<f64>> = (0..=3)
            .map(|prior| persistence_curve(&run.artifacts.spreaders, reference, prior, 6).unwrap())
            .collect();
        let monotone = curves.windows(2).all(|w| w[1].iter().zip(&w[0]).all(|(longer, shorter)| longer >= shorter));
        ok += usize::from(monotone);
    }
    assert!(ok >= 19, "{ok}/20");
}

#[test]
fn default_retention_brackets_the_reference_value() {
    let cfg = SynthConfig::default();
    let data = generate(&cfg).unwrap();
    let artifacts = artifacts_of(&cfg, &data);
    let curve = persistence_curve(&artifacts.spreaders, cfg.start.offset(3), 0, 6).unwrap();
    assert!((0.3..=0.8).contains(&curve[5]), "{curve:?}");
}
