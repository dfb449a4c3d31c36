use std::collections::BTreeMap;
use std::sync::OnceLock;

use stabinf_core::artifacts::{ArtifactConfig, Artifacts};
use stabinf_core::features::{build_feature_matrix, Category, ChangeRateMode, FeatureMatrix, FeatureSet, FeatureSpec};
use stabinf_core::ingest::{slice, RetweetEvent};
use stabinf_core::scoring::score_all;
use stabinf_core::synth::{generate, SynthConfig};
use stabinf_core::{InfluenceKind, MonthId, TimeWindow};

struct Fixture {
    events: Vec<RetweetEvent>,
    artifacts: Artifacts,
    reference: MonthId,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let cfg = SynthConfig {
            users: 800,
            seed: 11,
            ..SynthConfig::default()
        };
        let data = generate(&cfg).unwrap();
        let artifacts = Artifacts::compute(&data.events, &data.follows, cfg.start, cfg.last_month(), 0.1, &ArtifactConfig::default()).unwrap();
        Fixture {
            events: data.events,
            artifacts,
            reference: cfg.start.offset(3),
        }
    })
}

fn matrix(kind: InfluenceKind, n: usize, set: FeatureSet) -> FeatureMatrix {
    let f = fixture();
    build_feature_matrix(&f.artifacts, &FeatureSpec::new(f.reference, n, 6, kind, set)).unwrap()
}

fn column(m: &FeatureMatrix, name: &str) -> Vec<f64> {
    m.column_values(m.column_index(name).unwrap_or_else(|| panic!("no column {name}")))
}

#[test]
fn column_counts_follow_the_feature_table() {
    assert_eq!(matrix(InfluenceKind::Spreader, 4, FeatureSet::all()).n_cols(), 37);
    assert_eq!(matrix(InfluenceKind::Spreader, 1, FeatureSet::only(Category::Rt)).n_cols(), 6);
    assert_eq!(matrix(InfluenceKind::Broker, 4, FeatureSet::ScoreOnly).n_cols(), 4);
    let both = build_feature_matrix(
        &fixture().artifacts,
        &FeatureSpec {
            change_rate: ChangeRateMode::Both,
            ..FeatureSpec::new(fixture().reference, 4, 6, InfluenceKind::Spreader, FeatureSet::all())
        },
    )
    .unwrap();
    assert_eq!(both.n_cols(), 38);
}

#[test]
fn offset_zero_columns_agree_with_scores_and_networks() {
    let f = fixture();
    let m = matrix(InfluenceKind::Spreader, 4, FeatureSet::all());
    let month = f.artifacts.month(f.reference).unwrap();
    let counts = column(&m, "rt_count__t-0");
    let rters = column(&m, "rter_count__t-0");
    let broker = column(&m, "broker_score__t-0");
    for (i, u) in m.users.iter().enumerate() {
        assert_eq!(counts[i], month.scores.score(InfluenceKind::Spreader, u.as_str()) as f64);
        assert_eq!(broker[i], month.scores.score(InfluenceKind::Broker, u.as_str()) as f64);
        assert_eq!(rters[i], month.rt.in_degree.get(u.as_str()));
    }
    // rows are exactly the reference-month influencers
    let cohort: Vec<_> = f.artifacts.spreaders.sets[&f.reference].iter().cloned().collect();
    assert_eq!(m.users, cohort);
}

#[test]
fn restricting_categories_projects_columns() {
    for kind in [InfluenceKind::Spreader, InfluenceKind::Broker] {
        let full = matrix(kind, 4, FeatureSet::all());
        for cats in [vec![Category::Follow], vec![Category::Rt], vec![Category::Br], vec![Category::Rt, Category::Br], vec![Category::Follow, Category::Br]] {
            let part = matrix(kind, 4, FeatureSet::Categories(cats.into_iter().collect()));
            assert_eq!(part.users, full.users);
            assert_eq!(part.labels, full.labels);
            for name in &part.columns {
                assert_eq!(column(&part, name), column(&full, name), "{kind} {name}");
            }
        }
    }
}

#[test]
fn assembly_is_deterministic() {
    let a = matrix(InfluenceKind::Broker, 4, FeatureSet::all());
    let b = matrix(InfluenceKind::Broker, 4, FeatureSet::all());
    assert_eq!(a, b);
}

#[test]
fn aggregated_column_sums_monthly_scores() {
    let f = fixture();
    for kind in [InfluenceKind::Spreader, InfluenceKind::Broker] {
        let single = matrix(kind, 1, FeatureSet::Aggregated);
        let score_only = matrix(kind, 1, FeatureSet::ScoreOnly);
        assert_eq!(single.column_values(0), score_only.column_values(0));

        let summed = matrix(kind, 4, FeatureSet::Aggregated);
        let mut oracle: BTreeMap<String, u64> = BTreeMap::new();
        for back in 0..4 {
            let table = score_all(&slice(&f.events, TimeWindow::month(f.reference.offset(-back))));
            for (u, s) in table.column(kind) {
                *oracle.entry(u.to_string()).or_default() += s;
            }
        }
        for (i, u) in summed.users.iter().enumerate() {
            assert_eq!(summed.get(i, 0), oracle.get(u.as_str()).copied().unwrap_or(0) as f64);
        }
    }
}

#[test]
fn old_months_read_their_own_data_with_zero_fill() {
    let f = fixture();
    let m = matrix(InfluenceKind::Spreader, 4, FeatureSet::only(Category::Rt));
    let old = f.artifacts.month(f.reference.offset(-3)).unwrap();
    let counts = column(&m, "rt_count__t-3");
    let rates = column(&m, "unique_user_rate__t-3");
    let sizes = column(&m, "community_size_rt__t-3");
    for (row, u) in m.users.iter().enumerate() {
        assert_eq!(counts[row], old.scores.score(InfluenceKind::Spreader, u.as_str()) as f64);
        assert_eq!(rates[row], old.unique_user_rate.get(u).copied().unwrap_or(0.0));
        assert_eq!(sizes[row], old.rt.community_size.get(u.as_str()));
        if !old.scores.spreader.contains_key(u) {
            assert_eq!(sizes[row], 0.0);
        }
    }
}

#[test]
fn csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    let m = matrix(InfluenceKind::Spreader, 2, FeatureSet::all());
    m.write_csv(&path).unwrap();
    assert_eq!(FeatureMatrix::read_csv(&path).unwrap(), m);
}
