#![allow(dead_code)]

use proptest::prelude::*;
use stabinf_core::ingest::RetweetEvent;
use stabinf_core::scoring::ScoreTable;
use stabinf_core::{TimeWindow, UserId};

pub fn user(i: usize) -> UserId {
    UserId::new(format!("u{i:02}"))
}

/// Raw events over a handful of tweets and users. Tweet `t` belongs to user
/// `t % 5`; duplicates and self-retweets are left in for ingest to handle.
pub fn raw_events(max_len: usize, max_ts: i64) -> impl Strategy<Value = Vec<RetweetEvent>> {
    prop::collection::vec((0..12usize, 0..9usize, 0..max_ts), 0..=max_len).prop_map(|rows| {
        rows.into_iter()
            .map(|(t, r, ts)| RetweetEvent {
                tweet_id: format!("t{t}").into(),
                author: user(t % 5),
                retweeter: user(r),
                ts_ms: ts,
            })
            .collect()
    })
}

/// Both scores straight from the definitions, quadratic in the event count.
pub fn brute_force_scores(events: &[RetweetEvent], window: TimeWindow) -> ScoreTable {
    let inside: Vec<&RetweetEvent> = events.iter().filter(|e| window.contains(e.ts_ms)).collect();
    let mut table = ScoreTable::empty(window);
    for e in &inside {
        for u in [&e.author, &e.retweeter] {
            table.spreader.entry(u.clone()).or_insert(0);
            table.broker.entry(u.clone()).or_insert(0);
        }
    }
    for e in &inside {
        *table.spreader.get_mut(&e.author).unwrap() += 1;
        let later = inside
            .iter()
            .filter(|o| o.tweet_id == e.tweet_id && o.ts_ms > e.ts_ms)
            .count() as u64;
        *table.broker.get_mut(&e.retweeter).unwrap() += later;
    }
    table
}

/// A matrix with columns `x0, x1, ...` from row-major values.
pub fn toy_matrix(rows: &[Vec<f64>], labels: Vec<u8>) -> stabinf_core::features::FeatureMatrix {
    use stabinf_core::features::{ChangeRateMode, FeatureMatrix, MatrixMeta};
    let width = rows.first().map_or(0, Vec::len);
    let meta = MatrixMeta {
        schema_version: 1,
        reference: stabinf_core::MonthId::new(2022, 1).unwrap(),
        n: 1,
        m: 1,
        kind: stabinf_core::InfluenceKind::Spreader,
        feature_set: "toy".into(),
        categories: vec![],
        change_rate: ChangeRateMode::TaskKind,
    };
    FeatureMatrix::new(
        (0..rows.len()).map(|i| UserId::new(format!("r{i:04}"))).collect(),
        (0..width).map(|j| format!("x{j}")).collect(),
        rows.concat(),
        labels,
        meta,
    )
    .unwrap()
}
