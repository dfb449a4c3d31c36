//! The small hand-checkable dataset used throughout the tests.
//!
//! Tweets `p1` (author A; retweets B@10, C@20, D@30), `p2` (author A;
//! retweet C@15), `p3` (author B; retweets D@40, C@50); follow edges
//! B->A, C->A, D->A, C->B.

use crate::ingest::{FollowSnapshot, RetweetEvent};
use crate::time::MonthId;

pub fn f1_events() -> Vec<RetweetEvent> {
    [
        ("p1", "A", "B", 10),
        ("p1", "A", "C", 20),
        ("p1", "A", "D", 30),
        ("p2", "A", "C", 15),
        ("p3", "B", "D", 40),
        ("p3", "B", "C", 50),
    ]
    .into_iter()
    .map(|(t, a, r, ts)| RetweetEvent {
        tweet_id: t.into(),
        author: a.into(),
        retweeter: r.into(),
        ts_ms: ts,
    })
    .collect()
}

pub fn f1_follow_snapshot(month: MonthId) -> FollowSnapshot {
    let mut s = FollowSnapshot::new(month);
    for (a, b) in [("B", "A"), ("C", "A"), ("D", "A"), ("C", "B")] {
        s.insert(a.into(), b.into());
    }
    s
}
