use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::UserId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineOutput {
    pub labels: BTreeMap<UserId, u8>,
    /// Users by score descending, ties by id ascending.
    pub ranking: Vec<UserId>,
}

/// Labels the `k` highest-scoring users 1 and everyone else 0.
pub fn baseline_classify(scores: &BTreeMap<UserId, f64>, k: usize) -> Result<BaselineOutput> {
    if k > scores.len() {
        return Err(Error::InvalidInput(format!(
            "cannot label {k} users positive out of {}",
            scores.len()
        )));
    }
    let mut ranked: Vec<(&UserId, f64)> = scores.iter().map(|(u, s)| (u, *s)).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let ranking: Vec<UserId> = ranked.into_iter().map(|(u, _)| u.clone()).collect();
    let labels = ranking
        .iter()
        .enumerate()
        .map(|(i, u)| (u.clone(), u8::from(i < k)))
        .collect();
    Ok(BaselineOutput { labels, ranking })
}
