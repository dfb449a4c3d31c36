use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::UserId;

/// Mann–Whitney AUC over parallel slices: the probability that a random
/// positive outscores a random negative, ties counting one half.
pub fn auc_slices(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidInput("NaN score".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // ranks are doubled so that tied mid-ranks stay integral
    let mut pos_rank_sum2: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid2 = (i + j + 2) as u64;
        for &k in &order[i..=j] {
            if labels[k] == 1 {
                pos_rank_sum2 += mid2;
            }
        }
        i = j + 1;
    }
    let n_pos = n_pos as u64;
    let u2 = pos_rank_sum2 - n_pos * (n_pos + 1);
    Ok(u2 as f64 / (2 * n_pos * n_neg as u64) as f64)
}

fn aligned<'a, T: Copy>(
    values: &'a BTreeMap<UserId, T>,
    labels: &'a BTreeMap<UserId, u8>,
) -> Result<(Vec<T>, Vec<u8>)> {
    if values.len() != labels.len() || values.keys().zip(labels.keys()).any(|(a, b)| a != b) {
        return Err(Error::InvalidInput("scores and labels cover different users".into()));
    }
    Ok((values.values().copied().collect(), labels.values().copied().collect()))
}

pub fn auc(scores: &BTreeMap<UserId, f64>, labels: &BTreeMap<UserId, u8>) -> Result<f64> {
    let (s, l) = aligned(scores, labels)?;
    auc_slices(&s, &l)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub r#fn: usize,
}

impl Confusion {
    pub fn from_predictions(predicted: &[u8], labels: &[u8]) -> Self {
        let mut c = Confusion::default();
        for (&p, &l) in predicted.iter().zip(labels) {
            match (p, l) {
                (1, 1) => c.tp += 1,
                (1, _) => c.fp += 1,
                (_, 1) => c.r#fn += 1,
                _ => c.tn += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.r#fn
    }

    pub fn accuracy(&self) -> f64 {
        if self.total() == 0 {
            return 0.0;
        }
        (self.tp + self.tn) as f64 / self.total() as f64
    }
}

pub fn threshold_predictions(probs: &[f64], threshold: f64) -> Vec<u8> {
    probs.iter().map(|&p| u8::from(p >= threshold)).collect()
}

/// Fraction of rows where `prob >= threshold` agrees with the label.
pub fn accuracy(probs: &BTreeMap<UserId, f64>, labels: &BTreeMap<UserId, u8>, threshold: f64) -> Result<f64> {
    let (p, l) = aligned(probs, labels)?;
    Ok(Confusion::from_predictions(&threshold_predictions(&p, threshold), &l).accuracy())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documented_values() {
        let s = [0.9, 0.8, 0.3, 0.1];
        assert_eq!(auc_slices(&s, &[1, 1, 0, 0]).unwrap(), 1.0);
        assert_eq!(auc_slices(&s, &[1, 0, 1, 0]).unwrap(), 0.75);
        assert_eq!(auc_slices(&[0.2; 4], &[1, 0, 1, 0]).unwrap(), 0.5);
        assert!(matches!(auc_slices(&s, &[1, 1, 1, 1]), Err(Error::SingleClass)));
    }

    #[test]
    fn accuracy_counts() {
        let users: Vec<UserId> = ["a", "b", "c", "d"].iter().map(|s| UserId::new(s)).collect();
        let probs: BTreeMap<UserId, f64> = users.iter().cloned().zip([0.9, 0.2, 0.6, 0.5]).collect();
        let labels: BTreeMap<UserId, u8> = users.iter().cloned().zip([1, 0, 1, 0]).collect();
        assert_eq!(accuracy(&probs, &labels, 0.5).unwrap(), 0.75);
        let mut other = labels.clone();
        other.remove(&users[0]);
        assert!(accuracy(&probs, &other, 0.5).is_err());
    }
}
