use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::auc_slices;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::model::GbdtModel;

pub const DEFAULT_REPEATS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Importance {
    /// Mean of baseline AUC minus shuffled AUC.
    pub mean: f64,
    /// Sample standard deviation over repeats.
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub schema_version: u32,
    pub base_auc: f64,
    pub repeats: usize,
    pub seed: u64,
    pub features: BTreeMap<String, Importance>,
}

impl ImportanceReport {
    /// Features by mean importance descending, ties by name.
    pub fn ranking(&self) -> Vec<(&str, Importance)> {
        let mut v: Vec<(&str, Importance)> = self.features.iter().map(|(k, v)| (k.as_str(), *v)).collect();
        v.sort_by(|a, b| b.1.mean.total_cmp(&a.1.mean).then_with(|| a.0.cmp(b.0)));
        v
    }
}

/// Shuffles each column `repeats` times and records the drop in AUC. Column
/// `j` draws from stream `j` of a generator seeded with `seed`, so results
/// do not depend on column order or on which other columns are evaluated.
pub fn permutation_importance(model: &GbdtModel, matrix: &FeatureMatrix, repeats: usize, seed: u64) -> Result<ImportanceReport> {
    if repeats < 1 {
        return Err(Error::Config("importance repeats must be at least 1".into()));
    }
    let map = model.column_map(matrix)?;
    let n = matrix.n_rows();
    let labels = &matrix.labels;
    // manifest-ordered columns
    let mut cols: Vec<Vec<f64>> = map.iter().map(|&c| matrix.column_values(c)).collect();
    let margins = |cols: &[Vec<f64>]| -> Vec<f64> {
        (0..n)
            .map(|i| model.margin_with(model.trees.len(), |f| cols[f][i]))
            .collect()
    };
    let base_auc = auc_slices(&margins(&cols), labels)?;
    let used = model.used_features();

    let mut features = BTreeMap::new();
    for (j, name) in model.features.iter().enumerate() {
        if !used.contains(&j) {
            features.insert(name.clone(), Importance { mean: 0.0, std: 0.0 });
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(j as u64);
        let original = cols[j].clone();
        let mut drops = Vec::with_capacity(repeats);
        for _ in 0..repeats {
            cols[j].copy_from_slice(&original);
            cols[j].shuffle(&mut rng);
            drops.push(base_auc - auc_slices(&margins(&cols), labels)?);
        }
        cols[j] = original;
        let mean = drops.iter().sum::<f64>() / repeats as f64;
        let std = if repeats > 1 {
            (drops.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (repeats - 1) as f64).sqrt()
        } else {
            0.0
        };
        features.insert(name.clone(), Importance { mean, std });
    }
    Ok(ImportanceReport {
        schema_version: crate::features::SCHEMA_VERSION,
        base_auc,
        repeats,
        seed,
        features,
    })
}
