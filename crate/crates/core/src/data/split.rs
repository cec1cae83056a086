use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Scene;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum SplitRule {
    /// Indices `1..=max_index` of every location validate, the rest train.
    ByIndex { max_index: u32 },
    /// Seeded shuffle, the first `round(n * train_fraction)` scenes train.
    Ratio { train_fraction: f64, seed: u64 },
}

impl SplitRule {
    /// Scenes 1 to 5 of each location for validation.
    pub const STANDARD: SplitRule = SplitRule::ByIndex { max_index: 5 };

    pub fn describe(&self) -> String {
        match self {
            SplitRule::ByIndex { max_index } => format!("index 1..={max_index} per location -> validation"),
            SplitRule::Ratio { train_fraction, seed } => {
                format!("seeded shuffle (seed {seed}), train fraction {train_fraction}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<Scene>,
    pub validation: Vec<Scene>,
    pub rule: String,
}

pub fn split_dataset(scenes: Vec<Scene>, rule: SplitRule) -> Result<DatasetSplit> {
    let mut seen = HashSet::new();
    for s in &scenes {
        if !seen.insert(s.id.as_str()) {
            return Err(Error::DuplicateId(s.id.clone()));
        }
    }
    let (train, validation) = match rule {
        SplitRule::ByIndex { max_index } => scenes
            .into_iter()
            .partition(|s| !(1..=max_index).contains(&s.index)),
        SplitRule::Ratio { train_fraction, seed } => {
            if !(0.0..=1.0).contains(&train_fraction) {
                return Err(Error::InvalidConfig(format!(
                    "train fraction {train_fraction} outside [0, 1]"
                )));
            }
            let n = scenes.len();
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let n_train = (n as f64 * train_fraction).round() as usize;
            let mut is_train = vec![false; n];
            for &i in &order[..n_train] {
                is_train[i] = true;
            }
            let mut flags = is_train.into_iter();
            scenes.into_iter().partition(|_| flags.next().unwrap())
        }
    };
    Ok(DatasetSplit {
        train,
        validation,
        rule: rule.describe(),
    })
}
