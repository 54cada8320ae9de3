use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{ConfigClass, MeasurementRecord};
use crate::error::{Error, Result};

/// Per-gain-setting train/test split.
///
/// When `test_per_gain` is set it wins over `test_fraction`; the default
/// 436 of 3,168 is the count the fractions round to in the reference
/// campaigns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
    pub test_per_gain: Option<usize>,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { train_fraction: 0.86, test_fraction: 0.14, seed: 0, test_per_gain: Some(436) }
    }
}

/// Gain settings as exact-enough integer keys.
pub(crate) fn gain_key(g: f64) -> i64 {
    (g * 1e6).round() as i64
}

/// Record indices grouped by gain setting, ascending.
pub(crate) fn group_by_gain(records: &[MeasurementRecord]) -> BTreeMap<i64, Vec<usize>> {
    let mut groups: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        groups.entry(gain_key(r.gain_target_db)).or_default().push(i);
    }
    groups
}

/// Train and test indices, each ascending. Test records are drawn only from
/// the Random and Goalpost classes.
pub fn split_indices(records: &[MeasurementRecord], spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut test = Vec::new();
    for (key, idx) in group_by_gain(records) {
        let want = spec
            .test_per_gain
            .unwrap_or_else(|| (spec.test_fraction * idx.len() as f64).round() as usize);
        let mut pool: Vec<usize> =
            idx.into_iter().filter(|&i| records[i].config_class != ConfigClass::Fixed).collect();
        if pool.len() < want {
            return Err(Error::InsufficientRecords(format!(
                "gain {} dB: {} random/goalpost records, {} needed for test",
                key as f64 / 1e6,
                pool.len(),
                want
            )));
        }
        pool.shuffle(&mut rng);
        test.extend_from_slice(&pool[..want]);
    }
    test.sort_unstable();
    let mut is_test = vec![false; records.len()];
    for &i in &test {
        is_test[i] = true;
    }
    let train = (0..records.len()).filter(|i| !is_test[*i]).collect();
    Ok((train, test))
}

pub fn split(records: &[MeasurementRecord], spec: &SplitSpec) -> Result<(Vec<MeasurementRecord>, Vec<MeasurementRecord>)> {
    let (train, test) = split_indices(records, spec)?;
    Ok((
        train.into_iter().map(|i| records[i].clone()).collect(),
        test.into_iter().map(|i| records[i].clone()).collect(),
    ))
}
