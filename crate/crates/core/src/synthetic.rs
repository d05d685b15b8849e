//! Desk-scale datasets with known ground-truth MOS.
//!
//! Ground truth is uniform on `[0, 1]`. Features embed the MOS through a fixed
//! smooth injective map: for `k = 0, 1, 2, 3` the coordinate pair
//! `(2k, 2k + 1)` carries `EMBED_AMPLITUDE * (cos(pi (k+1) m), sin(pi (k+1) m))`
//! and every remaining coordinate is zero. Gaussian noise of standard
//! deviation `feature_noise` is then added to all coordinates, so the
//! trailing dimensions are pure distractors. Each subject's raw score is the
//! MOS plus independent gaussian noise of standard deviation `sos_noise_std`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{streams, sub_rng};
use crate::sos::{Annotation, RatingRecord};
use crate::types::FeatureTable;

pub const EMBED_AMPLITUDE: f64 = 0.3;
pub const EMBED_COORDINATES: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_items: usize,
    pub feature_dim: usize,
    pub feature_noise: f64,
    pub sos_noise_std: f64,
    pub subjects_per_item: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_items: 500,
            feature_dim: 32,
            feature_noise: 0.05,
            sos_noise_std: 0.15,
            subjects_per_item: 8,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_items < 2 {
            return Err(Error::NoReference(self.n_items));
        }
        if self.feature_dim == 0 {
            return Err(Error::validation("feature_dim must be at least 1"));
        }
        if self.subjects_per_item == 0 {
            return Err(Error::validation("subjects_per_item must be at least 1"));
        }
        for (name, v) in [
            ("feature_noise", self.feature_noise),
            ("sos_noise_std", self.sos_noise_std),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::validation(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Noise-free feature embedding of a MOS value.
pub fn embed(mos: f64, dim: usize) -> Vec<f64> {
    let mut row = vec![0.0; dim];
    for (j, slot) in row.iter_mut().take(EMBED_COORDINATES).enumerate() {
        let freq = PI * (j / 2 + 1) as f64;
        *slot = EMBED_AMPLITUDE
            * if j % 2 == 0 {
                (freq * mos).cos()
            } else {
                (freq * mos).sin()
            };
    }
    row
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub features: FeatureTable,
    pub records: Vec<RatingRecord>,
}

impl SyntheticDataset {
    pub fn ground_truth(&self) -> Vec<f64> {
        self.records
            .iter()
            .map(|r| r.ground_truth_mos.expect("synthetic records carry ground truth"))
            .collect()
    }
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticDataset> {
    spec.validate()?;
    let mut mos_rng = sub_rng(spec.seed, streams::SYNTH_MOS);
    let mut feat_rng = sub_rng(spec.seed, streams::SYNTH_FEATURES);
    let mut rating_rng = sub_rng(spec.seed, streams::SYNTH_RATINGS);

    let mos: Vec<f64> = (0..spec.n_items).map(|_| mos_rng.random::<f64>()).collect();
    let ids: Vec<String> = (0..spec.n_items).map(|i| format!("item{i:05}")).collect();

    let mut data = Vec::with_capacity(spec.n_items * spec.feature_dim);
    for &m in &mos {
        for v in embed(m, spec.feature_dim) {
            let noise: f64 = StandardNormal.sample(&mut feat_rng);
            data.push(v + spec.feature_noise * noise);
        }
    }
    let features = FeatureTable::new(ids.clone(), spec.feature_dim, data)?;

    let records = ids
        .into_iter()
        .zip(&mos)
        .map(|(item_id, &m)| {
            let scores = (0..spec.subjects_per_item)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rating_rng);
                    m + spec.sos_noise_std * z
                })
                .collect();
            RatingRecord {
                item_id,
                annotation: Annotation::RawScores(scores),
                ground_truth_mos: Some(m),
            }
        })
        .collect();

    Ok(SyntheticDataset { features, records })
}
