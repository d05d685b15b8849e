//! Shared domain types.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Quality-aware feature vectors, one row per item.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    item_ids: Vec<String>,
    dim: usize,
    data: Vec<f64>,
}

impl FeatureTable {
    /// Builds a table from row-major data. Requires at least two items, a
    /// positive dimension, unique ids and finite entries.
    pub fn new(item_ids: Vec<String>, dim: usize, data: Vec<f64>) -> Result<Self> {
        if item_ids.len() < 2 {
            return Err(Error::NoReference(item_ids.len()));
        }
        if dim == 0 {
            return Err(Error::validation("feature dimension must be at least 1"));
        }
        if data.len() != item_ids.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: item_ids.len() * dim,
                actual: data.len(),
            });
        }
        let mut seen = HashSet::with_capacity(item_ids.len());
        for id in &item_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::non_finite(format!(
                "feature row `{}` column {}",
                item_ids[pos / dim],
                pos % dim
            )));
        }
        Ok(Self {
            item_ids,
            dim,
            data,
        })
    }

    pub fn from_rows(item_ids: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(item_ids, dim, data)
    }

    pub fn len(&self) -> usize {
        self.item_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.item_ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Table restricted to `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let ids = indices.iter().map(|&i| self.item_ids[i].clone()).collect();
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self::new(ids, self.dim, data)
    }
}

/// Affine range used to map raw scores onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scale {
    pub min: f64,
    pub max: f64,
}

impl Scale {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !min.is_finite() || !max.is_finite() {
            return Err(Error::non_finite("label scale"));
        }
        if max <= min {
            return Err(Error::DegenerateScale(min));
        }
        Ok(Self { min, max })
    }

    pub fn span(&self) -> f64 {
        self.max - self.min
    }

    pub fn to_unit(&self, raw: f64) -> f64 {
        (raw - self.min) / self.span()
    }

    pub fn to_raw(&self, unit: f64) -> f64 {
        unit * self.span() + self.min
    }
}

/// Labels on the normalized scale together with the map back to raw scores.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVector {
    values: Vec<f64>,
    scale: Scale,
}

impl LabelVector {
    /// Min-max normalizes `raw` onto `[0, 1]`.
    pub fn normalize(raw: &[f64]) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::validation("cannot normalize an empty label vector"));
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("raw labels"));
        }
        let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
        let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let scale = Scale::new(min, max)?;
        Self::with_scale(raw, scale)
    }

    /// Normalizes `raw` with an externally fixed scale.
    pub fn with_scale(raw: &[f64], scale: Scale) -> Result<Self> {
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("raw labels"));
        }
        let values = raw.iter().map(|&v| scale.to_unit(v)).collect();
        Ok(Self { values, scale })
    }

    pub fn from_unit(values: Vec<f64>, scale: Scale) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::non_finite("normalized labels"));
        }
        Ok(Self { values, scale })
    }

    pub fn denormalize(&self) -> Vec<f64> {
        self.values.iter().map(|&v| self.scale.to_raw(v)).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn scale(&self) -> Scale {
        self.scale
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Hyperparameters of one calibration run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    /// Refresh rate of the MOS update.
    pub alpha: f64,
    /// Weight of the perceptual-constancy residual.
    pub beta: f64,
    /// Optimizer step size.
    pub lambda: f64,
    /// Epochs of head training before MOS updates start.
    pub warmup_epochs: usize,
    pub total_epochs: usize,
    pub batch_size: usize,
    pub hidden_dims: (usize, usize),
    pub seed: u64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            beta: 1.0 / 9.0,
            lambda: 1e-4,
            warmup_epochs: 1,
            total_epochs: 30,
            batch_size: 64,
            hidden_dims: (128, 64),
            seed: 0,
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::validation(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::validation(format!(
                "beta must be a finite non-negative number, got {}",
                self.beta
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::validation(format!(
                "lambda must be a finite non-negative number, got {}",
                self.lambda
            )));
        }
        if self.total_epochs == 0 {
            return Err(Error::validation("total_epochs must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::validation("batch_size must be positive"));
        }
        if self.hidden_dims.0 == 0 || self.hidden_dims.1 == 0 {
            return Err(Error::validation("hidden_dims must both be positive"));
        }
        Ok(())
    }
}

/// Current MOS estimates and the iteration counter.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationState {
    pub mu: Vec<f64>,
    pub epoch: usize,
}

impl CalibrationState {
    pub fn new(sos: &LabelVector) -> Self {
        Self {
            mu: sos.values().to_vec(),
            epoch: 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;
    use rand::Rng;

    #[test]
    fn normalize_endpoints() {
        let lv = LabelVector::normalize(&[0.0, 50.0, 100.0]).unwrap();
        assert_eq!(lv.values(), &[0.0, 0.5, 1.0]);
        assert_eq!(lv.scale(), Scale { min: 0.0, max: 100.0 });
    }

    #[test]
    fn constant_vector_is_degenerate() {
        assert!(matches!(
            LabelVector::normalize(&[1.0, 1.0, 1.0]),
            Err(Error::DegenerateScale(_))
        ));
    }

    #[test]
    fn non_finite_rejected() {
        assert!(matches!(
            LabelVector::normalize(&[1.0, f64::NAN]),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn denormalize_examples() {
        let scale = Scale::new(0.0, 100.0).unwrap();
        let lv = LabelVector::from_unit(vec![0.0, 1.0], scale).unwrap();
        assert_eq!(lv.denormalize(), vec![0.0, 100.0]);
        let lv = LabelVector::from_unit(vec![0.5], Scale::new(-1.0, 1.0).unwrap()).unwrap();
        assert_eq!(lv.denormalize(), vec![0.0]);
        let lv = LabelVector::normalize(&[25.0, 75.0]).unwrap();
        for (a, b) in lv.denormalize().iter().zip([25.0, 75.0]) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn random_round_trips() {
        let mut rng = seeded_rng(11);
        for _ in 0..100 {
            let n = rng.random_range(2..50);
            let offset = rng.random_range(-1e3..1e3);
            let width = rng.random_range(1e-3..1e3);
            let raw: Vec<f64> = (0..n)
                .map(|_| offset + width * rng.random::<f64>())
                .collect();
            let lv = LabelVector::normalize(&raw).unwrap();
            assert!(lv.values().iter().all(|v| (0.0..=1.0).contains(v)));
            let span = lv.scale().span();
            for (a, b) in lv.denormalize().iter().zip(&raw) {
                assert!((a - b).abs() < 1e-9 * span.max(1.0));
            }
        }
    }

    #[test]
    fn feature_table_invariants() {
        let ids = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        assert!(matches!(
            FeatureTable::new(ids(&["a"]), 1, vec![0.0]),
            Err(Error::NoReference(1))
        ));
        assert!(matches!(
            FeatureTable::new(ids(&["a", "a"]), 1, vec![0.0, 1.0]),
            Err(Error::DuplicateId(_))
        ));
        assert!(matches!(
            FeatureTable::new(ids(&["a", "b"]), 1, vec![0.0, f64::INFINITY]),
            Err(Error::NonFinite { .. })
        ));
        assert!(FeatureTable::new(ids(&["a", "b"]), 0, vec![]).is_err());
        let t = FeatureTable::new(ids(&["a", "b"]), 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(t.row(1), &[3.0, 4.0]);
        assert_eq!(t.subset(&[1, 0]).unwrap().row(0), &[3.0, 4.0]);
    }

    #[test]
    fn config_defaults() {
        let c = CalibrationConfig::default();
        assert_eq!(c.alpha, 0.1);
        assert_eq!(c.beta, 1.0 / 9.0);
        assert_eq!(c.lambda, 1e-4);
        assert_eq!(c.warmup_epochs, 1);
        assert!(c.validate().is_ok());
        let bad = CalibrationConfig {
            alpha: 1.5,
            ..c
        };
        assert!(bad.validate().is_err());
    }
}
