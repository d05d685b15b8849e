//! Single-opinion-score synthesis from richer annotations, bias-rate mixing
//! and few-opinion-score averaging.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub value: f64,
    pub count: f64,
}

/// The subjective annotation available for one item.
#[derive(Debug, Clone, PartialEq)]
pub enum Annotation {
    /// Every subject's opinion score.
    RawScores(Vec<f64>),
    /// MOS and the standard deviation of the opinion scores.
    Gaussian { mos: f64, std: f64 },
    /// Empirical distribution of the ratings.
    Histogram(Vec<HistogramBin>),
}

impl Annotation {
    pub fn kind(&self) -> &'static str {
        match self {
            Annotation::RawScores(_) => "raw_scores",
            Annotation::Gaussian { .. } => "gaussian",
            Annotation::Histogram(_) => "histogram",
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        match self {
            Annotation::RawScores(scores) => {
                if scores.is_empty() {
                    return Err("raw_scores is empty".into());
                }
                if scores.iter().any(|s| !s.is_finite()) {
                    return Err("raw_scores contains a non-finite value".into());
                }
            }
            Annotation::Gaussian { mos, std } => {
                if !mos.is_finite() || !std.is_finite() {
                    return Err("gaussian parameters must be finite".into());
                }
                if *std < 0.0 {
                    return Err(format!("gaussian std must be non-negative, got {std}"));
                }
            }
            Annotation::Histogram(bins) => {
                if bins.iter().any(|b| !b.value.is_finite() || !b.count.is_finite()) {
                    return Err("histogram contains a non-finite entry".into());
                }
                if bins.iter().any(|b| b.count < 0.0) {
                    return Err("histogram counts must be non-negative".into());
                }
                if bins.iter().map(|b| b.count).sum::<f64>() <= 0.0 {
                    return Err("histogram total count must be positive".into());
                }
            }
        }
        Ok(())
    }

    /// Expected value of a single opinion score under this annotation.
    pub fn mean(&self) -> f64 {
        match self {
            Annotation::RawScores(s) => s.iter().sum::<f64>() / s.len() as f64,
            Annotation::Gaussian { mos, .. } => *mos,
            Annotation::Histogram(bins) => {
                let total: f64 = bins.iter().map(|b| b.count).sum();
                bins.iter().map(|b| b.value * b.count).sum::<f64>() / total
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatingRecord {
    pub item_id: String,
    pub annotation: Annotation,
    pub ground_truth_mos: Option<f64>,
}

impl RatingRecord {
    pub fn validate(&self) -> Result<()> {
        self.annotation
            .validate()
            .map_err(|e| Error::validation(format!("item `{}`: {e}", self.item_id)))?;
        if let Some(gt) = self.ground_truth_mos {
            if !gt.is_finite() {
                return Err(Error::validation(format!(
                    "item `{}`: ground_truth_mos is not finite",
                    self.item_id
                )));
            }
        }
        Ok(())
    }
}

/// How a single opinion score is drawn from a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    /// Pick one subject's raw score uniformly.
    RawSample,
    /// Draw from `N(mos, std^2)`.
    Gaussian,
    /// Draw from the empirical rating histogram.
    Empirical,
}

impl Protocol {
    pub fn required_kind(self) -> &'static str {
        match self {
            Protocol::RawSample => "raw_scores",
            Protocol::Gaussian => "gaussian",
            Protocol::Empirical => "histogram",
        }
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw-sample" => Ok(Protocol::RawSample),
            "gaussian" => Ok(Protocol::Gaussian),
            "empirical" => Ok(Protocol::Empirical),
            other => Err(Error::validation(format!(
                "unknown protocol `{other}` (expected raw-sample, gaussian or empirical)"
            ))),
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::RawSample => "raw-sample",
            Protocol::Gaussian => "gaussian",
            Protocol::Empirical => "empirical",
        })
    }
}

fn check_protocol(records: &[RatingRecord], protocol: Protocol) -> Result<()> {
    let offending: Vec<&str> = records
        .iter()
        .filter(|r| r.annotation.kind() != protocol.required_kind())
        .map(|r| r.item_id.as_str())
        .collect();
    if !offending.is_empty() {
        return Err(Error::validation(format!(
            "protocol {protocol} needs {} annotations; offending items: {}",
            protocol.required_kind(),
            offending.join(", ")
        )));
    }
    records.iter().try_for_each(RatingRecord::validate)
}

fn draw(annotation: &Annotation, rng: &mut Stream) -> f64 {
    match annotation {
        Annotation::RawScores(scores) => scores[rng.random_range(0..scores.len())],
        Annotation::Gaussian { mos, std } => {
            if *std == 0.0 {
                *mos
            } else {
                // std > 0 and finite was validated
                Normal::new(*mos, *std).expect("valid normal").sample(rng)
            }
        }
        Annotation::Histogram(bins) => {
            let total: f64 = bins.iter().map(|b| b.count).sum();
            let mut u = rng.random::<f64>() * total;
            for bin in bins {
                if u < bin.count {
                    return bin.value;
                }
                u -= bin.count;
            }
            // Rounding can leave u just past the last positive bin.
            bins.iter()
                .rev()
                .find(|b| b.count > 0.0)
                .map_or(f64::NAN, |b| b.value)
        }
    }
}

/// One single opinion score per record on the raw score scale.
pub fn synthesize_sos(records: &[RatingRecord], protocol: Protocol, rng: &mut Stream) -> Result<Vec<f64>> {
    check_protocol(records, protocol)?;
    Ok(records.iter().map(|r| draw(&r.annotation, rng)).collect())
}

/// Number of values outside `[lo, hi]`. Gaussian draws are never clipped.
pub fn count_out_of_range(values: &[f64], lo: f64, hi: f64) -> usize {
    values.iter().filter(|&&v| v < lo || v > hi).count()
}

/// Replaces a uniformly random subset of exactly `round(rate * N)` MOS entries
/// with the corresponding SOS.
pub fn mix_bias_rate(mos: &[f64], sos: &[f64], rate: f64, rng: &mut Stream) -> Result<Vec<f64>> {
    if mos.len() != sos.len() {
        return Err(Error::validation(format!(
            "mos has {} entries but sos has {}",
            mos.len(),
            sos.len()
        )));
    }
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::validation(format!("bias rate must lie in [0, 1], got {rate}")));
    }
    let count = (rate * mos.len() as f64).round() as usize;
    let mut out = mos.to_vec();
    for i in index::sample(rng, mos.len(), count) {
        out[i] = sos[i];
    }
    Ok(out)
}

/// Mean of `k` distinct subjects' raw scores per item.
pub fn fos_mean(records: &[RatingRecord], k: usize, rng: &mut Stream) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::validation("subject count must be at least 1"));
    }
    check_protocol(records, Protocol::RawSample)?;
    let short: Vec<&str> = records
        .iter()
        .filter(|r| matches!(&r.annotation, Annotation::RawScores(s) if s.len() < k))
        .map(|r| r.item_id.as_str())
        .collect();
    if !short.is_empty() {
        return Err(Error::validation(format!(
            "fewer than {k} raw scores for items: {}",
            short.join(", ")
        )));
    }
    Ok(records
        .iter()
        .map(|r| match &r.annotation {
            Annotation::RawScores(scores) => {
                let picked = index::sample(rng, scores.len(), k);
                picked.iter().map(|i| scores[i]).sum::<f64>() / k as f64
            }
            _ => unreachable!("protocol checked"),
        })
        .collect())
}
