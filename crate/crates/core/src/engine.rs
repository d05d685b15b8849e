//! Alternating optimization of the relative-quality head and the per-item
//! MOS estimates.
//!
//! One iteration `t` is one epoch: draw a fresh reference for every item,
//! run a full mini-batch pass over the head with the estimates held fixed,
//! then apply one synchronous MOS update. Until `warmup_epochs` head passes
//! have completed the estimates are pinned to the input labels.

use rand::seq::SliceRandom;
use rand::Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::net::{head_init, s_theta_forward, GradientBundle, HeadParameters, Tape};
use crate::rng::{streams, sub_rng, Stream};
use crate::types::{CalibrationConfig, CalibrationState, FeatureTable, LabelVector};

/// `refs[n]` is the reference item drawn for item `n`; never `n` itself.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReferenceAssignment {
    pub refs: Vec<usize>,
}

impl ReferenceAssignment {
    pub fn validate(&self) -> Result<()> {
        let n = self.refs.len();
        for (i, &r) in self.refs.iter().enumerate() {
            if r >= n || r == i {
                return Err(Error::validation(format!(
                    "item {i} has invalid reference {r} (N = {n})"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    pub data_fit_loss: f64,
    pub constraint_loss: f64,
    pub total_loss: f64,
    /// SHA-256 of the estimates after this epoch's update, truncated hex.
    pub mu_digest: String,
}

/// Uniform reference per item over all other items.
pub fn sample_references(n_items: usize, rng: &mut Stream) -> Result<ReferenceAssignment> {
    if n_items < 2 {
        return Err(Error::NoReference(n_items));
    }
    let refs = (0..n_items)
        .map(|n| {
            let r = rng.random_range(0..n_items - 1);
            if r >= n {
                r + 1
            } else {
                r
            }
        })
        .collect();
    Ok(ReferenceAssignment { refs })
}

/// Read-only view of the quantities the loss depends on.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub features: &'a FeatureTable,
    /// Observed labels `y` on the normalized scale.
    pub sos: &'a [f64],
    /// Current estimates `mu`.
    pub mu: &'a [f64],
    pub refs: &'a ReferenceAssignment,
    pub beta: f64,
}

impl Problem<'_> {
    fn check(&self) -> Result<()> {
        let n = self.features.len();
        for (what, len) in [
            ("sos", self.sos.len()),
            ("mu", self.mu.len()),
            ("references", self.refs.refs.len()),
        ] {
            if len != n {
                return Err(Error::validation(format!(
                    "{what} has length {len} but the feature table has {n} items"
                )));
            }
        }
        self.refs.validate()
    }
}

/// Per-item terms of the objective for one batch.
#[derive(Debug, Clone)]
pub struct BatchTerms {
    /// Mean of `(y_n - S - mu_r)^2 + beta (mu_n - S - mu_r)^2` over the batch.
    pub loss: f64,
    pub data_fit: f64,
    pub constraint: f64,
    /// `(item, score, tape)` in batch order.
    pub tapes: Vec<(usize, f64, Tape)>,
}

pub fn batch_loss(params: &HeadParameters, problem: &Problem<'_>, batch: &[usize]) -> Result<BatchTerms> {
    problem.check()?;
    if batch.is_empty() {
        return Err(Error::validation("empty batch"));
    }
    let n_items = problem.features.len();
    let mut data_fit = 0.0;
    let mut constraint = 0.0;
    let mut tapes = Vec::with_capacity(batch.len());
    for &n in batch {
        if n >= n_items {
            return Err(Error::validation(format!("batch index {n} out of range")));
        }
        let r = problem.refs.refs[n];
        let (s, tape) = s_theta_forward(params, problem.features.row(n), problem.features.row(r))?;
        let fit = problem.sos[n] - s - problem.mu[r];
        let con = problem.mu[n] - s - problem.mu[r];
        if !(fit.is_finite() && con.is_finite()) {
            return Err(Error::non_finite(format!(
                "loss residual of item `{}`",
                problem.features.item_ids()[n]
            )));
        }
        data_fit += fit * fit;
        constraint += con * con;
        tapes.push((n, s, tape));
    }
    let m = batch.len() as f64;
    data_fit /= m;
    constraint /= m;
    Ok(BatchTerms {
        loss: data_fit + problem.beta * constraint,
        data_fit,
        constraint,
        tapes,
    })
}

/// Gradient of [`batch_loss`] with respect to the head parameters.
pub fn batch_gradient(
    params: &HeadParameters,
    problem: &Problem<'_>,
    batch: &[usize],
    grads: &mut GradientBundle,
) -> Result<BatchTerms> {
    let terms = batch_loss(params, problem, batch)?;
    grads.clear();
    let m = batch.len() as f64;
    for (n, s, tape) in &terms.tapes {
        let r = problem.refs.refs[*n];
        let fit = problem.sos[*n] - s - problem.mu[r];
        let con = problem.mu[*n] - s - problem.mu[r];
        let upstream = -2.0 * (fit + problem.beta * con) / m;
        params.backward_into(tape, upstream, grads)?;
    }
    Ok(terms)
}

/// Loss terms over all items, evaluated without touching the parameters.
pub fn full_loss(params: &HeadParameters, problem: &Problem<'_>) -> Result<(f64, f64)> {
    let all: Vec<usize> = (0..problem.features.len()).collect();
    let terms = batch_loss(params, problem, &all)?;
    Ok((terms.data_fit, terms.constraint))
}

/// One shuffled mini-batch pass over the head. The estimates are constants here.
pub fn theta_epoch(
    params: &mut HeadParameters,
    problem: &Problem<'_>,
    config: &CalibrationConfig,
    rng: &mut Stream,
) -> Result<()> {
    let mut order: Vec<usize> = (0..problem.features.len()).collect();
    order.shuffle(rng);
    let mut grads = GradientBundle::zeros_like(params);
    for batch in order.chunks(config.batch_size) {
        batch_gradient(params, problem, batch, &mut grads)?;
        params.optimizer_step(&grads, config.lambda)?;
    }
    Ok(())
}

/// Warm-up gated, synchronous MOS update.
pub fn mu_update(
    mu: &[f64],
    params: &HeadParameters,
    features: &FeatureTable,
    refs: &ReferenceAssignment,
    sos: &[f64],
    config: &CalibrationConfig,
    epoch: usize,
) -> Result<Vec<f64>> {
    if epoch < config.warmup_epochs {
        return Ok(sos.to_vec());
    }
    if mu.len() != features.len() || refs.refs.len() != features.len() {
        return Err(Error::validation("estimate, reference and feature lengths differ"));
    }
    let alpha = config.alpha;
    mu.iter()
        .enumerate()
        .map(|(n, &current)| {
            let r = refs.refs[n];
            let (s, _) = s_theta_forward(params, features.row(n), features.row(r))?;
            let target = s + mu[r];
            Ok((1.0 - alpha) * current + alpha * target)
        })
        .collect()
}

pub fn digest(mu: &[f64]) -> String {
    let mut hasher = Sha256::new();
    for v in mu {
        hasher.update(v.to_le_bytes());
    }
    hasher.finalize()[..8]
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Result of [`calibrate`].
#[derive(Debug, Clone)]
pub struct Calibration {
    pub labels: LabelVector,
    pub trace: Vec<EpochReport>,
    pub head: HeadParameters,
}

/// Drives the whole loop, optionally warm-starting from an existing head.
/// `observer` sees the state after every epoch.
pub fn calibrate_from<F>(
    features: &FeatureTable,
    sos: &LabelVector,
    config: &CalibrationConfig,
    initial_head: Option<HeadParameters>,
    mut observer: F,
) -> Result<Calibration>
where
    F: FnMut(&CalibrationState, &EpochReport),
{
    config.validate()?;
    if sos.len() != features.len() {
        return Err(Error::validation(format!(
            "{} labels for {} feature rows",
            sos.len(),
            features.len()
        )));
    }
    let mut init_rng = sub_rng(config.seed, streams::HEAD_INIT);
    let mut rng = sub_rng(config.seed, streams::ENGINE_LOOP);
    let mut head = match initial_head {
        Some(head) if head.input_dim() != features.dim() => {
            return Err(Error::DimensionMismatch {
                expected: features.dim(),
                actual: head.input_dim(),
            })
        }
        Some(head) => head,
        None => head_init(features.dim(), config.hidden_dims, &mut init_rng)?,
    };
    let y = sos.values();
    let mut state = CalibrationState::new(sos);
    let mut trace = Vec::with_capacity(config.total_epochs);

    for t in 0..config.total_epochs {
        let refs = sample_references(features.len(), &mut rng)?;
        let problem = Problem {
            features,
            sos: y,
            mu: &state.mu,
            refs: &refs,
            beta: config.beta,
        };
        theta_epoch(&mut head, &problem, config, &mut rng)?;
        let (data_fit_loss, constraint_loss) = full_loss(&head, &problem)?;
        let next = mu_update(&state.mu, &head, features, &refs, y, config, t)?;
        state.mu = next;
        state.epoch = t + 1;
        let report = EpochReport {
            epoch: t,
            data_fit_loss,
            constraint_loss,
            total_loss: data_fit_loss + config.beta * constraint_loss,
            mu_digest: digest(&state.mu),
        };
        observer(&state, &report);
        trace.push(report);
    }

    Ok(Calibration {
        labels: LabelVector::from_unit(state.mu, sos.scale())?,
        trace,
        head,
    })
}

pub fn calibrate(
    features: &FeatureTable,
    sos: &LabelVector,
    config: &CalibrationConfig,
) -> Result<Calibration> {
    calibrate_from(features, sos, config, None, |_, _| {})
}

/// Calibrates labels given on their raw scale.
///
/// Labels are min-max normalized, calibrated, and mapped back as
/// `raw + (mu - y) * span`, which equals the inverse affine map but returns
/// an untouched label bit-for-bit.
pub fn calibrate_raw(
    features: &FeatureTable,
    raw: &[f64],
    config: &CalibrationConfig,
) -> Result<(Vec<f64>, Calibration)> {
    let sos = LabelVector::normalize(raw)?;
    let result = calibrate(features, &sos, config)?;
    let span = sos.scale().span();
    let out = raw
        .iter()
        .zip(sos.values())
        .zip(result.labels.values())
        .map(|((&r, &y), &mu)| r + (mu - y) * span)
        .collect();
    Ok((out, result))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::Mlp;
    use crate::rng::seeded_rng;

    fn table(rows: &[Vec<f64>]) -> FeatureTable {
        let ids = (0..rows.len()).map(|i| format!("i{i}")).collect();
        FeatureTable::from_rows(ids, rows).unwrap()
    }

    #[test]
    fn two_items_reference_each_other() {
        let mut rng = seeded_rng(1);
        for _ in 0..50 {
            assert_eq!(sample_references(2, &mut rng).unwrap().refs, vec![1, 0]);
        }
        assert!(matches!(sample_references(1, &mut rng), Err(Error::NoReference(1))));
    }

    #[test]
    fn reference_frequencies_are_uniform() {
        let mut rng = seeded_rng(2);
        let mut counts = [[0usize; 3]; 3];
        let draws = 30_000;
        for _ in 0..draws {
            let a = sample_references(3, &mut rng).unwrap();
            for (n, &r) in a.refs.iter().enumerate() {
                counts[n][r] += 1;
            }
        }
        for (n, row) in counts.iter().enumerate() {
            assert_eq!(row[n], 0);
            for (r, &c) in row.iter().enumerate() {
                if r != n {
                    let f = c as f64 / draws as f64;
                    assert!((f - 0.5).abs() < 0.02, "slot {n} ref {r}: {f}");
                }
            }
        }
    }

    #[test]
    fn no_self_reference() {
        let mut rng = seeded_rng(3);
        let mut total = 0;
        while total < 100_000 {
            let a = sample_references(7, &mut rng).unwrap();
            a.validate().unwrap();
            total += 7;
        }
    }

    /// Single-layer linear head whose output is its bias, so `S` can be pinned.
    fn constant_head(dim: usize, s: f64) -> Mlp {
        let mut net = Mlp::new(&[dim, 1], &mut seeded_rng(0)).unwrap();
        net.layers_mut()[0].weights.iter_mut().for_each(|w| *w = 0.0);
        net.layers_mut()[0].bias[0] = s;
        net
    }

    #[test]
    fn batch_loss_hand_value() {
        let features = table(&[vec![0.0], vec![1.0]]);
        let head = constant_head(1, 0.1);
        let refs = ReferenceAssignment { refs: vec![1, 0] };
        let problem = Problem {
            features: &features,
            sos: &[0.5, 0.3],
            mu: &[0.5, 0.3],
            refs: &refs,
            beta: 1.0 / 9.0,
        };
        let terms = batch_loss(&head, &problem, &[0]).unwrap();
        let expected = 0.01 * (10.0 / 9.0);
        assert!((terms.loss - expected).abs() < 1e-15, "{}", terms.loss);
        assert!((terms.loss - 0.011111).abs() < 1e-6);
    }

    #[test]
    fn warmup_regime_terms_match_and_beta_zero() {
        let features = table(&[vec![0.0, 1.0], vec![1.0, 0.5], vec![0.2, 0.2]]);
        let head = head_init(2, (3, 2), &mut seeded_rng(4)).unwrap();
        let refs = ReferenceAssignment { refs: vec![2, 0, 1] };
        let y = [0.2, 0.7, 0.4];
        let problem = Problem {
            features: &features,
            sos: &y,
            mu: &y,
            refs: &refs,
            beta: 0.0,
        };
        let terms = batch_loss(&head, &problem, &[0, 1, 2]).unwrap();
        assert_eq!(terms.data_fit, terms.constraint);
        assert_eq!(terms.loss, terms.data_fit);
    }

    #[test]
    fn mu_update_hand_value_and_gating() {
        let features = table(&[vec![0.0], vec![1.0]]);
        let head = constant_head(1, 0.2);
        let refs = ReferenceAssignment { refs: vec![1, 0] };
        let config = CalibrationConfig::default();
        let mu = [0.5, 0.5];
        let sos = [0.9, 0.1];
        let out = mu_update(&mu, &head, &features, &refs, &sos, &config, 1).unwrap();
        assert!((out[0] - 0.52).abs() < 1e-15);
        let gated = mu_update(&mu, &head, &features, &refs, &sos, &config, 0).unwrap();
        assert_eq!(gated, sos.to_vec());
        let frozen = CalibrationConfig { alpha: 0.0, ..config };
        let same = mu_update(&mu, &head, &features, &refs, &sos, &frozen, 5).unwrap();
        assert_eq!(same, mu.to_vec());
    }

    #[test]
    fn mismatched_inputs_rejected() {
        let features = table(&[vec![0.0], vec![1.0]]);
        let sos = LabelVector::normalize(&[0.0, 1.0, 2.0]).unwrap();
        assert!(calibrate(&features, &sos, &CalibrationConfig::default()).is_err());
        let bad = ReferenceAssignment { refs: vec![0, 0] };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn digest_is_stable_and_sensitive() {
        assert_eq!(digest(&[0.1, 0.2]), digest(&[0.1, 0.2]));
        assert_ne!(digest(&[0.1, 0.2]), digest(&[0.1, 0.2000001]));
        assert_eq!(digest(&[]).len(), 16);
    }
}
