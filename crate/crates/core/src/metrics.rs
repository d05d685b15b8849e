//! Agreement metrics between predicted and ground-truth quality labels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub srcc: f64,
    pub plcc: f64,
    pub krocc: f64,
    pub mse: f64,
}

impl MetricsReport {
    pub fn fields(&self) -> [f64; 4] {
        [self.srcc, self.plcc, self.krocc, self.mse]
    }

    pub fn from_fields(f: [f64; 4]) -> Self {
        Self {
            srcc: f[0],
            plcc: f[1],
            krocc: f[2],
            mse: f[3],
        }
    }
}

fn check_pair(a: &[f64], b: &[f64], min_len: usize) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::validation(format!(
            "length mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < min_len {
        return Err(Error::validation(format!(
            "need at least {min_len} samples, got {}",
            a.len()
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::non_finite("metric input"));
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Pearson linear correlation.
pub fn plcc(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b, 2)?;
    pearson(a, b)
}

fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 {
        return Err(Error::UndefinedCorrelation("first argument"));
    }
    if sbb == 0.0 {
        return Err(Error::UndefinedCorrelation("second argument"));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks with ties sharing the average of their positions.
pub fn fractional_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && v[order[end]] == v[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation: Pearson correlation of fractional ranks.
pub fn srcc(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b, 2)?;
    pearson(&fractional_ranks(a), &fractional_ranks(b))
}

/// Sum of `t (t - 1) / 2` over runs of equal keys in a sorted sequence.
fn tied_pairs<T: PartialEq>(sorted: &[T]) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Stable merge sort returning the number of inversions.
fn sort_counting_swaps(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = sort_counting_swaps(&mut v[..mid], &mut buf[..mid]);
    swaps += sort_counting_swaps(&mut v[mid..], &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[i] <= v[j] {
            buf[k] = v[i];
            i += 1;
        } else {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Kendall rank correlation, tie-corrected tau-b, in `O(n log n)`.
pub fn krocc(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b, 2)?;
    let n = a.len() as u64;
    let mut pairs: Vec<(f64, f64)> = a.iter().copied().zip(b.iter().copied()).collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));

    let total = n * (n - 1) / 2;
    let ties_a = tied_pairs(&pairs.iter().map(|p| p.0).collect::<Vec<_>>());
    let ties_joint = tied_pairs(&pairs);

    let mut bs: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = vec![0.0; bs.len()];
    let discordant = sort_counting_swaps(&mut bs, &mut buf);
    let ties_b = tied_pairs(&bs);

    if ties_a == total {
        return Err(Error::UndefinedCorrelation("first argument"));
    }
    if ties_b == total {
        return Err(Error::UndefinedCorrelation("second argument"));
    }
    let numerator = total as f64 - ties_a as f64 - ties_b as f64 + ties_joint as f64
        - 2.0 * discordant as f64;
    let denominator = ((total - ties_a) as f64 * (total - ties_b) as f64).sqrt();
    Ok((numerator / denominator).clamp(-1.0, 1.0))
}

/// Mean squared error.
pub fn mse(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b, 1)?;
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64)
}

pub fn evaluate(pred: &[f64], truth: &[f64]) -> Result<MetricsReport> {
    Ok(MetricsReport {
        srcc: srcc(pred, truth)?,
        plcc: plcc(pred, truth)?,
        krocc: krocc(pred, truth)?,
        mse: mse(pred, truth)?,
    })
}

/// Median of a non-empty sample; even counts average the middle two.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::validation("median of an empty list"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Ok(if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    })
}

/// Per-field median over repeats.
pub fn median_report(reports: &[MetricsReport]) -> Result<MetricsReport> {
    if reports.is_empty() {
        return Err(Error::validation("cannot take the median of zero reports"));
    }
    let mut out = [0.0; 4];
    for (k, slot) in out.iter_mut().enumerate() {
        let column: Vec<f64> = reports.iter().map(|r| r.fields()[k]).collect();
        *slot = median(&column)?;
    }
    Ok(MetricsReport::from_fields(out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn srcc_extremes() {
        assert!((srcc(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((srcc(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(fractional_ranks(&[1.0, 2.0, 2.0, 3.0]), vec![1.0, 2.5, 2.5, 4.0]);
        assert_eq!(fractional_ranks(&[5.0, 5.0, 5.0]), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn krocc_small_case() {
        assert_eq!(krocc(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap(), 1.0 / 3.0);
        assert_eq!(krocc(&[1.0, 2.0, 3.0, 4.0], &[4.0, 3.0, 2.0, 1.0]).unwrap(), -1.0);
    }

    #[test]
    fn constant_inputs_are_undefined() {
        let c = [2.0, 2.0, 2.0];
        let v = [1.0, 2.0, 3.0];
        for f in [srcc, plcc, krocc] {
            assert!(matches!(f(&c, &v), Err(Error::UndefinedCorrelation(_))));
            assert!(matches!(f(&v, &c), Err(Error::UndefinedCorrelation(_))));
        }
        assert!(plcc(&[1.0], &[1.0]).is_err());
        assert!(mse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn mse_identity_and_value() {
        let a = [0.1, 0.5, 0.9];
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        assert!((mse(&[0.0, 1.0], &[1.0, 1.0]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn plcc_affine_invariance() {
        let a = [0.3, 1.2, -0.7, 2.2, 0.0];
        let b = [1.0, 0.4, -0.3, 2.0, 0.5];
        let base = plcc(&a, &b).unwrap();
        let moved: Vec<f64> = a.iter().map(|x| 3.5 * x - 2.0).collect();
        assert!((plcc(&moved, &b).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn medians() {
        let r = |x: f64| MetricsReport::from_fields([x; 4]);
        assert_eq!(median_report(&[r(0.4)]).unwrap(), r(0.4));
        assert_eq!(median_report(&[r(0.1), r(0.3), r(0.2)]).unwrap(), r(0.2));
        let even = median_report(&[r(0.1), r(0.2), r(0.3), r(0.4)]).unwrap();
        assert!((even.srcc - 0.25).abs() < 1e-15);
        assert!(median_report(&[]).is_err());
    }
}
