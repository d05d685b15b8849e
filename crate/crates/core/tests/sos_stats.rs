use pc3::rng::seeded_rng;
use pc3::sos::{fos_mean, mix_bias_rate, synthesize_sos, HistogramBin};
use pc3::{Annotation, Protocol, RatingRecord};

const DRAWS: usize = 20_000;

fn record(annotation: Annotation) -> RatingRecord {
    RatingRecord {
        item_id: "x".into(),
        annotation,
        ground_truth_mos: None,
    }
}

fn sample(rec: &RatingRecord, protocol: Protocol, seed: u64) -> Vec<f64> {
    // One record repeated: a single call draws once per record.
    let recs = vec![rec.clone(); DRAWS];
    synthesize_sos(&recs, protocol, &mut seeded_rng(seed)).unwrap()
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0))
}

fn assert_unbiased(draws: &[f64], expected: f64, population_var: f64) {
    let (m, _) = mean_var(draws);
    let se = (population_var / draws.len() as f64).sqrt();
    assert!((m - expected).abs() < 3.0 * se, "mean {m} vs {expected} (se {se})");
}

#[test]
fn raw_sample_is_unbiased() {
    let scores = vec![1.0, 2.0, 2.0, 4.0, 5.0];
    let mean = 2.8;
    let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / 5.0;
    let draws = sample(&record(Annotation::RawScores(scores)), Protocol::RawSample, 1);
    assert_unbiased(&draws, mean, var);
}

#[test]
fn gaussian_is_unbiased_with_the_given_spread() {
    let draws = sample(&record(Annotation::Gaussian { mos: 3.2, std: 0.7 }), Protocol::Gaussian, 2);
    assert_unbiased(&draws, 3.2, 0.49);
    let (_, v) = mean_var(&draws);
    assert!((v - 0.49).abs() < 0.03, "variance {v}");
}

#[test]
fn empirical_is_unbiased() {
    let bins = vec![
        HistogramBin { value: 1.0, count: 2.0 },
        HistogramBin { value: 3.0, count: 0.0 },
        HistogramBin { value: 4.0, count: 6.0 },
        HistogramBin { value: 5.0, count: 2.0 },
    ];
    let mean = (2.0 + 24.0 + 10.0) / 10.0;
    let var = (2.0 * (1.0f64 - mean).powi(2) + 6.0 * (4.0f64 - mean).powi(2) + 2.0 * (5.0f64 - mean).powi(2)) / 10.0;
    let draws = sample(&record(Annotation::Histogram(bins)), Protocol::Empirical, 3);
    assert!(draws.iter().all(|d| *d != 3.0), "zero-count bin was drawn");
    assert_unbiased(&draws, mean, var);
}

#[test]
fn fos_variance_shrinks_with_subjects() {
    let scores: Vec<f64> = (0..8).map(|i| (i * i % 7) as f64).collect();
    let recs = vec![record(Annotation::RawScores(scores)); DRAWS];
    let mut prev = f64::INFINITY;
    for k in 1..=8 {
        let (_, v) = mean_var(&fos_mean(&recs, k, &mut seeded_rng(k as u64)).unwrap());
        assert!(v < prev, "k={k}: variance {v} not below {prev}");
        prev = v;
    }
    assert!(prev < 1e-20, "k = all subjects must be deterministic");
}

#[test]
fn fos_with_one_subject_matches_raw_sample() {
    let scores = vec![1.0, 2.0, 2.0, 5.0];
    let rec = record(Annotation::RawScores(scores));
    let recs = vec![rec.clone(); DRAWS];
    let fos = fos_mean(&recs, 1, &mut seeded_rng(10)).unwrap();
    let raw = sample(&rec, Protocol::RawSample, 11);
    for (value, p) in [(1.0, 0.25), (2.0, 0.5), (5.0, 0.25)] {
        let f = fos.iter().filter(|x| **x == value).count() as f64 / DRAWS as f64;
        let r = raw.iter().filter(|x| **x == value).count() as f64 / DRAWS as f64;
        let tol = 4.0 * (p * (1.0 - p) / DRAWS as f64).sqrt();
        assert!((f - p).abs() < tol && (r - p).abs() < tol, "{value}: fos {f} raw {r}");
    }
}

#[test]
fn bias_rate_replaces_exact_count() {
    let mos: Vec<f64> = (0..101).map(|i| i as f64).collect();
    let sos: Vec<f64> = mos.iter().map(|m| -m - 1.0).collect();
    for (rate, expected) in [(0.0, 0), (0.6, 61), (0.8, 81), (1.0, 101)] {
        let mixed = mix_bias_rate(&mos, &sos, rate, &mut seeded_rng(0)).unwrap();
        assert_eq!(mixed.iter().filter(|v| **v < 0.0).count(), expected);
        for ((m, s), x) in mos.iter().zip(&sos).zip(&mixed) {
            assert!(x == m || x == s);
        }
    }
}
