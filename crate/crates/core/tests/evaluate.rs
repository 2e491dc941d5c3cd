mod common;

use armcal::evaluate::*;
use armcal::identify::{IdentifierConfigs, Method};
use armcal::measurement::residuals;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::scenario;

fn loop_oracle(v: &[f64]) -> (f64, f64, f64) {
    let (mut sq, mut abs, mut max) = (0.0, 0.0, 0.0);
    for e in v {
        sq += e * e;
        abs += e.abs();
        if e.abs() > max {
            max = e.abs();
        }
    }
    let n = v.len() as f64;
    ((sq / n).sqrt(), abs / n, max)
}

#[test]
fn metrics_match_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..1000 {
        let len = rng.random_range(1..200);
        let v: Vec<f64> = (0..len).map(|_| rng.random_range(-5.0..5.0)).collect();
        let m = compute_metrics(&v).unwrap();
        let (rmse, std, max) = loop_oracle(&v);
        assert!((m.rmse - rmse).abs() <= 1e-12 && (m.std - std).abs() <= 1e-12 && m.max == max);
        assert!(m.max >= m.rmse && m.max >= m.std);
    }
    let big: Vec<f64> = (0..10_000).map(|_| rng.random_range(-3.0..3.0)).collect();
    let m = compute_metrics(&big).unwrap();
    let (rmse, std, max) = loop_oracle(&big);
    assert!((m.rmse - rmse).abs() <= 1e-12 && (m.std - std).abs() <= 1e-12 && m.max == max);
}

#[test]
fn split_of_120_is_96_24_partition() {
    let s = scenario(42, 120, 5, 0.1, None, 0.0);
    let (train, test) = split_dataset(&s.train, TRAIN_FRACTION, 7).unwrap();
    assert_eq!((train.len(), test.len()), (96, 24));
    let key = |q: &armcal::measurement::Sample| format!("{:?}", q);
    let mut joined: Vec<String> = train.samples().iter().chain(test.samples()).map(key).collect();
    let mut original: Vec<String> = s.train.samples().iter().map(key).collect();
    joined.sort();
    original.sort();
    assert_eq!(joined, original);
    let (again, _) = split_dataset(&s.train, TRAIN_FRACTION, 7).unwrap();
    assert_eq!(again.samples(), train.samples());
    let (other, _) = split_dataset(&s.train, TRAIN_FRACTION, 8).unwrap();
    assert_ne!(other.samples(), train.samples());
}

#[test]
fn split_sizes_follow_floor_and_ceil() {
    for n in [5, 7, 10, 33] {
        let s = scenario(43, n, 5, 0.1, None, 0.0);
        let (train, test) = split_dataset(&s.train, TRAIN_FRACTION, 1).unwrap();
        assert_eq!(train.len(), (0.8 * n as f64).floor() as usize);
        assert_eq!(test.len(), n - train.len());
    }
    let tiny = scenario(43, 4, 5, 0.1, None, 0.0);
    assert!(split_dataset(&tiny.train, TRAIN_FRACTION, 1).is_err());
}

#[test]
fn empty_comparison_has_only_before_row() {
    let s = scenario(44, 96, 24, 0.1, Some(2.1), 0.0);
    let report = compare_table(&[], &s.train, &s.test, &s.model, &s.nominal, &IdentifierConfigs::default(), vec![44]).unwrap();
    assert!(report.rows.is_empty());
    let expected = compute_metrics(&residuals(&s.model, &s.nominal, &s.test)).unwrap();
    assert_eq!(report.before.metrics.unwrap().test, expected);
    assert!(report.to_text(Split::Test).contains("before"));
}

#[test]
fn failures_are_reported_and_others_continue() {
    let s = scenario(45, 96, 24, 0.1, Some(2.1), 0.0);
    let mut configs = IdentifierConfigs::default();
    configs.pf.r = 0.0;
    let methods = [Calibrator::Base(Method::Pf), Calibrator::Base(Method::Lm)];
    let report = compare_table(&methods, &s.train, &s.test, &s.model, &s.nominal, &configs, vec![45]).unwrap();
    assert!(report.row("pf").unwrap().error.is_some());
    assert!(report.row("lm").unwrap().metrics.is_some());
    let text = report.to_text(Split::Test);
    assert!(text.contains("pf") && text.contains("failed"));
    let csv = report.series_csv();
    assert_eq!(csv.lines().next().unwrap(), "sample,before,lm");
    assert_eq!(csv.lines().count(), 25);
}

#[test]
fn rows_do_not_depend_on_method_order() {
    let s = scenario(46, 96, 24, 0.1, Some(2.1), 0.0);
    let c = IdentifierConfigs::default().with_seed(46);
    let a = [Calibrator::Base(Method::Ekf), Calibrator::Base(Method::Lm)];
    let b = [Calibrator::Base(Method::Lm), Calibrator::Base(Method::Ekf)];
    let ra = compare_table(&a, &s.train, &s.test, &s.model, &s.nominal, &c, vec![46]).unwrap();
    let rb = compare_table(&b, &s.train, &s.test, &s.model, &s.nominal, &c, vec![46]).unwrap();
    for name in ["ekf", "lm"] {
        assert_eq!(ra.row(name), rb.row(name));
    }
}

#[test]
fn report_serializes() {
    let s = scenario(47, 96, 24, 0.1, Some(2.1), 0.0);
    let report = compare_table(&[Calibrator::Base(Method::Lm)], &s.train, &s.test, &s.model, &s.nominal, &IdentifierConfigs::default(), vec![47])
        .unwrap();
    let json = serde_json::to_string(&report).unwrap();
    let back: ComparisonReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, report);
}
