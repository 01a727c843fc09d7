use std::fs;

use vsgd::bench::StepTrace;
use vsgd::cli::{format_f64, read_csv, write_csv, CSV_HEADER};
use vsgd::optim::StateSummary;

fn row(t: u64, loss: f64, with_rates: bool) -> StepTrace {
    let rate = |x: f64| with_rates.then_some(x);
    StepTrace {
        t,
        loss,
        grad_norm: loss.sqrt() * 3.0,
        theta_norm: 1.0 / (t as f64 + 3.0),
        summary: StateSummary {
            mean_b_g: rate(1e-8 * (t as f64 + 1.0) / 7.0),
            mean_b_ghat: rate(2.5e17 + t as f64),
            mean_sigma2: rate(0.1 + 0.2),
            ..StateSummary::default()
        },
    }
}

#[test]
fn trace_round_trips_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    let traces: Vec<StepTrace> = (0..50).map(|t| row(t, 1.0 / 3.0f64.powi(t as i32), true)).collect();
    write_csv(&traces, &path).unwrap();
    let back = read_csv(&path).unwrap();
    assert_eq!(back.len(), traces.len());
    for (a, b) in traces.iter().zip(&back) {
        assert_eq!(a.t, b.t);
        assert_eq!(a.loss.to_bits(), b.loss.to_bits());
        assert_eq!(a.grad_norm.to_bits(), b.grad_norm.to_bits());
        assert_eq!(a.theta_norm.to_bits(), b.theta_norm.to_bits());
        assert_eq!(a.summary.mean_b_g.map(f64::to_bits), b.summary.mean_b_g.map(f64::to_bits));
        assert_eq!(a.summary.mean_b_ghat.map(f64::to_bits), b.summary.mean_b_ghat.map(f64::to_bits));
        assert_eq!(a.summary.mean_sigma2.map(f64::to_bits), b.summary.mean_sigma2.map(f64::to_bits));
    }
}

#[test]
fn single_row_gives_header_plus_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("one.csv");
    write_csv(&[row(0, 0.5, true)], &path).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    assert!(!text.contains('\r'));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], CSV_HEADER.join(","));
}

#[test]
fn baseline_rows_leave_rate_columns_empty() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("adam.csv");
    write_csv(&[row(0, 2.0, false), row(1, 1.0, false)], &path).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    assert!(text.lines().skip(1).all(|l| l.ends_with(",,,")));
    let back = read_csv(&path).unwrap();
    assert!(back.iter().all(|r| r.summary.mean_b_g.is_none() && r.summary.mean_sigma2.is_none()));
}

#[test]
fn empty_trace_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    assert!(write_csv(&[], &dir.path().join("empty.csv")).is_err());
}

#[test]
fn float_text_parses_back_exactly() {
    for x in [0.0, -0.0, 1e-300, 3e-6, 1e-5, 0.1, 1.0 / 3.0, 123456.789, 9.99e15, 1e16, -2.5e200, f64::MAX, f64::MIN_POSITIVE] {
        let s = format_f64(x);
        assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{x} -> {s}");
    }
    assert_eq!(format_f64(1e-8), "1e-8");
    assert_eq!(format_f64(0.25), "0.25");
}

#[test]
fn foreign_header_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(&path, "a,b\n1,2\n").unwrap();
    assert!(read_csv(&path).is_err());
}
