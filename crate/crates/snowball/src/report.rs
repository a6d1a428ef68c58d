//! Plain-text tables for metrics and benchmark reports.

use std::fmt::Write;

use snowball_core::eval::benchmark::{BenchmarkReport, SYSTEMS};
use snowball_core::eval::Metrics;

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

pub fn render_metrics(m: &Metrics, threshold: f64) -> String {
    let mut s = String::new();
    writeln!(s, "{:>8} {:>8} {:>8} {:>6} {:>6} {:>6}", "P", "R", "F1", "TP", "FP", "FN").unwrap();
    writeln!(s, "{:>8} {:>8} {:>8} {:>6} {:>6} {:>6}", pct(m.precision), pct(m.recall), pct(m.f1), m.tp, m.fp, m.fn_)
        .unwrap();
    writeln!(s, "threshold {threshold}").unwrap();
    s
}

/// Mean precision, recall and F1 per system with one column group per seed
/// count, followed by bootstrapper addition quality and ranking precision.
pub fn render_benchmark(report: &BenchmarkReport) -> String {
    let mut seeds: Vec<usize> = report.summary.iter().map(|r| r.seeds).collect();
    seeds.dedup();
    let trials = report.trials.iter().map(|t| t.trial).max().map_or(0, |t| t + 1);
    let mut s = String::new();
    writeln!(s, "mean over {trials} trials (percent)").unwrap();
    write!(s, "{:<10}", "").unwrap();
    for k in &seeds {
        write!(s, " | {:^22}", format!("{k} seeds")).unwrap();
    }
    writeln!(s).unwrap();
    write!(s, "{:<10}", "model").unwrap();
    for _ in &seeds {
        write!(s, " | {:>6} {:>6} {:>8}", "P", "R", "F1").unwrap();
    }
    writeln!(s).unwrap();
    for system in SYSTEMS {
        write!(s, "{system:<10}").unwrap();
        for &k in &seeds {
            match report.row(system, k) {
                Some(r) => write!(s, " | {:>6} {:>6} {:>8}", pct(r.precision), pct(r.recall), pct(r.f1)).unwrap(),
                None => write!(s, " | {:>22}", "-").unwrap(),
            }
        }
        writeln!(s).unwrap();
    }

    writeln!(s).unwrap();
    writeln!(s, "bootstrapper additions").unwrap();
    for &k in &seeds {
        let rows = report.trials.iter().filter(|t| t.seeds == k);
        let (added, correct) = rows.fold((0, 0), |(a, c), t| (a + t.added, c + t.added_correct));
        let precision = report.addition_precision(k).map_or("-".to_string(), pct);
        writeln!(s, "  {k:>3} seeds: {added} added, {correct} correct, precision {precision}").unwrap();
    }

    let ns: Vec<usize> = report.trials.first().map(|t| t.precision_at.iter().map(|(n, _)| *n).collect()).unwrap_or_default();
    if !ns.is_empty() {
        writeln!(s).unwrap();
        write!(s, "siamese ranking precision   ").unwrap();
        for n in &ns {
            write!(s, " {:>7}", format!("P@{n}")).unwrap();
        }
        writeln!(s).unwrap();
        for &k in &seeds {
            let rows: Vec<_> = report.trials.iter().filter(|t| t.seeds == k).collect();
            write!(s, "  {k:>3} seeds                 ").unwrap();
            for i in 0..ns.len() {
                let mean = rows.iter().map(|t| t.precision_at[i].1).sum::<f64>() / rows.len().max(1) as f64;
                write!(s, " {:>7}", pct(mean)).unwrap();
            }
            writeln!(s).unwrap();
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use snowball_core::eval::benchmark::{summarize, TrialOutcome};

    #[test]
    fn table_lists_every_system_and_seed_count() {
        let m = Metrics::from_counts(3, 1, 1);
        let outcome = |seeds| TrialOutcome {
            trial: 0,
            relation: "R08".into(),
            seeds,
            finetune: m,
            rsn: m,
            distant: m,
            snowball: m,
            added: 4,
            added_correct: 3,
            distant_added: 0,
            distant_added_correct: 0,
            precision_at: vec![(5, 0.8)],
        };
        let trials = vec![outcome(5), outcome(15)];
        let report = BenchmarkReport { summary: summarize(&trials, &[5, 15]), trials, training: Vec::new() };
        let text = render_benchmark(&report);
        for needle in ["finetune", "snowball", "5 seeds", "15 seeds", "75.00", "P@5", "80.00"] {
            assert!(text.contains(needle), "{needle} missing from\n{text}");
        }
        assert_eq!(text.lines().filter(|l| l.starts_with("rsn")).count(), 1);
    }
}
