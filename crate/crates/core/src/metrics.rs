//! Evaluation metrics over localization verdicts.
//!
//! Confusion counts are taken at observer-neighbor granularity: every
//! (normal observer, attacker neighbor) pair lands in TP or FN and every
//! (normal observer, normal neighbor) pair in FP or TN. Node-level counts
//! are derived by majority vote across the observers adjacent to each node.

use serde::Serialize;

/// Confusion counts over scored pairs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Confusion {
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
    pub true_negatives: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.true_positives + self.false_positives + self.false_negatives + self.true_negatives
    }

    pub fn add(&mut self, other: &Confusion) {
        self.true_positives += other.true_positives;
        self.false_positives += other.false_positives;
        self.false_negatives += other.false_negatives;
        self.true_negatives += other.true_negatives;
    }

    pub fn precision(&self) -> Option<f64> {
        compute_precision(self.true_positives, self.false_positives)
    }

    pub fn recall(&self) -> Option<f64> {
        compute_recall(self.true_positives, self.false_negatives)
    }

    pub fn f1(&self) -> Option<f64> {
        match (self.precision(), self.recall()) {
            (Some(p), Some(r)) => compute_f1(p, r),
            _ => None,
        }
    }
}

/// `TP/(TP+FP)`; undefined when nothing was flagged.
pub fn compute_precision(tp: u64, fp: u64) -> Option<f64> {
    if tp + fp == 0 {
        None
    } else {
        Some(tp as f64 / (tp + fp) as f64)
    }
}

/// `TP/(TP+FN)`; undefined when no positives exist.
pub fn compute_recall(tp: u64, fn_count: u64) -> Option<f64> {
    if tp + fn_count == 0 {
        None
    } else {
        Some(tp as f64 / (tp + fn_count) as f64)
    }
}

/// `2·P·R/(P+R)`; undefined when both rates are zero.
pub fn compute_f1(precision: f64, recall: f64) -> Option<f64> {
    if precision + recall == 0.0 {
        None
    } else {
        Some(2.0 * precision * recall / (precision + recall))
    }
}

/// Iterations (and, when a per-iteration wall time is known, seconds) from
/// attack onset to the first network alarm; `None` when nothing alarmed.
pub fn detection_time(
    attack_start: usize,
    first_alarm: Option<usize>,
    iter_wall_seconds: Option<f64>,
) -> Option<(usize, Option<f64>)> {
    first_alarm.map(|alarm| {
        let iters = alarm.saturating_sub(attack_start);
        (iters, iter_wall_seconds.map(|w| iters as f64 * w))
    })
}

/// Full evaluation of one experiment run (or one aggregated sweep point).
#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub run_id: String,
    pub seed: u64,
    pub nodes: usize,
    pub attackers: usize,
    /// `|mean target − mean initial state|`; 0 for attack-free runs.
    pub alpha_gap: f64,
    pub instances: usize,
    pub iterations: usize,
    /// Mean network statistic across observers (and trials, when
    /// aggregated).
    pub c1_mean: f64,
    /// Fraction of runs in which at least one observer alarmed.
    pub detection_rate: f64,
    /// Pair-level confusion over localization verdicts.
    pub pairs: Confusion,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    /// Node-level confusion by majority vote across adjacent observers.
    pub nodes_confusion: Confusion,
    /// Network alarms counted only in attack-free runs.
    pub false_alarms: u64,
    pub detection_time_iters: Option<f64>,
    pub detection_time_seconds: Option<f64>,
}

impl MetricsReport {
    pub fn csv_header() -> &'static str {
        "run_id,seed,nodes,attackers,alpha_gap,L,S,c1_mean,detection_rate,tp,fp,fn,tn,precision,recall,f1,false_alarms,det_time_iters,det_time_s"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.run_id,
            self.seed,
            self.nodes,
            self.attackers,
            self.alpha_gap,
            self.instances,
            self.iterations,
            self.c1_mean,
            self.detection_rate,
            self.pairs.true_positives,
            self.pairs.false_positives,
            self.pairs.false_negatives,
            self.pairs.true_negatives,
            fmt_opt(self.precision),
            fmt_opt(self.recall),
            fmt_opt(self.f1),
            self.false_alarms,
            fmt_opt(self.detection_time_iters),
            fmt_opt(self.detection_time_seconds),
        )
    }
}

fn fmt_opt(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v}"),
        None => "undefined".to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_precision_basic() {
        assert_eq!(compute_precision(9, 1), Some(0.9));
        assert_eq!(compute_precision(0, 0), None);
        assert_eq!(compute_precision(0, 5), Some(0.0));
    }

    #[test]
    fn test_recall_basic() {
        assert_eq!(compute_recall(5, 5), Some(0.5));
        assert_eq!(compute_recall(0, 0), None);
        assert_eq!(compute_recall(10, 0), Some(1.0));
    }

    #[test]
    fn test_f1_basic() {
        assert_eq!(compute_f1(1.0, 1.0), Some(1.0));
        assert_eq!(compute_f1(0.0, 0.0), None);
        let f = compute_f1(0.915, 0.835).unwrap();
        assert!((f - 0.8732).abs() < 0.0005);
    }

    #[test]
    fn test_detection_time_cases() {
        assert_eq!(
            detection_time(100, Some(150), Some(0.01)),
            Some((50, Some(0.5)))
        );
        assert_eq!(detection_time(100, Some(100), Some(0.01)), Some((0, Some(0.0))));
        assert_eq!(detection_time(100, None, Some(0.01)), None);
        assert_eq!(detection_time(0, Some(7), None), Some((7, None)));
    }

    #[test]
    fn test_confusion_totals_and_rates() {
        let c = Confusion {
            true_positives: 3,
            false_positives: 1,
            false_negatives: 2,
            true_negatives: 10,
        };
        assert_eq!(c.total(), 16);
        assert_eq!(c.precision(), Some(0.75));
        assert_eq!(c.recall(), Some(0.6));
        let f1 = c.f1().unwrap();
        assert!((f1 - 2.0 * 0.75 * 0.6 / 1.35).abs() < 1e-15);
    }

    #[test]
    fn test_csv_row_uses_undefined_sentinel() {
        let report = MetricsReport {
            run_id: "run-1".into(),
            seed: 1,
            nodes: 4,
            attackers: 0,
            alpha_gap: 0.0,
            instances: 2,
            iterations: 10,
            c1_mean: 0.1,
            detection_rate: 0.0,
            pairs: Confusion::default(),
            precision: None,
            recall: None,
            f1: None,
            nodes_confusion: Confusion::default(),
            false_alarms: 0,
            detection_time_iters: None,
            detection_time_seconds: None,
        };
        let row = report.csv_row();
        assert!(row.contains("undefined"));
        assert_eq!(
            row.split(',').count(),
            MetricsReport::csv_header().split(',').count()
        );
    }
}
