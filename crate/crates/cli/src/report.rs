//! Text renderings of evaluation reports and training histories.

use std::fmt::Write as _;

use skelex_core::metrics::{HeadMetrics, MetricsReport};
use skelex_core::train::TrainHistory;

/// Head names in report order.
pub const HEAD_NAMES: [&str; 6] = ["side1", "side2", "side3", "side4", "fused", "ensembled"];

/// Structured text: one `key = value` line per quantity, heads in
/// side1..side4, fused, ensembled order.
pub fn format_report(report: &MetricsReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "images = {}", report.n_images);
    let _ = writeln!(s, "threshold = {}", report.threshold);
    let _ = writeln!(s, "ensemble_weight = {}", report.ensemble_weight);
    let heads: [&HeadMetrics; 6] = [
        &report.side[0],
        &report.side[1],
        &report.side[2],
        &report.side[3],
        &report.fused,
        &report.ensembled,
    ];
    for (name, head) in HEAD_NAMES.iter().zip(heads) {
        let _ = writeln!(s, "{name}.precision = {}", fmt(head.precision));
        let _ = writeln!(s, "{name}.recall = {}", fmt(head.recall));
        let _ = writeln!(s, "{name}.f1 = {}", fmt(head.f1));
    }
    s
}

/// History CSV: one row per epoch. Side F1 columns are NaN for a model
/// without side layers.
pub fn history_csv(history: &TrainHistory) -> String {
    let mut s = String::from("epoch,train_loss,val_loss,lr,f1_side1,f1_side2,f1_side3,f1_side4,f1_fused\n");
    for r in &history.records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.epoch,
            fmt(r.train_loss),
            fmt(r.val_loss),
            fmt(r.lr),
            fmt(r.f1_side[0]),
            fmt(r.f1_side[1]),
            fmt(r.f1_side[2]),
            fmt(r.f1_side[3]),
            fmt(r.f1_fused)
        );
    }
    s
}

fn fmt(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v:.6}")
    }
}
