//! Side-by-side regime comparison across seeds.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use fpseg::eval::{median, MetricsReport};
use fpseg::LossMode;

use crate::protocol::REGIME_ORDER;

#[derive(Debug, Clone, PartialEq)]
pub struct RegimeRow {
    pub mode: LossMode,
    pub runs: usize,
    pub iou: f64,
    pub accuracy: f64,
    /// Median IoU per location, in the table's column order.
    pub locations: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub locations: Vec<String>,
    pub rows: Vec<RegimeRow>,
}

impl ComparisonTable {
    /// Medians over all runs of each regime; regimes without runs are omitted.
    pub fn build(runs: &[(LossMode, MetricsReport)]) -> Self {
        let locations: Vec<String> = runs
            .iter()
            .flat_map(|(_, r)| r.per_location.keys().cloned())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let rows = REGIME_ORDER
            .iter()
            .filter_map(|&mode| {
                let mine: Vec<&MetricsReport> = runs.iter().filter(|r| r.0 == mode).map(|r| &r.1).collect();
                let med = |f: &dyn Fn(&MetricsReport) -> Option<f64>| {
                    median(&mine.iter().filter_map(|r| f(r)).collect::<Vec<_>>()).unwrap_or(f64::NAN)
                };
                (!mine.is_empty()).then(|| RegimeRow {
                    mode,
                    runs: mine.len(),
                    iou: med(&|r| Some(r.iou())),
                    accuracy: med(&|r| Some(r.accuracy())),
                    locations: locations
                        .iter()
                        .map(|l| med(&|r| r.per_location.get(l).map(|g| g.counts.iou())))
                        .collect(),
                })
            })
            .collect();
        Self { locations, rows }
    }

    pub fn row(&self, mode: LossMode) -> Option<&RegimeRow> {
        self.rows.iter().find(|r| r.mode == mode)
    }

    /// Markdown table, IoU and accuracy as percentages.
    pub fn render(&self) -> String {
        let mut s = String::from("| regime | runs |");
        for l in &self.locations {
            let _ = write!(s, " {l} IoU |");
        }
        s.push_str(" overall IoU | overall acc |\n|---|---|");
        s.push_str(&"---|".repeat(self.locations.len() + 2));
        s.push('\n');
        for r in &self.rows {
            let _ = write!(s, "| {} | {} |", r.mode, r.runs);
            for v in &r.locations {
                let _ = write!(s, " {:.2} |", 100.0 * v);
            }
            let _ = writeln!(s, " {:.2} | {:.2} |", 100.0 * r.iou, 100.0 * r.accuracy);
        }
        s
    }
}
