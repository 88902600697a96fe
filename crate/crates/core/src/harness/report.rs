//! Summary tables (text and JSON) and the optional SVG charts.

use std::fmt::Write as _;

use serde::Serialize;

use super::runner::Summary;
use crate::prompt_bank::PromptMode;
use crate::trainer::EpochMetrics;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub variant: PromptMode,
    /// Mean target accuracy over seeds; `None` when the row failed.
    pub accuracy: Option<f64>,
    pub per_seed: Vec<Option<f64>>,
    /// Accuracy minus the MANUAL row.
    pub delta: Option<f64>,
    pub failed: Option<String>,
}

impl AblationRow {
    pub(crate) fn from_summary(variant: PromptMode, s: Summary) -> Self {
        Self {
            variant,
            accuracy: s.mean,
            per_seed: s.per_seed,
            delta: None,
            failed: s.failed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationTable {
    pub seeds: Vec<u64>,
    /// First row is the MANUAL baseline.
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn new(seeds: Vec<u64>, mut rows: Vec<AblationRow>) -> Self {
        let baseline = rows
            .iter()
            .find(|r| r.variant == PromptMode::Manual)
            .and_then(|r| r.accuracy);
        for r in &mut rows {
            r.delta = baseline.zip(r.accuracy).map(|(b, a)| a - b);
        }
        Self { seeds, rows }
    }

    pub fn row(&self, variant: PromptMode) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == variant)
    }

    pub fn accuracy(&self, variant: PromptMode) -> Option<f64> {
        self.row(variant).and_then(|r| r.accuracy)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("context ablation, target accuracy (%), seeds {:?}\n", self.seeds);
        let _ = writeln!(out, "{:<20} {:>9} {:>9}", "variant", "accuracy", "delta");
        for r in &self.rows {
            match (r.accuracy, &r.failed) {
                (Some(a), _) => {
                    let delta = r.delta.map_or("-".to_string(), |d| format!("({:+.2})", 100.0 * d));
                    let _ = writeln!(out, "{:<20} {:>9.2} {:>9}", r.variant.as_str(), 100.0 * a, delta);
                }
                (None, Some(msg)) => {
                    let _ = writeln!(out, "{:<20} {:>9} {:>9}  {msg}", r.variant.as_str(), "FAILED", "-");
                }
                (None, None) => {
                    let _ = writeln!(out, "{:<20} {:>9} {:>9}", r.variant.as_str(), "-", "-");
                }
            }
        }
        out
    }

    pub fn to_svg(&self) -> String {
        let bars: Vec<(String, f64)> = self
            .rows
            .iter()
            .map(|r| (r.variant.as_str().to_string(), r.accuracy.unwrap_or(0.0)))
            .collect();
        bar_chart("target accuracy by prompt structure", &bars)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub label: String,
    pub mode: PromptMode,
    pub m1: usize,
    pub m2: usize,
    pub tau: f64,
    pub accuracy: Option<f64>,
    pub per_seed: Vec<Option<f64>>,
    /// Mean accepted pseudo-label count over seeds.
    pub accepted: Option<f64>,
    pub failed: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub seeds: Vec<u64>,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn new(seeds: Vec<u64>, rows: Vec<SweepRow>) -> Self {
        Self { seeds, rows }
    }

    /// Largest minus smallest row accuracy; `None` if any row failed.
    pub fn spread(&self) -> Option<f64> {
        let accs: Option<Vec<f64>> = self.rows.iter().map(|r| r.accuracy).collect();
        let accs = accs?;
        let max = accs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = accs.iter().copied().fold(f64::INFINITY, f64::min);
        accs.first().map(|_| max - min)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("sweep, target accuracy (%), seeds {:?}\n", self.seeds);
        let _ = writeln!(
            out,
            "{:<18} {:<20} {:>9} {:>9}",
            "point", "mode", "accuracy", "accepted"
        );
        for r in &self.rows {
            let acc = r.accuracy.map_or("FAILED".to_string(), |a| format!("{:.2}", 100.0 * a));
            let accepted = r.accepted.map_or("-".to_string(), |a| format!("{a:.1}"));
            let _ = write!(
                out,
                "{:<18} {:<20} {:>9} {:>9}",
                r.label,
                r.mode.as_str(),
                acc,
                accepted
            );
            if let Some(msg) = &r.failed {
                let _ = write!(out, "  {msg}");
            }
            out.push('\n');
        }
        if let Some(s) = self.spread() {
            let _ = writeln!(out, "spread {:.2} points", 100.0 * s);
        }
        out
    }

    pub fn to_svg(&self) -> String {
        let bars: Vec<(String, f64)> = self
            .rows
            .iter()
            .map(|r| (r.label.clone(), r.accuracy.unwrap_or(0.0)))
            .collect();
        bar_chart("target accuracy per sweep point", &bars)
    }
}

/// Vertical bars for values in `[0, 1]`.
pub fn bar_chart(title: &str, bars: &[(String, f64)]) -> String {
    let (h, bw, gap) = (200.0, 40.0, 30.0);
    let width = 60.0 + (bw + gap) * bars.len() as f64;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{:.0}\">\n",
        h + 90.0
    );
    let _ = writeln!(svg, "<text x=\"10\" y=\"16\" font-size=\"13\">{title}</text>");
    for (i, (label, v)) in bars.iter().enumerate() {
        let x = 40.0 + i as f64 * (bw + gap);
        let bh = v.clamp(0.0, 1.0) * h;
        let _ = writeln!(
            svg,
            "<rect x=\"{x:.1}\" y=\"{:.1}\" width=\"{bw}\" height=\"{bh:.1}\" fill=\"#1f77b4\"/>",
            30.0 + h - bh
        );
        let _ = writeln!(
            svg,
            "<text x=\"{x:.1}\" y=\"{:.1}\" font-size=\"10\">{:.1}</text>",
            25.0 + h - bh,
            100.0 * v
        );
        let _ = writeln!(
            svg,
            "<text x=\"{x:.1}\" y=\"{:.1}\" font-size=\"9\" transform=\"rotate(30 {x:.1} {:.1})\">{label}</text>",
            h + 45.0,
            h + 45.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Source and target loss per epoch.
pub fn loss_curve(metrics: &[EpochMetrics]) -> String {
    let (w, h) = (400.0, 200.0);
    let max = metrics.iter().flat_map(|m| [m.ls, m.lu]).fold(1e-12, f64::max);
    let n = metrics.len().max(2) as f64 - 1.0;
    let path = |f: &dyn Fn(&EpochMetrics) -> f64| {
        metrics
            .iter()
            .enumerate()
            .map(|(i, m)| format!("{:.1},{:.1}", 40.0 + w * i as f64 / n, 20.0 + h - h * f(m) / max))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0}\" height=\"{:.0}\">\n",
        w + 80.0,
        h + 60.0
    );
    let _ = writeln!(
        svg,
        "<polyline fill=\"none\" stroke=\"#1f77b4\" points=\"{}\"/>",
        path(&|m| m.ls)
    );
    let _ = writeln!(
        svg,
        "<polyline fill=\"none\" stroke=\"#d62728\" points=\"{}\"/>",
        path(&|m| m.lu)
    );
    let _ = writeln!(
        svg,
        "<text x=\"40\" y=\"{:.0}\" font-size=\"11\" fill=\"#1f77b4\">L_s</text>",
        h + 45.0
    );
    let _ = writeln!(
        svg,
        "<text x=\"90\" y=\"{:.0}\" font-size=\"11\" fill=\"#d62728\">L_u</text>",
        h + 45.0
    );
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(variant: PromptMode, acc: Option<f64>) -> AblationRow {
        AblationRow {
            variant,
            accuracy: acc,
            per_seed: vec![acc],
            delta: None,
            failed: acc.is_none().then(|| "diverged".to_string()),
        }
    }

    #[test]
    fn deltas_are_against_manual() {
        let t = AblationTable::new(
            vec![0],
            vec![
                row(PromptMode::Manual, Some(0.8)),
                row(PromptMode::Unified, Some(0.9)),
                row(PromptMode::UnifiedDsc, None),
            ],
        );
        assert_eq!(t.rows[0].delta, Some(0.0));
        assert!((t.rows[1].delta.unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(t.rows[2].delta, None);
        let text = t.to_text();
        assert!(text.contains("FAILED"));
        assert!(text.contains("(+10.00)"));
        assert!(t.to_svg().starts_with("<svg"));
    }

    #[test]
    fn sweep_spread() {
        let mk = |acc| SweepRow {
            label: "x".into(),
            mode: PromptMode::UnifiedDsc,
            m1: 1,
            m2: 1,
            tau: 0.5,
            accuracy: acc,
            per_seed: vec![acc],
            accepted: Some(3.0),
            failed: None,
        };
        let t = SweepTable::new(vec![0], vec![mk(Some(0.9)), mk(Some(0.95)), mk(Some(0.92))]);
        assert!((t.spread().unwrap() - 0.05).abs() < 1e-12);
        let t = SweepTable::new(vec![0], vec![mk(Some(0.9)), mk(None)]);
        assert_eq!(t.spread(), None);
    }
}
