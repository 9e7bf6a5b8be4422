//! Benchmark rows and their CSV / Markdown / SVG renderings.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub ratio: f64,
    pub seed: u64,
    pub n_selected: usize,
    pub n_classes: usize,
    pub aipc: f64,
    pub overall: f64,
    pub loss: f64,
    pub per_class: Vec<f64>,
    pub per_class_counts: Vec<usize>,
    /// Not written to report files, which must be reproducible byte for byte.
    #[serde(skip)]
    pub wall_time_secs: f64,
}

/// Rows compare equal regardless of wall time.
impl PartialEq for ReportRow {
    fn eq(&self, other: &Self) -> bool {
        self.method == other.method
            && self.ratio == other.ratio
            && self.seed == other.seed
            && self.n_selected == other.n_selected
            && self.n_classes == other.n_classes
            && self.aipc == other.aipc
            && self.overall == other.overall
            && self.loss == other.loss
            && self.per_class == other.per_class
            && self.per_class_counts == other.per_class_counts
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub rows: Vec<ReportRow>,
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

impl BenchmarkReport {
    /// Orders rows by (method, ratio, seed).
    pub fn sort(&mut self) {
        self.rows.sort_by(|a, b| {
            a.method
                .cmp(&b.method)
                .then(a.ratio.total_cmp(&b.ratio))
                .then(a.seed.cmp(&b.seed))
        });
    }

    fn n_classes(&self) -> usize {
        self.rows.iter().map(|r| r.n_classes).max().unwrap_or(0)
    }

    pub fn to_csv(&self) -> String {
        let c = self.n_classes();
        let mut out = String::from("method,ratio,seed,n_selected,aipc,overall,loss");
        for k in 0..c {
            let _ = write!(out, ",acc_{k}");
        }
        for k in 0..c {
            let _ = write!(out, ",count_{k}");
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(
                out,
                "{},{},{},{},{},{:.6},{:.6}",
                r.method, r.ratio, r.seed, r.n_selected, r.aipc, r.overall, r.loss
            );
            for k in 0..c {
                let _ = write!(out, ",{:.6}", r.per_class.get(k).copied().unwrap_or(0.0));
            }
            for k in 0..c {
                let _ = write!(out, ",{}", r.per_class_counts.get(k).copied().unwrap_or(0));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let c = self.n_classes();
        let mut out = String::from("| method | ratio | seed | AIPC | overall |");
        for k in 0..c {
            let _ = write!(out, " c{k} |");
        }
        out.push_str("\n|---|---|---|---|---|");
        out.push_str(&"---|".repeat(c));
        out.push('\n');
        for r in &self.rows {
            let _ = write!(
                out,
                "| {} | {} | {} | {} | {:.2} |",
                r.method,
                r.ratio,
                r.seed,
                r.aipc,
                100.0 * r.overall
            );
            for k in 0..c {
                let _ = write!(out, " {:.1} |", 100.0 * r.per_class.get(k).copied().unwrap_or(0.0));
            }
            out.push('\n');
        }
        out
    }

    /// Seed-averaged per-class accuracy at each ratio for one method.
    pub fn class_curves(&self, method: &str) -> Vec<(f64, Vec<f64>)> {
        let mut by_ratio: BTreeMap<u64, (f64, Vec<f64>, usize)> = BTreeMap::new();
        for r in self.rows.iter().filter(|r| r.method == method) {
            let entry = by_ratio
                .entry(r.ratio.to_bits())
                .or_insert_with(|| (r.ratio, vec![0.0; r.per_class.len()], 0));
            for (acc, &a) in entry.1.iter_mut().zip(&r.per_class) {
                *acc += a;
            }
            entry.2 += 1;
        }
        let mut curves: Vec<(f64, Vec<f64>)> = by_ratio
            .into_values()
            .map(|(ratio, sums, n)| (ratio, sums.into_iter().map(|s| s / n as f64).collect()))
            .collect();
        curves.sort_by(|a, b| a.0.total_cmp(&b.0));
        curves
    }

    pub fn methods(&self) -> Vec<String> {
        let mut m: Vec<String> = self.rows.iter().map(|r| r.method.clone()).collect();
        m.sort();
        m.dedup();
        m
    }

    /// Per-class accuracy vs. sampling fraction, one line per class.
    pub fn class_plot_svg(&self, method: &str) -> String {
        const W: f64 = 640.0;
        const H: f64 = 400.0;
        const L: f64 = 60.0;
        const R: f64 = 130.0;
        const T: f64 = 30.0;
        const B: f64 = 50.0;
        let curves = self.class_curves(method);
        let n_classes = curves.first().map_or(0, |c| c.1.len());
        let (xmin, xmax) = match (curves.first(), curves.last()) {
            (Some(a), Some(b)) if b.0 > a.0 => (a.0, b.0),
            (Some(a), _) => (a.0 - 0.5, a.0 + 0.5),
            _ => (0.0, 1.0),
        };
        let px = |x: f64| L + (x - xmin) / (xmax - xmin) * (W - L - R);
        let py = |y: f64| H - B - y * (H - T - B);

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
        );
        let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="20" font-size="14" text-anchor="middle">{method}: accuracy by class and sample fraction</text>"#,
            W / 2.0
        );
        let _ = writeln!(
            svg,
            r#"<line x1="{L}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
            H - B,
            W - R,
            H - B
        );
        let _ = writeln!(svg, r#"<line x1="{L}" y1="{T}" x2="{L}" y2="{}" stroke="black"/>"#, H - B);
        for tick in 0..=5 {
            let y = tick as f64 / 5.0;
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{:.1}" font-size="11" text-anchor="end">{:.1}</text>"#,
                L - 6.0,
                py(y) + 4.0,
                y
            );
        }
        for (ratio, _) in &curves {
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{}" font-size="11" text-anchor="middle">{ratio}</text>"#,
                px(*ratio),
                H - B + 16.0
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">sample fraction</text>"#,
            (L + W - R) / 2.0,
            H - 12.0
        );
        for class in 0..n_classes {
            let colour = PALETTE[class % PALETTE.len()];
            let points: Vec<String> = curves
                .iter()
                .map(|(x, accs)| format!("{:.1},{:.1}", px(*x), py(accs[class])))
                .collect();
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="{colour}" stroke-width="2" points="{}"/>"#,
                points.join(" ")
            );
            let ly = T + 14.0 * class as f64 + 10.0;
            let _ = writeln!(
                svg,
                r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{colour}" stroke-width="2"/><text x="{}" y="{}" font-size="11">class {class}</text>"#,
                W - R + 10.0,
                W - R + 30.0,
                W - R + 35.0,
                ly + 4.0
            );
        }
        svg.push_str("</svg>\n");
        svg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: &str, ratio: f64, seed: u64, per_class: Vec<f64>) -> ReportRow {
        ReportRow {
            method: method.into(),
            ratio,
            seed,
            n_selected: 10,
            n_classes: per_class.len(),
            aipc: 10.0 / per_class.len() as f64,
            overall: per_class.iter().sum::<f64>() / per_class.len() as f64,
            loss: 0.5,
            per_class_counts: vec![5; per_class.len()],
            per_class,
            wall_time_secs: 1.25,
        }
    }

    #[test]
    fn sort_is_canonical() {
        let mut r = BenchmarkReport {
            rows: vec![row("dqas", 0.1, 0, vec![1.0]), row("dq", 0.2, 1, vec![1.0]), row("dq", 0.1, 2, vec![1.0])],
        };
        r.sort();
        let keys: Vec<(String, f64)> = r.rows.iter().map(|x| (x.method.clone(), x.ratio)).collect();
        assert_eq!(keys, vec![("dq".into(), 0.1), ("dq".into(), 0.2), ("dqas".into(), 0.1)]);
    }

    #[test]
    fn csv_has_no_wall_time() {
        let r = BenchmarkReport { rows: vec![row("dq", 0.1, 0, vec![0.5, 1.0])] };
        let csv = r.to_csv();
        assert_eq!(csv.lines().next().unwrap(), "method,ratio,seed,n_selected,aipc,overall,loss,acc_0,acc_1,count_0,count_1");
        assert!(!csv.contains("1.25"));
    }

    #[test]
    fn curves_average_seeds() {
        let r = BenchmarkReport {
            rows: vec![
                row("dq", 0.1, 0, vec![0.2, 1.0]),
                row("dq", 0.1, 1, vec![0.4, 1.0]),
                row("dq", 0.3, 0, vec![0.8, 1.0]),
            ],
        };
        let c = r.class_curves("dq");
        assert_eq!(c.len(), 2);
        assert!((c[0].1[0] - 0.3).abs() < 1e-12);
        let svg = r.class_plot_svg("dq");
        assert!(svg.starts_with("<svg") && svg.contains("polyline"));
    }
}
