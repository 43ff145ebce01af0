//! Per-epoch metrics and their CSV and SVG renderings.

use std::fmt::Write as _;

use crate::error::{Error, Result};

pub const HISTORY_HEADER: &str = "epoch,train_loss,train_acc,val_loss,val_acc";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainingHistory {
    /// Epoch with the highest validation accuracy; ties go to the earliest.
    pub fn best_epoch(&self) -> Option<usize> {
        let mut best: Option<&EpochRecord> = None;
        for r in &self.records {
            if best.is_none_or(|b| r.val_acc > b.val_acc) {
                best = Some(r);
            }
        }
        best.map(|r| r.epoch)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{HISTORY_HEADER}\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.epoch, r.train_loss, r.train_acc, r.val_loss, r.val_acc
            );
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim_end() == HISTORY_HEADER => {}
            _ => return Err(Error::Data(format!("history must start with '{HISTORY_HEADER}'"))),
        }
        let mut records = Vec::new();
        for (i, line) in lines.enumerate() {
            let n = i + 2;
            let f: Vec<&str> = line.trim_end().split(',').collect();
            let bad = || Error::Data(format!("line {n}: bad history row '{line}'"));
            let [e, tl, ta, vl, va] = f[..] else { return Err(bad()) };
            let num = |v: &str| v.parse::<f64>().map_err(|_| bad());
            let r = EpochRecord {
                epoch: e.parse().map_err(|_| bad())?,
                train_loss: num(tl)?,
                train_acc: num(ta)?,
                val_loss: num(vl)?,
                val_acc: num(va)?,
            };
            if ![r.train_acc, r.val_acc].iter().all(|a| (0.0..=1.0).contains(a)) {
                return Err(Error::Data(format!("line {n}: accuracy outside [0, 1]")));
            }
            records.push(r);
        }
        Ok(TrainingHistory { records })
    }

    /// Line chart of the four series: losses on the left panel, accuracies
    /// on the right.
    pub fn to_svg(&self) -> Result<String> {
        if self.records.is_empty() {
            return Err(Error::Data("cannot chart an empty history".into()));
        }
        let (w, h) = (400.0, 300.0);
        let pad = 40.0;
        let max_epoch = self.records.iter().map(|r| r.epoch).max().unwrap_or(1).max(1) as f64;
        let min_epoch = self.records.iter().map(|r| r.epoch).min().unwrap_or(1) as f64;
        let max_loss = self
            .records
            .iter()
            .flat_map(|r| [r.train_loss, r.val_loss])
            .filter(|v| v.is_finite())
            .fold(0.0f64, f64::max)
            .max(1e-12);
        let x_of = |e: usize| {
            let span = (max_epoch - min_epoch).max(1.0);
            pad + (e as f64 - min_epoch) / span * (w - 2.0 * pad)
        };
        let y_of = |v: f64, top: f64| h - pad - (v / top).clamp(0.0, 1.0) * (h - 2.0 * pad);

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{h}" font-family="sans-serif" font-size="11">"#,
            2.0 * w
        );
        let series: [Series; 4] = [
            ("train_loss", "#1f77b4", |r| r.train_loss, max_loss, 0.0),
            ("val_loss", "#ff7f0e", |r| r.val_loss, max_loss, 0.0),
            ("train_acc", "#2ca02c", |r| r.train_acc, 1.0, w),
            ("val_acc", "#d62728", |r| r.val_acc, 1.0, w),
        ];
        for (panel, title, top) in [(0.0, "loss", max_loss), (w, "accuracy", 1.0)] {
            let _ = writeln!(
                svg,
                r##"<g transform="translate({panel},0)"><rect x="{pad}" y="{pad}" width="{}" height="{}" fill="none" stroke="#888"/><text x="{}" y="20" text-anchor="middle">{title}</text><text x="{}" y="{}">0</text><text x="{}" y="{}">{}</text><text x="{}" y="{}" text-anchor="middle">epoch</text></g>"##,
                w - 2.0 * pad,
                h - 2.0 * pad,
                w / 2.0,
                pad - 25.0,
                h - pad,
                pad - 35.0,
                pad + 4.0,
                format_tick(top),
                w / 2.0,
                h - 10.0
            );
        }
        for (i, (name, colour, get, top, panel)) in series.iter().enumerate() {
            let pts: Vec<String> = self
                .records
                .iter()
                .map(|r| format!("{:.2},{:.2}", x_of(r.epoch), y_of(get(r), *top)))
                .collect();
            let _ = writeln!(
                svg,
                r#"<g class="series" data-series="{name}" transform="translate({panel},0)"><polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#,
                pts.join(" ")
            );
            for p in &pts {
                let (x, y) = p.split_once(',').unwrap_or(("0", "0"));
                let _ = writeln!(svg, r#"<circle cx="{x}" cy="{y}" r="2" fill="{colour}"/>"#);
            }
            let ly = pad + 14.0 * (i % 2) as f64 + 8.0;
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{ly}" fill="{colour}">{name}</text></g>"#,
                w - pad - 70.0
            );
        }
        svg.push_str("</svg>\n");
        Ok(svg)
    }
}

/// Name, colour, accessor, axis maximum and panel offset.
type Series = (&'static str, &'static str, fn(&EpochRecord) -> f64, f64, f64);

fn format_tick(v: f64) -> String {
    if !(0.01..100.0).contains(&v) {
        format!("{v:.2e}")
    } else {
        format!("{v:.2}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hist(n: usize) -> TrainingHistory {
        TrainingHistory {
            records: (1..=n)
                .map(|e| EpochRecord {
                    epoch: e,
                    train_loss: 2.0 / e as f64,
                    train_acc: (e as f64 / n as f64).min(1.0),
                    val_loss: 2.5 / e as f64 + 0.1,
                    val_acc: [0.1, 0.3, 0.3, 0.2][e % 4],
                })
                .collect(),
        }
    }

    #[test]
    fn csv_shape_and_round_trip() {
        let h = hist(50);
        let csv = h.to_csv();
        assert_eq!(csv.lines().count(), 51);
        assert_eq!(csv.lines().next().unwrap(), HISTORY_HEADER);
        assert_eq!(TrainingHistory::from_csv(&csv).unwrap(), h);
    }

    #[test]
    fn best_epoch_ties_to_earliest() {
        assert_eq!(hist(8).best_epoch(), Some(1));
        assert_eq!(TrainingHistory::default().best_epoch(), None);
    }

    #[test]
    fn svg_has_four_labelled_series() {
        let svg = hist(1).to_svg().unwrap();
        for name in ["train_loss", "train_acc", "val_loss", "val_acc"] {
            assert!(svg.contains(&format!("data-series=\"{name}\"")));
            assert!(svg.contains(&format!(">{name}</text>")));
        }
        assert!(TrainingHistory::default().to_svg().is_err());
    }

    #[test]
    fn csv_rejections() {
        assert!(TrainingHistory::from_csv("").is_err());
        assert!(TrainingHistory::from_csv("epoch,loss\n").is_err());
        assert!(TrainingHistory::from_csv(&format!("{HISTORY_HEADER}\n1,0.5,2.0,0.5,0.5\n")).is_err());
    }
}
