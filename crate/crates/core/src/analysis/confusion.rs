use serde::{Deserialize, Serialize};

use super::svg::Svg;
use crate::error::{Error, Result};

/// Rows are true classes, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub class_names: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

pub fn confusion(
    preds: &[usize],
    labels: &[usize],
    class_names: &[String],
) -> Result<ConfusionMatrix> {
    if preds.len() != labels.len() {
        return Err(Error::Input(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    let c = class_names.len();
    let mut counts = vec![vec![0u64; c]; c];
    for (&p, &l) in preds.iter().zip(labels) {
        if p >= c || l >= c {
            return Err(Error::Input(format!(
                "class index {} outside {c} classes",
                p.max(l)
            )));
        }
        counts[l][p] += 1;
    }
    Ok(ConfusionMatrix {
        class_names: class_names.to_vec(),
        counts,
    })
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.trace() as f64 / self.total().max(1) as f64
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("truth");
        for n in &self.class_names {
            s.push(',');
            s.push_str(n);
        }
        s.push('\n');
        for (n, row) in self.class_names.iter().zip(&self.counts) {
            s.push_str(n);
            for v in row {
                s.push_str(&format!(",{v}"));
            }
            s.push('\n');
        }
        s
    }

    /// Heat map shaded by row-normalized counts.
    pub fn to_svg(&self, title: &str) -> String {
        let c = self.class_names.len();
        let (cell, left, top) = (70.0, 150.0, 60.0);
        let mut svg = Svg::new(left + cell * c as f64 + 20.0, top + cell * c as f64 + 130.0);
        svg.text(left + cell * c as f64 / 2.0, 25.0, 16.0, "middle", title);
        for (i, row) in self.counts.iter().enumerate() {
            let row_total = row.iter().sum::<u64>().max(1) as f64;
            for (j, &v) in row.iter().enumerate() {
                let frac = v as f64 / row_total;
                let shade = (255.0 * (1.0 - frac)).round() as u8;
                let (x, y) = (left + j as f64 * cell, top + i as f64 * cell);
                svg.rect(x, y, cell, cell, &format!("#{shade:02x}{shade:02x}ff"));
                svg.text(
                    x + cell / 2.0,
                    y + cell / 2.0 + 5.0,
                    13.0,
                    "middle",
                    &v.to_string(),
                );
            }
            svg.text(
                left - 8.0,
                top + (i as f64 + 0.5) * cell + 5.0,
                12.0,
                "end",
                &self.class_names[i],
            );
        }
        for (j, n) in self.class_names.iter().enumerate() {
            svg.rotated_text(
                left + (j as f64 + 0.5) * cell,
                top + c as f64 * cell + 14.0,
                12.0,
                n,
            );
        }
        svg.finish()
    }
}
