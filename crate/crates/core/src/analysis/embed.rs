use serde::{Deserialize, Serialize};

use super::svg::{Svg, PALETTE};
use super::tsne::{tsne, TsneConfig};
use crate::encoding::EventWindow;
use crate::error::{Error, Result};
use crate::nets::{Mode, ModelParams, ModelSpec, Network, EMBEDDING_DIM};

const CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedPoint {
    pub x: f64,
    pub y: f64,
    pub label: usize,
    pub log_id: String,
    pub start: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingPlot {
    pub class_names: Vec<String>,
    pub points: Vec<EmbeddedPoint>,
    pub config: TsneConfig,
    pub kl_initial: f64,
    pub kl_final: f64,
    /// Largest gap between a row's affinity entropy and ln(perplexity).
    pub max_entropy_error: f64,
}

/// Penultimate 16-unit activations (eval mode), row-major `n × 16`.
pub fn embeddings(
    spec: &ModelSpec,
    params: &ModelParams,
    windows: &[EventWindow],
) -> Result<Vec<f64>> {
    let net = Network::new(spec)?;
    net.check_params(params)?;
    let mut out = Vec::with_capacity(windows.len() * EMBEDDING_DIM);
    for chunk in windows.chunks(CHUNK) {
        let refs: Vec<&EventWindow> = chunk.iter().collect();
        out.extend(net.forward(params, &refs, Mode::Eval)?.embedding);
    }
    Ok(out)
}

/// Embeds the windows' penultimate activations with t-SNE and labels each
/// point with its ground-truth class.
pub fn embed(
    spec: &ModelSpec,
    params: &ModelParams,
    windows: &[EventWindow],
    cfg: &TsneConfig,
) -> Result<EmbeddingPlot> {
    let e = embeddings(spec, params, windows)?;
    let out = tsne(&e, windows.len(), EMBEDDING_DIM, cfg)?;
    let points = out
        .indices
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            let w = &windows[i];
            let [x, y] = out.point(k);
            EmbeddedPoint {
                x,
                y,
                label: w.label(spec.target),
                log_id: w.log_id.clone(),
                start: w.start,
            }
        })
        .collect();
    Ok(EmbeddingPlot {
        class_names: spec.target.class_names(),
        points,
        config: cfg.clone(),
        kl_initial: out.kl_initial,
        kl_final: out.kl_final,
        max_entropy_error: out.max_entropy_error(cfg.perplexity),
    })
}

impl EmbeddingPlot {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y,label,class,log_id,start\n");
        for p in &self.points {
            s.push_str(&format!(
                "{:.6},{:.6},{},{},{},{}\n",
                p.x, p.y, p.label, self.class_names[p.label], p.log_id, p.start
            ));
        }
        s
    }

    /// Scatter colored by class with a legend; one circle per point.
    pub fn to_svg(&self, title: &str) -> String {
        let (size, margin, legend) = (600.0, 40.0, 180.0);
        let mut svg = Svg::new(size + 2.0 * margin + legend, size + 2.0 * margin);
        svg.text(margin + size / 2.0, 25.0, 15.0, "middle", title);
        let ext = self
            .points
            .iter()
            .map(|p| p.x.abs().max(p.y.abs()))
            .fold(0.0, f64::max)
            .max(1e-12);
        let map = |v: f64| margin + size / 2.0 + v / ext * size / 2.0;
        for p in &self.points {
            svg.circle(map(p.x), map(-p.y), 2.5, PALETTE[p.label % PALETTE.len()]);
        }
        for (c, name) in self.class_names.iter().enumerate() {
            let y = margin + 20.0 * c as f64;
            svg.rect(
                size + 2.0 * margin,
                y,
                12.0,
                12.0,
                PALETTE[c % PALETTE.len()],
            );
            svg.text(size + 2.0 * margin + 18.0, y + 11.0, 12.0, "start", name);
        }
        svg.finish()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpread {
    pub label: usize,
    pub class: String,
    pub count: usize,
    pub centroid: [f64; 2],
    /// Mean distance to the class centroid.
    pub dispersion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpreadStats {
    /// Ascending by dispersion.
    pub classes: Vec<ClassSpread>,
    /// Mean pairwise distance between class centroids.
    pub centroid_separation: f64,
    /// Mean of the per-class dispersions.
    pub mean_dispersion: f64,
}

impl SpreadStats {
    /// Centroid separation over within-class spread; above 1 means classes
    /// sit further apart than their points scatter.
    pub fn separation_ratio(&self) -> f64 {
        self.centroid_separation / self.mean_dispersion
    }
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

pub fn spread_stats(plot: &EmbeddingPlot) -> Result<SpreadStats> {
    let c = plot.class_names.len();
    let mut sums = vec![([0.0; 2], 0usize); c];
    for p in &plot.points {
        let s = sums
            .get_mut(p.label)
            .ok_or_else(|| Error::Input(format!("label {} outside {c} classes", p.label)))?;
        s.0[0] += p.x;
        s.0[1] += p.y;
        s.1 += 1;
    }
    let present: Vec<usize> = (0..c).filter(|&k| sums[k].1 > 0).collect();
    if present.len() < 2 {
        return Err(Error::Input(
            "spread statistics need at least two classes".into(),
        ));
    }
    let centroid = |k: usize| {
        [
            sums[k].0[0] / sums[k].1 as f64,
            sums[k].0[1] / sums[k].1 as f64,
        ]
    };
    let mut spread = vec![0.0; c];
    for p in &plot.points {
        spread[p.label] += distance([p.x, p.y], centroid(p.label));
    }
    let mut classes: Vec<ClassSpread> = present
        .iter()
        .map(|&k| ClassSpread {
            label: k,
            class: plot.class_names[k].clone(),
            count: sums[k].1,
            centroid: centroid(k),
            dispersion: spread[k] / sums[k].1 as f64,
        })
        .collect();
    let mut sep = 0.0;
    let mut pairs = 0;
    for (i, a) in classes.iter().enumerate() {
        for b in &classes[i + 1..] {
            sep += distance(a.centroid, b.centroid);
            pairs += 1;
        }
    }
    let mean_dispersion = classes.iter().map(|s| s.dispersion).sum::<f64>() / classes.len() as f64;
    classes.sort_by(|a, b| {
        a.dispersion
            .total_cmp(&b.dispersion)
            .then(a.label.cmp(&b.label))
    });
    Ok(SpreadStats {
        classes,
        centroid_separation: sep / pairs as f64,
        mean_dispersion,
    })
}

impl SpreadStats {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("class,count,centroid_x,centroid_y,dispersion\n");
        for c in &self.classes {
            s.push_str(&format!(
                "{},{},{:.6},{:.6},{:.6}\n",
                c.class, c.count, c.centroid[0], c.centroid[1], c.dispersion
            ));
        }
        s
    }
}
