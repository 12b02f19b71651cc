//! Exact (dense) t-distributed stochastic neighbor embedding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::Rng;

const ENTROPY_TOLERANCE: f64 = 1e-6;
const MAX_BISECTIONS: usize = 200;
const MIN_GAIN: f64 = 0.01;
const P_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TsneInit {
    /// Seeded Gaussian with standard deviation 1e-4.
    Random,
    /// Projection on the top two principal axes, rescaled to the same spread.
    Pca,
}

impl std::fmt::Display for TsneInit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TsneInit::Random => "random",
            TsneInit::Pca => "pca",
        })
    }
}

impl std::str::FromStr for TsneInit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(TsneInit::Random),
            "pca" => Ok(TsneInit::Pca),
            _ => Err(Error::Schema(format!("unknown t-SNE init `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    /// Iterations run with exaggerated affinities and initial momentum.
    pub exaggeration_iterations: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub seed: u64,
    /// Larger inputs are subsampled to this many points.
    pub max_points: usize,
    pub init: TsneInit,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iterations: 250,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            seed: 42,
            max_points: 5000,
            init: TsneInit::Random,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsneOutput {
    /// Row-major `n × 2`, centered at the origin.
    pub coords: Vec<f64>,
    /// Input rows that were embedded, in order.
    pub indices: Vec<usize>,
    pub kl_initial: f64,
    pub kl_final: f64,
    /// Per-row entropy (nats) of the calibrated conditional affinities.
    pub entropies: Vec<f64>,
    /// All points coincided; `coords` is seeded noise.
    pub degenerate: bool,
}

impl TsneOutput {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn max_entropy_error(&self, perplexity: f64) -> f64 {
        if self.degenerate {
            return 0.0;
        }
        let target = perplexity.ln();
        self.entropies
            .iter()
            .map(|h| (h - target).abs())
            .fold(0.0, f64::max)
    }

    pub fn point(&self, i: usize) -> [f64; 2] {
        [self.coords[2 * i], self.coords[2 * i + 1]]
    }
}

fn squared_distances(x: &[f64], n: usize, d: usize) -> Vec<f64> {
    let mut dist = vec![0.0; n * n];
    for i in 0..n {
        let xi = &x[i * d..(i + 1) * d];
        for j in i + 1..n {
            let s: f64 = xi
                .iter()
                .zip(&x[j * d..(j + 1) * d])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            dist[i * n + j] = s;
            dist[j * n + i] = s;
        }
    }
    dist
}

/// Fills `row` with `exp(-beta·(D - Dmin))` normalized and returns its entropy.
fn gaussian_row(dist: &[f64], skip: usize, beta: f64, row: &mut [f64]) -> f64 {
    let dmin = dist
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != skip)
        .map(|(_, &v)| v)
        .fold(f64::INFINITY, f64::min);
    let mut sum = 0.0;
    let mut weighted = 0.0;
    for (j, (&dv, p)) in dist.iter().zip(row.iter_mut()).enumerate() {
        *p = if j == skip {
            0.0
        } else {
            (-beta * (dv - dmin)).exp()
        };
        sum += *p;
        weighted += *p * (dv - dmin);
    }
    for p in row.iter_mut() {
        *p /= sum;
    }
    sum.ln() + beta * weighted / sum
}

/// Conditional affinities `p(j|i)` (row-major `n × n`, rows sum to 1) with
/// each row's bandwidth bisected so its entropy is `ln(perplexity)`.
/// Returns the matrix and the achieved entropies.
pub fn conditional_affinities(
    x: &[f64],
    n: usize,
    d: usize,
    perplexity: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    validate(x, n, d, perplexity)?;
    let dist = squared_distances(x, n, d);
    let target = perplexity.ln();
    let mut p = vec![0.0; n * n];
    let mut entropies = Vec::with_capacity(n);
    for i in 0..n {
        let di = &dist[i * n..(i + 1) * n];
        let row = &mut p[i * n..(i + 1) * n];
        let (mut lo, mut hi, mut beta) = (0.0, f64::INFINITY, 1.0);
        let mut h = gaussian_row(di, i, beta, row);
        for _ in 0..MAX_BISECTIONS {
            if (h - target).abs() < ENTROPY_TOLERANCE {
                break;
            }
            if h > target {
                lo = beta;
                beta = if hi.is_finite() {
                    (beta + hi) / 2.0
                } else {
                    beta * 2.0
                };
            } else {
                hi = beta;
                beta = (beta + lo) / 2.0;
            }
            h = gaussian_row(di, i, beta, row);
        }
        if (h - target).abs() >= 1e-4 {
            log::warn!("t-SNE row {i}: entropy {h:.6} cannot reach ln(perplexity) {target:.6}");
        }
        entropies.push(h);
    }
    Ok((p, entropies))
}

fn validate(x: &[f64], n: usize, d: usize, perplexity: f64) -> Result<()> {
    if n < 3 {
        return Err(Error::Input(format!(
            "t-SNE needs at least 3 points, got {n}"
        )));
    }
    if d == 0 || x.len() != n * d {
        return Err(Error::Input(format!(
            "{} values do not form {n} rows of width {d}",
            x.len()
        )));
    }
    if !(perplexity > 0.0 && perplexity < n as f64) {
        return Err(Error::Input(format!(
            "perplexity {perplexity} must lie in (0, {n})"
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite t-SNE input".into()));
    }
    Ok(())
}

fn symmetrize(cond: &[f64], n: usize) -> Vec<f64> {
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p[i * n + j] =
                    ((cond[i * n + j] + cond[j * n + i]) / (2.0 * n as f64)).max(P_FLOOR);
            }
        }
    }
    p
}

/// `KL(P || Q)` for the Student-t affinities of layout `y`.
pub fn kl_divergence(p: &[f64], y: &[f64], n: usize) -> f64 {
    let mut z = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let dx = y[2 * i] - y[2 * j];
            let dy = y[2 * i + 1] - y[2 * j + 1];
            z += 2.0 / (1.0 + dx * dx + dy * dy);
        }
    }
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let pij = p[i * n + j];
            let dx = y[2 * i] - y[2 * j];
            let dy = y[2 * i + 1] - y[2 * j + 1];
            let q = (1.0 / (1.0 + dx * dx + dy * dy) / z).max(f64::MIN_POSITIVE);
            kl += pij * (pij / q).ln();
        }
    }
    kl
}

fn center(y: &mut [f64]) {
    let n = y.len() / 2;
    for c in 0..2 {
        let m = y.iter().skip(c).step_by(2).sum::<f64>() / n as f64;
        y.iter_mut().skip(c).step_by(2).for_each(|v| *v -= m);
    }
}

fn random_init(n: usize, rng: &mut Rng) -> Vec<f64> {
    (0..2 * n).map(|_| 1e-4 * rng.normal()).collect()
}

fn pca_init(x: &[f64], n: usize, d: usize, rng: &mut Rng) -> Vec<f64> {
    let mean: Vec<f64> = (0..d)
        .map(|c| (0..n).map(|i| x[i * d + c]).sum::<f64>() / n as f64)
        .collect();
    let mut cov = vec![0.0; d * d];
    for row in x.chunks(d) {
        for a in 0..d {
            for b in 0..d {
                cov[a * d + b] += (row[a] - mean[a]) * (row[b] - mean[b]);
            }
        }
    }
    let mut axes: Vec<Vec<f64>> = Vec::new();
    for _ in 0..2 {
        let mut v: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        for _ in 0..500 {
            let mut w: Vec<f64> = (0..d)
                .map(|a| (0..d).map(|b| cov[a * d + b] * v[b]).sum())
                .collect();
            for u in &axes {
                let dot: f64 = w.iter().zip(u).map(|(a, b)| a * b).sum();
                w.iter_mut().zip(u).for_each(|(a, b)| *a -= dot * b);
            }
            let norm = w.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm == 0.0 {
                break;
            }
            v = w.iter().map(|a| a / norm).collect();
        }
        axes.push(v);
    }
    let mut y = vec![0.0; 2 * n];
    for (i, row) in x.chunks(d).enumerate() {
        for (c, u) in axes.iter().enumerate() {
            y[2 * i + c] = row
                .iter()
                .zip(&mean)
                .zip(u)
                .map(|((a, m), b)| (a - m) * b)
                .sum();
        }
    }
    let sd = (y.iter().step_by(2).map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    if sd > 0.0 {
        y.iter_mut().for_each(|v| *v *= 1e-4 / sd);
    }
    y
}

/// Embeds the rows of `x` (`n × d`, row-major) in two dimensions.
pub fn tsne(x: &[f64], n: usize, d: usize, cfg: &TsneConfig) -> Result<TsneOutput> {
    validate(x, n, d, cfg.perplexity)?;
    if cfg.max_points < 3 || !(cfg.learning_rate > 0.0) {
        return Err(Error::Input(format!("invalid t-SNE config {cfg:?}")));
    }
    let rng = Rng::new(cfg.seed);
    let indices: Vec<usize> = if n > cfg.max_points {
        let mut all: Vec<usize> = (0..n).collect();
        rng.stream("tsne/subsample").shuffle(&mut all);
        let mut kept = all[..cfg.max_points].to_vec();
        kept.sort_unstable();
        kept
    } else {
        (0..n).collect()
    };
    let x: Vec<f64> = indices
        .iter()
        .flat_map(|&i| x[i * d..(i + 1) * d].iter().copied())
        .collect();
    let n = indices.len();
    if cfg.perplexity >= n as f64 {
        return Err(Error::Input(format!(
            "perplexity {} must be below {n} points",
            cfg.perplexity
        )));
    }
    let mut init_rng = rng.stream("tsne/init");
    let first = &x[..d];
    if x.chunks(d).all(|r| r == first) {
        log::warn!("t-SNE input points are all identical; returning a noise layout");
        let mut y = random_init(n, &mut init_rng);
        center(&mut y);
        return Ok(TsneOutput {
            coords: y,
            indices,
            kl_initial: 0.0,
            kl_final: 0.0,
            entropies: vec![((n - 1) as f64).ln(); n],
            degenerate: true,
        });
    }

    let (cond, entropies) = conditional_affinities(&x, n, d, cfg.perplexity)?;
    let p = symmetrize(&cond, n);
    drop(cond);
    let mut y = match cfg.init {
        TsneInit::Random => random_init(n, &mut init_rng),
        TsneInit::Pca => pca_init(&x, n, d, &mut init_rng),
    };
    center(&mut y);
    let kl_initial = kl_divergence(&p, &y, n);

    let mut update = vec![0.0; 2 * n];
    let mut gains = vec![1.0f64; 2 * n];
    let mut attract = vec![0.0; 2 * n];
    let mut repel = vec![0.0; 2 * n];
    for iter in 0..cfg.iterations {
        let early = iter < cfg.exaggeration_iterations;
        let exaggeration = if early { cfg.early_exaggeration } else { 1.0 };
        let momentum = if early {
            cfg.initial_momentum
        } else {
            cfg.final_momentum
        };
        attract.iter_mut().for_each(|v| *v = 0.0);
        repel.iter_mut().for_each(|v| *v = 0.0);
        let mut z = 0.0;
        for i in 0..n {
            let (yi0, yi1) = (y[2 * i], y[2 * i + 1]);
            let prow = &p[i * n..(i + 1) * n];
            let (mut a0, mut a1, mut r0, mut r1) = (0.0, 0.0, 0.0, 0.0);
            for j in i + 1..n {
                let dx = yi0 - y[2 * j];
                let dy = yi1 - y[2 * j + 1];
                let num = 1.0 / (1.0 + dx * dx + dy * dy);
                z += 2.0 * num;
                let pn = prow[j] * num;
                let nn = num * num;
                a0 += pn * dx;
                a1 += pn * dy;
                r0 += nn * dx;
                r1 += nn * dy;
                attract[2 * j] -= pn * dx;
                attract[2 * j + 1] -= pn * dy;
                repel[2 * j] -= nn * dx;
                repel[2 * j + 1] -= nn * dy;
            }
            attract[2 * i] += a0;
            attract[2 * i + 1] += a1;
            repel[2 * i] += r0;
            repel[2 * i + 1] += r1;
        }
        for k in 0..2 * n {
            let grad = 4.0 * (exaggeration * attract[k] - repel[k] / z);
            gains[k] = if (grad > 0.0) != (update[k] > 0.0) {
                gains[k] + 0.2
            } else {
                (gains[k] * 0.8).max(MIN_GAIN)
            };
            update[k] = momentum * update[k] - cfg.learning_rate * gains[k] * grad;
            y[k] += update[k];
        }
        center(&mut y);
        if !z.is_finite() {
            return Err(Error::Numeric(format!(
                "t-SNE diverged at iteration {iter}"
            )));
        }
    }
    let kl_final = kl_divergence(&p, &y, n);
    log::info!("t-SNE on {n} points: KL {kl_initial:.4} -> {kl_final:.4}");
    Ok(TsneOutput {
        coords: y,
        indices,
        kl_initial,
        kl_final,
        entropies,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_points(n: usize, d: usize, seed: u64) -> Vec<f64> {
        let mut rng = Rng::new(seed);
        (0..n * d).map(|_| rng.normal()).collect()
    }

    fn dist(o: &TsneOutput, a: usize, b: usize) -> f64 {
        let (p, q) = (o.point(a), o.point(b));
        ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
    }

    #[test]
    fn affinity_rows_sum_to_one_at_target_entropy() {
        let x = random_points(120, 16, 3);
        let (p, h) = conditional_affinities(&x, 120, 16, 30.0).unwrap();
        for i in 0..120 {
            let s: f64 = p[i * 120..(i + 1) * 120].iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
            assert_eq!(p[i * 120 + i], 0.0);
            assert!((h[i] - 30f64.ln()).abs() < 1e-4, "row {i}: {}", h[i]);
        }
    }

    #[test]
    fn entropy_matches_direct_computation() {
        let x = random_points(40, 5, 9);
        let (p, h) = conditional_affinities(&x, 40, 5, 10.0).unwrap();
        for i in 0..40 {
            let direct: f64 = -p[i * 40..(i + 1) * 40]
                .iter()
                .filter(|&&v| v > 0.0)
                .map(|v| v * v.ln())
                .sum::<f64>();
            assert!((direct - h[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn equilateral_triangle_stays_equilateral() {
        let s = 3f64.sqrt() / 2.0;
        let x = [0.0, 0.0, 1.0, 0.0, 0.5, s];
        let cfg = TsneConfig {
            perplexity: 2.0,
            ..TsneConfig::default()
        };
        let o = tsne(&x, 3, 2, &cfg).unwrap();
        let d = [dist(&o, 0, 1), dist(&o, 1, 2), dist(&o, 0, 2)];
        let (lo, hi) = (
            d.iter().cloned().fold(f64::MAX, f64::min),
            d.iter().cloned().fold(0.0, f64::max),
        );
        assert!(hi / lo < 1.05, "{d:?}");
    }

    #[test]
    fn kl_decreases_on_random_vectors() {
        let x = random_points(500, 16, 11);
        let o = tsne(&x, 500, 16, &TsneConfig::default()).unwrap();
        assert!(o.kl_final > 0.0);
        assert!(
            o.kl_final < o.kl_initial,
            "{} -> {}",
            o.kl_initial,
            o.kl_final
        );
        assert!(o.coords.iter().all(|v| v.is_finite()));
        let mx: f64 = o.coords.iter().step_by(2).sum();
        let my: f64 = o.coords.iter().skip(1).step_by(2).sum();
        assert!(mx.abs() < 1e-6 && my.abs() < 1e-6);
    }

    #[test]
    fn separated_clusters_stay_separated() {
        let mut rng = Rng::new(5);
        let mut x = Vec::new();
        for c in 0..3 {
            for _ in 0..40 {
                for k in 0..4 {
                    x.push(if k == c { 20.0 } else { 0.0 } + rng.normal());
                }
            }
        }
        let cfg = TsneConfig {
            perplexity: 15.0,
            init: TsneInit::Pca,
            ..TsneConfig::default()
        };
        let o = tsne(&x, 120, 4, &cfg).unwrap();
        let within = (0..39).map(|i| dist(&o, i, i + 1)).sum::<f64>() / 39.0;
        let across = (0..40).map(|i| dist(&o, i, i + 40)).sum::<f64>() / 40.0;
        assert!(across > 2.0 * within, "{across} vs {within}");
    }

    #[test]
    fn deterministic_for_seed() {
        let x = random_points(60, 8, 2);
        let cfg = TsneConfig {
            perplexity: 10.0,
            iterations: 300,
            ..TsneConfig::default()
        };
        assert_eq!(
            tsne(&x, 60, 8, &cfg).unwrap(),
            tsne(&x, 60, 8, &cfg).unwrap()
        );
    }

    #[test]
    fn degenerate_input_gives_noise_layout() {
        let x = vec![1.5; 10 * 3];
        let o = tsne(
            &x,
            10,
            3,
            &TsneConfig {
                perplexity: 3.0,
                ..TsneConfig::default()
            },
        )
        .unwrap();
        assert!(o.degenerate);
        assert_eq!(o.coords.len(), 20);
        assert!(o.coords.iter().all(|v| v.is_finite() && v.abs() < 1e-2));
    }

    #[test]
    fn invalid_inputs_rejected() {
        let x = random_points(5, 2, 1);
        let bad = |n: usize, p: f64| {
            tsne(
                &x[..2 * n],
                n,
                2,
                &TsneConfig {
                    perplexity: p,
                    ..TsneConfig::default()
                },
            )
        };
        assert!(matches!(bad(2, 1.0), Err(Error::Input(_))));
        assert!(matches!(bad(5, 5.0), Err(Error::Input(_))));
        assert!(matches!(bad(5, 0.0), Err(Error::Input(_))));
    }

    #[test]
    fn large_inputs_are_subsampled() {
        let x = random_points(50, 3, 4);
        let cfg = TsneConfig {
            perplexity: 5.0,
            iterations: 50,
            max_points: 20,
            ..TsneConfig::default()
        };
        let o = tsne(&x, 50, 3, &cfg).unwrap();
        assert_eq!(o.len(), 20);
        assert!(o.indices.windows(2).all(|w| w[0] < w[1]));
    }
}
