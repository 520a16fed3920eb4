use crate::error::{Error, Result};
use crate::kv::KvFile;
use crate::rng::RngStream;
use crate::tensor::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    /// `None` picks `max(n / early_exaggeration / 4, 50)` for `n` points.
    pub learning_rate: Option<f64>,
    pub early_exaggeration: f64,
    /// Iterations run with exaggerated affinities and momentum 0.5.
    pub exaggeration_iters: usize,
}

impl Default for TsneConfig {
    fn default() -> Self {
        TsneConfig {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: None,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
        }
    }
}

impl TsneConfig {
    pub fn from_kv(kv: &KvFile, base: TsneConfig) -> Result<Self> {
        let c = TsneConfig {
            perplexity: kv.get_or("perplexity", base.perplexity)?,
            iterations: kv.get_or("iterations", base.iterations)?,
            learning_rate: match kv.get_str("learning_rate") {
                None => base.learning_rate,
                Some("auto") => None,
                Some(_) => Some(kv.get_or("learning_rate", 0.0)?),
            },
            early_exaggeration: kv.get_or("early_exaggeration", base.early_exaggeration)?,
            exaggeration_iters: kv.get_or("exaggeration_iters", base.exaggeration_iters)?,
        };
        if !(c.perplexity > 0.0 && c.learning_rate.is_none_or(|r| r > 0.0) && c.early_exaggeration >= 1.0) {
            return Err(Error::Config("invalid t-SNE hyperparameters".into()));
        }
        Ok(c)
    }

    /// Step size used for `n` points.
    pub fn effective_learning_rate(&self, n: usize) -> f64 {
        self.learning_rate
            .unwrap_or_else(|| (n as f64 / self.early_exaggeration / 4.0).max(50.0))
    }

    pub fn write_kv(&self, kv: &mut KvFile, prefix: &str) {
        kv.set(&format!("{prefix}perplexity"), self.perplexity);
        kv.set(&format!("{prefix}iterations"), self.iterations);
        match self.learning_rate {
            Some(r) => kv.set(&format!("{prefix}learning_rate"), r),
            None => kv.set(&format!("{prefix}learning_rate"), "auto"),
        }
        kv.set(&format!("{prefix}early_exaggeration"), self.early_exaggeration);
        kv.set(&format!("{prefix}exaggeration_iters"), self.exaggeration_iters);
    }
}

#[derive(Debug, Clone)]
pub struct TsneResult {
    pub embedding: Matrix,
    /// KL(P‖Q) of the initial embedding, without exaggeration.
    pub kl_initial: f64,
    pub kl_final: f64,
}

const PERPLEXITY_TOL: f64 = 1e-5;
const BISECTION_STEPS: usize = 200;
const MIN_GAIN: f64 = 0.01;
const P_FLOOR: f64 = 1e-12;

/// Row-conditional affinities `p_{j|i}` with each row's Gaussian
/// precision tuned so its entropy equals `ln(perplexity)`. Returns the
/// row-major `n × n` matrix and each row's achieved entropy.
pub fn conditional_affinities(x: &Matrix, perplexity: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = x.rows();
    let target = perplexity.ln();
    let mut d2 = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            d2[i * n + j] = x.row(i).iter().zip(x.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
        }
    }
    let mut p = vec![0.0; n * n];
    let mut entropies = vec![0.0; n];
    for i in 0..n {
        let row = &d2[i * n..(i + 1) * n];
        // Shift by the nearest distance so exp() cannot underflow to all zeros.
        let dmin = (0..n)
            .filter(|&j| j != i)
            .map(|j| row[j])
            .fold(f64::INFINITY, f64::min);
        let eval = |beta: f64, out: &mut [f64]| -> f64 {
            let mut sum = 0.0;
            let mut weighted = 0.0;
            for j in 0..n {
                let v = if j == i { 0.0 } else { (-(row[j] - dmin) * beta).exp() };
                out[j] = v;
                sum += v;
                weighted += (row[j] - dmin) * v;
            }
            for v in out.iter_mut() {
                *v /= sum;
            }
            sum.ln() + beta * weighted / sum
        };
        let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
        let mut beta = 1.0;
        let out = &mut p[i * n..(i + 1) * n];
        let mut h = eval(beta, out);
        for _ in 0..BISECTION_STEPS {
            if (h - target).abs() < PERPLEXITY_TOL {
                break;
            }
            if h > target {
                lo = beta;
                beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = (beta + lo) / 2.0;
            }
            h = eval(beta, out);
        }
        entropies[i] = h;
    }
    Ok((p, entropies))
}

fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(p, _)| **p > 0.0)
        .map(|(p, q)| p * (p / q.max(P_FLOOR)).ln())
        .sum()
}

/// Student-t joint probabilities of an embedding; diagonal zero.
fn student_q(y: &Matrix, num: &mut [f64], q: &mut [f64]) {
    let n = y.rows();
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            let v = if i == j {
                0.0
            } else {
                let d: f64 = y.row(i).iter().zip(y.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
                1.0 / (1.0 + d)
            };
            num[i * n + j] = v;
            sum += v;
        }
    }
    for (qv, nv) in q.iter_mut().zip(num.iter()) {
        *qv = (nv / sum).max(P_FLOOR);
    }
}

/// Exact t-SNE with early exaggeration, momentum and per-coordinate gains.
pub fn tsne(x: &Matrix, out_dim: usize, config: &TsneConfig, seed: u64) -> Result<TsneResult> {
    let n = x.rows();
    if out_dim == 0 {
        return Err(Error::Contract("t-SNE out_dim must be at least 1".into()));
    }
    if (n as f64) < 3.0 * config.perplexity + 1.0 {
        return Err(Error::Contract(format!(
            "perplexity {} needs at least {} points, got {n}",
            config.perplexity,
            (3.0 * config.perplexity + 1.0).ceil()
        )));
    }
    let (cond, _) = conditional_affinities(x, config.perplexity)?;
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p[i * n + j] = ((cond[i * n + j] + cond[j * n + i]) / (2.0 * n as f64)).max(P_FLOOR);
            }
        }
    }

    let learning_rate = config.effective_learning_rate(n);
    let mut rng = RngStream::labeled(seed, &["tsne"]);
    let mut y = Matrix::from_vec(n, out_dim, (0..n * out_dim).map(|_| rng.normal(0.0, 1e-4)).collect())?;
    let mut velocity = vec![0.0; n * out_dim];
    let mut gains = vec![1.0f64; n * out_dim];
    let mut num = vec![0.0; n * n];
    let mut q = vec![0.0; n * n];
    let mut grad = vec![0.0; n * out_dim];

    student_q(&y, &mut num, &mut q);
    let kl_initial = kl(&p, &q);

    for iter in 0..config.iterations {
        let early = iter < config.exaggeration_iters;
        let exaggeration = if early { config.early_exaggeration } else { 1.0 };
        let momentum = if early { 0.5 } else { 0.8 };
        if iter > 0 {
            student_q(&y, &mut num, &mut q);
        }
        grad.iter_mut().for_each(|g| *g = 0.0);
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let m = (exaggeration * p[i * n + j] - q[i * n + j]) * num[i * n + j];
                for d in 0..out_dim {
                    grad[i * out_dim + d] += 4.0 * m * (y[(i, d)] - y[(j, d)]);
                }
            }
        }
        for k in 0..n * out_dim {
            let (g, v) = (grad[k], velocity[k]);
            gains[k] = if (g > 0.0) != (v > 0.0) { gains[k] + 0.2 } else { gains[k] * 0.8 };
            gains[k] = gains[k].max(MIN_GAIN);
            velocity[k] = momentum * v - learning_rate * gains[k] * g;
        }
        for i in 0..n {
            for d in 0..out_dim {
                y[(i, d)] += velocity[i * out_dim + d];
            }
        }
        let means = y.column_means();
        for i in 0..n {
            for d in 0..out_dim {
                y[(i, d)] -= means[d];
            }
        }
        if !y.is_finite() {
            return Err(Error::Numeric(format!("t-SNE diverged at iteration {iter}")));
        }
    }
    student_q(&y, &mut num, &mut q);
    let kl_final = kl(&p, &q);
    Ok(TsneResult {
        embedding: y,
        kl_initial,
        kl_final,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clusters(seed: u64, per: usize) -> Matrix {
        let mut rng = RngStream::derive(seed, "clusters");
        let mut rows = Vec::new();
        for c in 0..2 {
            let centre = if c == 0 { -5.0 } else { 5.0 };
            for _ in 0..per {
                rows.push((0..4).map(|_| rng.normal(centre, 1.0)).collect::<Vec<f64>>());
            }
        }
        Matrix::from_rows(&rows).unwrap()
    }

    fn small() -> TsneConfig {
        TsneConfig {
            perplexity: 5.0,
            ..TsneConfig::default()
        }
    }

    #[test]
    fn affinities_hit_perplexity() {
        let x = clusters(1, 15);
        let (p, h) = conditional_affinities(&x, 7.0).unwrap();
        let n = x.rows();
        for i in 0..n {
            let s: f64 = p[i * n..(i + 1) * n].iter().sum();
            assert!((s - 1.0).abs() < 1e-10);
            assert!((h[i] - 7f64.ln()).abs() < 1e-4);
            assert_eq!(p[i * n + i], 0.0);
        }
    }

    #[test]
    fn separates_clusters_and_lowers_kl() {
        let x = clusters(2, 10);
        let r = tsne(&x, 2, &small(), 9).unwrap();
        assert!(r.kl_final < r.kl_initial);
        let e = &r.embedding;
        let c0: Vec<f64> = (0..2).map(|d| (0..10).map(|i| e[(i, d)]).sum::<f64>() / 10.0).collect();
        let c1: Vec<f64> = (0..2).map(|d| (10..20).map(|i| e[(i, d)]).sum::<f64>() / 10.0).collect();
        let dir = [c1[0] - c0[0], c1[1] - c0[1]];
        let proj = |i: usize| e[(i, 0)] * dir[0] + e[(i, 1)] * dir[1];
        let max0 = (0..10).map(proj).fold(f64::NEG_INFINITY, f64::max);
        let min1 = (10..20).map(proj).fold(f64::INFINITY, f64::min);
        assert!(max0 < min1);
    }

    #[test]
    fn learning_rate_auto_and_override() {
        let auto = TsneConfig::default();
        assert_eq!(auto.effective_learning_rate(100), 50.0);
        assert_eq!(auto.effective_learning_rate(4800), 100.0);
        let mut kv = KvFile::default();
        auto.write_kv(&mut kv, "");
        assert_eq!(kv.get_str("learning_rate"), Some("auto"));
        assert_eq!(TsneConfig::from_kv(&kv, TsneConfig::default()).unwrap(), auto);
        kv.set("learning_rate", 200.0);
        let fixed = TsneConfig::from_kv(&kv, TsneConfig::default()).unwrap();
        assert_eq!(fixed.effective_learning_rate(100), 200.0);
        kv.set("learning_rate", -1.0);
        assert!(TsneConfig::from_kv(&kv, TsneConfig::default()).is_err());
    }

    #[test]
    fn deterministic_and_checks_perplexity() {
        let x = clusters(3, 10);
        let cfg = TsneConfig {
            iterations: 50,
            ..small()
        };
        let a = tsne(&x, 2, &cfg, 1).unwrap();
        let b = tsne(&x, 2, &cfg, 1).unwrap();
        assert_eq!(a.embedding, b.embedding);
        assert!(tsne(&x, 2, &TsneConfig::default(), 1).is_err());
    }

    #[test]
    fn duplicates_stay_nearest_neighbours() {
        let base = clusters(4, 9);
        let mut rows: Vec<Vec<f64>> = (0..base.rows()).map(|i| base.row(i).to_vec()).collect();
        rows.push(rows[3].clone());
        let x = Matrix::from_rows(&rows).unwrap();
        let e = tsne(&x, 2, &small(), 5).unwrap().embedding;
        let dup = rows.len() - 1;
        let dist = |a: usize, b: usize| crate::tensor::euclidean(e.row(a), e.row(b));
        let nearest = |a: usize| {
            (0..rows.len())
                .filter(|&b| b != a)
                .min_by(|&u, &v| dist(a, u).total_cmp(&dist(a, v)))
                .unwrap()
        };
        assert_eq!(nearest(3), dup);
        assert_eq!(nearest(dup), 3);
    }
}
