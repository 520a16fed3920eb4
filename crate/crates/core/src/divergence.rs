//! Energy distance (equivalently MMD² under the distance-induced kernel)
//! between two sample sets, and the feature representations it runs on.

use std::fmt;
use std::str::FromStr;

use crate::data::{raw_features, SampleWindow};
use crate::error::{Error, Result};
use crate::tensor::{euclidean, Matrix};

/// Which view of a branch's data a sample set holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Representation {
    Raw,
    Tsne,
    Pca,
    Mds,
}

impl Representation {
    pub const ALL: [Representation; 4] = [
        Representation::Raw,
        Representation::Tsne,
        Representation::Pca,
        Representation::Mds,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Representation::Raw => "raw",
            Representation::Tsne => "tsne",
            Representation::Pca => "pca",
            Representation::Mds => "mds",
        }
    }
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Representation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Representation::ALL
            .into_iter()
            .find(|r| r.label() == s)
            .ok_or_else(|| Error::Config(format!("unknown representation {s:?}")))
    }
}

/// Points of one branch in some representation, one row per observation.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub points: Matrix,
    pub source_label: String,
    pub representation: Representation,
}

impl SampleSet {
    pub fn new(points: Matrix, source_label: impl Into<String>, representation: Representation) -> Result<Self> {
        if points.rows() < 2 {
            return Err(Error::Contract(format!("a sample set needs at least 2 rows, got {}", points.rows())));
        }
        Ok(SampleSet {
            points,
            source_label: source_label.into(),
            representation,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceResult {
    pub value: f64,
    pub estimator: &'static str,
    pub n_source: usize,
    pub n_target: usize,
}

/// Mean of all pairwise distances between rows of `x` and rows of `y`.
/// Distances are summed in ascending order, so the result depends only on
/// the multiset of distances and `mean(x, y) == mean(y, x)` bit for bit.
fn mean_distance(x: &Matrix, y: &Matrix) -> f64 {
    let mut d = Vec::with_capacity(x.rows() * y.rows());
    for i in 0..x.rows() {
        for j in 0..y.rows() {
            d.push(euclidean(x.row(i), y.row(j)));
        }
    }
    d.sort_by(f64::total_cmp);
    d.iter().sum::<f64>() / d.len() as f64
}

/// V-statistic energy distance
/// `2·mean‖a−b‖ − mean‖a−a'‖ − mean‖b−b'‖`, self-pairs included.
pub fn energy_distance(a: &SampleSet, b: &SampleSet) -> Result<DivergenceResult> {
    for s in [a, b] {
        if s.points.rows() < 2 {
            return Err(Error::Contract(format!("{}: fewer than 2 rows", s.source_label)));
        }
    }
    if a.points.cols() != b.points.cols() {
        return Err(Error::Shape(format!(
            "feature dimension {} vs {}",
            a.points.cols(),
            b.points.cols()
        )));
    }
    let cross = mean_distance(&a.points, &b.points);
    let within = mean_distance(&a.points, &a.points) + mean_distance(&b.points, &b.points);
    // Non-negative in exact arithmetic; clamp rounding noise.
    let value = (2.0 * cross - within).max(0.0);
    Ok(DivergenceResult {
        value,
        estimator: "energy_distance",
        n_source: a.points.rows(),
        n_target: b.points.rows(),
    })
}

/// `energy_distance / 2`.
pub fn mmd_squared(a: &SampleSet, b: &SampleSet) -> Result<f64> {
    Ok(energy_distance(a, b)?.value / 2.0)
}

/// Raw feature rows (previous-period sales then year, month, week,
/// weekday) of a set of windows, unscaled.
pub fn feature_matrix(windows: &[SampleWindow]) -> Result<Matrix> {
    let rows: Vec<Vec<f64>> = windows.iter().map(raw_features).collect();
    if rows.is_empty() {
        return Err(Error::Contract("no windows to build features from".into()));
    }
    Matrix::from_rows(&rows)
}

/// Standardizes every matrix with the per-column mean and population
/// standard deviation of their union. Constant columns become zero.
pub fn standardize_union(sets: &[&Matrix]) -> Result<Vec<Matrix>> {
    let Some(first) = sets.first() else {
        return Ok(Vec::new());
    };
    let cols = first.cols();
    if let Some(m) = sets.iter().find(|m| m.cols() != cols) {
        return Err(Error::Shape(format!("feature dimension {} vs {cols}", m.cols())));
    }
    let n: usize = sets.iter().map(|m| m.rows()).sum();
    let mut mean = vec![0.0; cols];
    for m in sets {
        for r in 0..m.rows() {
            for (c, v) in m.row(r).iter().enumerate() {
                mean[c] += v;
            }
        }
    }
    mean.iter_mut().for_each(|v| *v /= n as f64);
    let mut var = vec![0.0; cols];
    for m in sets {
        for r in 0..m.rows() {
            for (c, v) in m.row(r).iter().enumerate() {
                var[c] += (v - mean[c]).powi(2);
            }
        }
    }
    let sd: Vec<f64> = var
        .iter()
        .map(|v| {
            let s = (v / n as f64).sqrt();
            if s > 1e-12 {
                s
            } else {
                1.0
            }
        })
        .collect();
    sets.iter()
        .map(|m| {
            let mut out = (*m).clone();
            for r in 0..m.rows() {
                for c in 0..cols {
                    out[(r, c)] = (m[(r, c)] - mean[c]) / sd[c];
                }
            }
            Ok(out)
        })
        .collect()
}

/// Raw-data sample sets for one branch pair, standardized over the pair.
pub fn raw_pair(
    a_label: &str,
    a: &[SampleWindow],
    b_label: &str,
    b: &[SampleWindow],
) -> Result<(SampleSet, SampleSet)> {
    let fa = feature_matrix(a)?;
    let fb = feature_matrix(b)?;
    let mut z = standardize_union(&[&fa, &fb])?.into_iter();
    let za = z.next().expect("two outputs");
    let zb = z.next().expect("two outputs");
    Ok((
        SampleSet::new(za, a_label, Representation::Raw)?,
        SampleSet::new(zb, b_label, Representation::Raw)?,
    ))
}

/// Square matrix of divergences indexed by branch label.
#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceMatrix {
    pub representation: Representation,
    pub labels: Vec<String>,
    /// Row-major, `labels.len()²` values; zero diagonal.
    pub values: Vec<f64>,
}

impl DivergenceMatrix {
    /// Evaluates `f` once per unordered pair and mirrors the result.
    pub fn compute(
        representation: Representation,
        labels: &[String],
        mut f: impl FnMut(usize, usize) -> Result<f64>,
    ) -> Result<Self> {
        let n = labels.len();
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let v = f(i, j)?;
                values[i * n + j] = v;
                values[j * n + i] = v;
            }
        }
        Ok(DivergenceMatrix {
            representation,
            labels: labels.to_vec(),
            values,
        })
    }

    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.labels.iter().position(|l| l == a)?;
        let j = self.labels.iter().position(|l| l == b)?;
        Some(self.values[i * self.labels.len() + j])
    }

    /// `branch;B1;B2;…` header, then one row per branch.
    pub fn to_csv(&self) -> String {
        let n = self.labels.len();
        let mut s = format!("branch;{}\n", self.labels.join(";"));
        for i in 0..n {
            s.push_str(&self.labels[i]);
            for j in 0..n {
                s.push(';');
                s.push_str(&self.values[i * n + j].to_string());
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str, representation: Representation) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse {
            line: 1,
            message: "empty divergence matrix".into(),
        })?;
        let labels: Vec<String> = header.split(';').skip(1).map(str::to_string).collect();
        let n = labels.len();
        let mut values = Vec::with_capacity(n * n);
        for (i, line) in lines.enumerate() {
            let f: Vec<&str> = line.split(';').collect();
            if f.len() != n + 1 || i >= n || f[0] != labels[i] {
                return Err(Error::Parse {
                    line: i + 2,
                    message: "divergence row does not match header".into(),
                });
            }
            for v in &f[1..] {
                values.push(v.parse().map_err(|_| Error::Parse {
                    line: i + 2,
                    message: format!("bad number {v:?}"),
                })?);
            }
        }
        if values.len() != n * n {
            return Err(Error::Data("divergence matrix is not square".into()));
        }
        Ok(DivergenceMatrix {
            representation,
            labels,
            values,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn set(rows: &[Vec<f64>]) -> SampleSet {
        SampleSet::new(Matrix::from_rows(rows).unwrap(), "x", Representation::Raw).unwrap()
    }

    fn random_set(n: usize, d: usize, shift: f64, rng: &mut RngStream) -> SampleSet {
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.normal(shift, 1.0)).collect()).collect();
        set(&rows)
    }

    #[test]
    fn hand_case() {
        let a = set(&[vec![0.0], vec![0.0]]);
        let b = set(&[vec![1.0], vec![1.0]]);
        assert_eq!(energy_distance(&a, &b).unwrap().value, 2.0);
        assert_eq!(mmd_squared(&a, &b).unwrap(), 1.0);
        assert_eq!(energy_distance(&a, &a).unwrap().value, 0.0);
    }

    #[test]
    fn errors() {
        let a = set(&[vec![0.0], vec![1.0]]);
        let b = set(&[vec![0.0, 1.0], vec![1.0, 1.0]]);
        assert!(matches!(energy_distance(&a, &b), Err(Error::Shape(_))));
        assert!(SampleSet::new(Matrix::zeros(1, 2), "x", Representation::Raw).is_err());
    }

    #[test]
    fn properties() {
        let mut rng = RngStream::derive(5, "div-test");
        for _ in 0..10 {
            let a = random_set(15, 3, 0.0, &mut rng);
            let b = random_set(12, 3, 0.7, &mut rng);
            let ab = energy_distance(&a, &b).unwrap().value;
            assert_eq!(ab, energy_distance(&b, &a).unwrap().value);
            assert!(ab >= 0.0);
            assert_eq!(2.0 * mmd_squared(&a, &b).unwrap(), ab);
            let shift = |s: &SampleSet, c: f64, k: f64| {
                let rows: Vec<Vec<f64>> = (0..s.points.rows())
                    .map(|r| s.points.row(r).iter().map(|v| k * v + c).collect())
                    .collect();
                set(&rows)
            };
            let t = energy_distance(&shift(&a, 3.5, 1.0), &shift(&b, 3.5, 1.0)).unwrap().value;
            assert!((t - ab).abs() < 1e-10);
            let s = energy_distance(&shift(&a, 0.0, 2.5), &shift(&b, 0.0, 2.5)).unwrap().value;
            assert!((s - 2.5 * ab).abs() < 1e-10);
        }
    }

    #[test]
    fn grows_with_mean_shift() {
        for seed in 0..10 {
            let mut rng = RngStream::derive(seed, "shift");
            let base = random_set(200, 1, 0.0, &mut rng);
            let d: Vec<f64> = [0.0, 1.0, 2.0, 4.0]
                .iter()
                .map(|mu| energy_distance(&base, &random_set(200, 1, *mu, &mut rng)).unwrap().value)
                .collect();
            assert!(d.windows(2).all(|w| w[0] < w[1]), "seed {seed}: {d:?}");
        }
    }

    #[test]
    fn union_standardization() {
        let a = Matrix::from_rows(&[vec![1.0, 5.0], vec![3.0, 5.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![5.0, 5.0], vec![7.0, 5.0]]).unwrap();
        let z = standardize_union(&[&a, &b]).unwrap();
        let all: Vec<f64> = z.iter().flat_map(|m| m.column(0)).collect();
        assert!(all.iter().sum::<f64>().abs() < 1e-12);
        assert!((all.iter().map(|v| v * v).sum::<f64>() / 4.0 - 1.0).abs() < 1e-12);
        assert!(z.iter().all(|m| m.column(1).iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn matrix_csv_round_trip() {
        let labels: Vec<String> = ["B1", "B2", "B3"].iter().map(|s| s.to_string()).collect();
        let m = DivergenceMatrix::compute(Representation::Pca, &labels, |i, j| Ok((i + 2 * j) as f64 / 3.0)).unwrap();
        assert_eq!(m.get("B2", "B1"), m.get("B1", "B2"));
        assert_eq!(m.get("B3", "B3"), Some(0.0));
        let back = DivergenceMatrix::from_csv(&m.to_csv(), Representation::Pca).unwrap();
        assert_eq!(back, m);
    }
}
