use log::warn;

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Regular grid of `nx × ny` nodes spanning `[x0, x1] × [y0, y1]`,
/// endpoints included.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl GridSpec {
    pub fn node(&self, ix: usize, iy: usize) -> (f64, f64) {
        (
            self.x0 + (self.x1 - self.x0) * ix as f64 / (self.nx - 1) as f64,
            self.y0 + (self.y1 - self.y0) * iy as f64 / (self.ny - 1) as f64,
        )
    }

    pub fn cell_area(&self) -> f64 {
        (self.x1 - self.x0) / (self.nx - 1) as f64 * (self.y1 - self.y0) / (self.ny - 1) as f64
    }

    /// Bounding box of every point set, padded by `pad` on each side.
    pub fn covering(sets: &[&Matrix], nx: usize, ny: usize, pad: f64) -> Result<GridSpec> {
        let mut b = [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY];
        for m in sets {
            if m.cols() != 2 {
                return Err(Error::Shape(format!("KDE needs 2-D points, got {} columns", m.cols())));
            }
            for r in 0..m.rows() {
                b[0] = b[0].min(m[(r, 0)]);
                b[1] = b[1].max(m[(r, 0)]);
                b[2] = b[2].min(m[(r, 1)]);
                b[3] = b[3].max(m[(r, 1)]);
            }
        }
        if !b[0].is_finite() {
            return Err(Error::Contract("no points to cover".into()));
        }
        GridSpec {
            nx,
            ny,
            x0: b[0] - pad,
            x1: b[1] + pad,
            y0: b[2] - pad,
            y1: b[3] + pad,
        }
        .validated()
    }

    fn validated(self) -> Result<Self> {
        if self.nx < 2 || self.ny < 2 || !(self.x1 > self.x0) || !(self.y1 > self.y0) {
            return Err(Error::Contract(format!("degenerate KDE grid {self:?}")));
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KdeGrid {
    pub spec: GridSpec,
    pub bandwidth: (f64, f64),
    /// `ny` rows of `nx` densities, row `iy` at `y = node(_, iy).1`.
    pub values: Vec<f64>,
}

/// Relative bandwidth floor, as a share of the grid span on that axis.
const BANDWIDTH_FLOOR: f64 = 1e-3;

fn sample_sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Gaussian product-kernel density on a grid with Scott's-rule bandwidth
/// `n^(−1/6)·σ` per axis.
pub fn kde2d(points: &Matrix, spec: GridSpec) -> Result<KdeGrid> {
    let spec = spec.validated()?;
    let n = points.rows();
    if points.cols() != 2 {
        return Err(Error::Shape(format!("KDE needs 2-D points, got {} columns", points.cols())));
    }
    if n == 0 {
        return Err(Error::Contract("KDE of no points".into()));
    }
    let factor = (n as f64).powf(-1.0 / 6.0);
    let mut bw = [0.0; 2];
    for (axis, span) in [(0, spec.x1 - spec.x0), (1, spec.y1 - spec.y0)] {
        let floor = BANDWIDTH_FLOOR * span;
        let h = factor * sample_sd(&points.column(axis));
        bw[axis] = if h < floor {
            warn!("KDE: axis {axis} has (near) zero spread; bandwidth floored at {floor:.3e}");
            floor
        } else {
            h
        };
    }
    let norm = 1.0 / (2.0 * std::f64::consts::PI * bw[0] * bw[1] * n as f64);
    let mut values = vec![0.0; spec.nx * spec.ny];
    for iy in 0..spec.ny {
        for ix in 0..spec.nx {
            let (gx, gy) = spec.node(ix, iy);
            let mut s = 0.0;
            for r in 0..n {
                let zx = (gx - points[(r, 0)]) / bw[0];
                let zy = (gy - points[(r, 1)]) / bw[1];
                s += (-0.5 * (zx * zx + zy * zy)).exp();
            }
            values[iy * spec.nx + ix] = s * norm;
        }
    }
    Ok(KdeGrid {
        spec,
        bandwidth: (bw[0], bw[1]),
        values,
    })
}

impl KdeGrid {
    pub fn riemann_mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.spec.cell_area()
    }

    /// Grid indices `(ix, iy)` of the largest density; first one on ties.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        (best % self.spec.nx, best / self.spec.nx)
    }

    /// `bounds;x0;x1;y0;y1` then one line of `nx` values per grid row.
    pub fn to_csv(&self) -> String {
        let s = &self.spec;
        let mut out = format!("bounds;{};{};{};{}\n", s.x0, s.x1, s.y0, s.y1);
        for row in self.values.chunks(s.nx) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&line.join(";"));
            out.push('\n');
        }
        out
    }
}
