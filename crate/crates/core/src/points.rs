//! Small helpers on points stored as `Vec<f64>`.

pub type Point = Vec<f64>;

#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    sq_dist(a, b).sqrt()
}

#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Largest pairwise distance (brute force).
pub fn diameter(points: &[Point]) -> f64 {
    let mut best = 0.0f64;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            best = best.max(dist(&points[i], &points[j]));
        }
    }
    best
}

/// Ordinary least squares `y = slope * x + intercept`; returns
/// `(slope, intercept, r2)`. `r2` is 1 when `y` has no variance.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy <= f64::EPSILON * n { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    (slope, intercept, r2)
}

/// Uniform-grid spatial hash for fixed-radius neighbor queries.
pub struct GridIndex {
    cell: f64,
    dim: usize,
    buckets: std::collections::HashMap<Vec<i64>, Vec<usize>>,
}

impl GridIndex {
    pub fn new(points: &[Point], cell: f64) -> Self {
        let dim = points.first().map_or(0, Vec::len);
        let mut buckets: std::collections::HashMap<Vec<i64>, Vec<usize>> = Default::default();
        for (i, p) in points.iter().enumerate() {
            buckets.entry(Self::key_of(p, cell)).or_default().push(i);
        }
        GridIndex { cell, dim, buckets }
    }

    fn key_of(p: &[f64], cell: f64) -> Vec<i64> {
        p.iter().map(|v| (v / cell).floor() as i64).collect()
    }

    /// Calls `visit` with the index of every stored point in the cells
    /// neighboring `q`; with `radius <= cell` this includes every point within
    /// `radius` of `q`.
    pub fn for_each_candidate(&self, q: &[f64], mut visit: impl FnMut(usize)) {
        let base = Self::key_of(q, self.cell);
        let mut offset = vec![-1i64; self.dim];
        let mut key = base.clone();
        loop {
            for (k, (b, o)) in key.iter_mut().zip(base.iter().zip(&offset)) {
                *k = b + o;
            }
            if let Some(ids) = self.buckets.get(&key) {
                ids.iter().for_each(|&i| visit(i));
            }
            // odometer over {-1, 0, 1}^dim
            let mut carry = true;
            for o in offset.iter_mut() {
                if !carry {
                    break;
                }
                *o += 1;
                if *o > 1 {
                    *o = -1;
                } else {
                    carry = false;
                }
            }
            if carry {
                break;
            }
        }
    }
}
