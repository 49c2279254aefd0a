//! Gromov four-point hyperbolicity via the max-min matrix product.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::lorentz::{distance_kernel, norm_sq, time_from_norm_sq};
use crate::par::{self, Exec};
use crate::rng;

pub const HYPERBOLICITY_REPORT_SCHEMA: &str = "lsk.hyperbolicity_report/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Euclidean,
    /// Rows are spatial coordinates lifted onto the unit hyperboloid.
    Lorentz,
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(Metric::Euclidean),
            "lorentz" => Ok(Metric::Lorentz),
            other => Err(Error::Usage(format!("unknown metric '{other}' (euclidean|lorentz)"))),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Euclidean => "euclidean",
            Metric::Lorentz => "lorentz",
        })
    }
}

/// Dense square matrix, row-major. Used both for distances and for Gromov
/// products.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl DistanceMatrix {
    /// Validates symmetry (to 1e-12), a zero diagonal and non-negative,
    /// finite entries.
    pub fn from_entries(n: usize, entries: Vec<f64>) -> Result<Self> {
        check_dim(n * n, entries.len())?;
        for i in 0..n {
            if entries[i * n + i] != 0.0 {
                return Err(Error::Domain(format!("diagonal entry {i} is not zero")));
            }
            for j in 0..n {
                let v = entries[i * n + j];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::Domain(format!("entry ({i},{j}) = {v} is not a distance")));
                }
                if (v - entries[j * n + i]).abs() > 1e-12 * v.abs().max(1.0) {
                    return Err(Error::Domain(format!("matrix is not symmetric at ({i},{j})")));
                }
            }
        }
        Ok(Self { n, entries })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.entries
    }

    pub fn diameter(&self) -> f64 {
        self.entries.iter().copied().fold(0.0, f64::max)
    }

    /// Uniformly rescaled copy.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::Usage(format!("scale must be positive, got {s}")));
        }
        Ok(Self { n: self.n, entries: self.entries.iter().map(|v| v * s).collect() })
    }

    /// Submatrix on `idx` (in the given order).
    pub fn restrict(&self, idx: &[usize]) -> Self {
        let m = idx.len();
        let mut entries = Vec::with_capacity(m * m);
        for &i in idx {
            for &j in idx {
                entries.push(self.get(i, j));
            }
        }
        Self { n: m, entries }
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn pairwise_distances(points: &[Vec<f64>], metric: Metric) -> Result<DistanceMatrix> {
    pairwise_distances_with(Exec::default(), points, metric)
}

pub fn pairwise_distances_with(exec: Exec, points: &[Vec<f64>], metric: Metric) -> Result<DistanceMatrix> {
    let n = points.len();
    let dim = points.first().map_or(0, Vec::len);
    for p in points {
        check_dim(dim, p.len())?;
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedding coordinate".into()));
        }
    }
    let times: Vec<f64> = match metric {
        Metric::Euclidean => Vec::new(),
        Metric::Lorentz => points.iter().map(|p| time_from_norm_sq(norm_sq(p), 1.0)).collect(),
    };
    let rows = par::map_range(exec, n, |i| {
        let mut row = vec![0.0; n];
        for (j, slot) in row.iter_mut().enumerate() {
            if i == j {
                continue;
            }
            // evaluate each unordered pair in a fixed orientation so the
            // matrix is exactly symmetric
            let (a, b) = if i < j { (i, j) } else { (j, i) };
            *slot = match metric {
                Metric::Euclidean => euclid(&points[a], &points[b]),
                Metric::Lorentz => distance_kernel(times[a], &points[a], times[b], &points[b], 1.0),
            };
        }
        row
    });
    Ok(DistanceMatrix { n, entries: rows.concat() })
}

/// `A_yz = (D[r,y] + D[r,z] - D[y,z]) / 2` for base `r`, as a flat n*n
/// row-major matrix.
pub fn gromov_products(d: &DistanceMatrix, base: usize) -> Result<Vec<f64>> {
    let n = d.n();
    if base >= n {
        return Err(Error::Usage(format!("base index {base} out of range for {n} points")));
    }
    let mut a = vec![0.0; n * n];
    for y in 0..n {
        for z in 0..n {
            a[y * n + z] = 0.5 * (d.get(base, y) + d.get(base, z) - d.get(y, z));
        }
    }
    Ok(a)
}

/// `(A (x) B)_ij = max_k min(A_ik, B_kj)` for n*n row-major matrices.
pub fn maxmin_product(a: &[f64], b: &[f64], n: usize) -> Result<Vec<f64>> {
    maxmin_product_with(Exec::default(), a, b, n)
}

pub fn maxmin_product_with(exec: Exec, a: &[f64], b: &[f64], n: usize) -> Result<Vec<f64>> {
    check_dim(n * n, a.len())?;
    check_dim(n * n, b.len())?;
    let rows = par::map_range(exec, n, |i| {
        let ai = &a[i * n..(i + 1) * n];
        let mut out = vec![f64::NEG_INFINITY; n];
        for (k, &aik) in ai.iter().enumerate() {
            let bk = &b[k * n..(k + 1) * n];
            for (o, &bkj) in out.iter_mut().zip(bk) {
                let m = aik.min(bkj);
                if m > *o {
                    *o = m;
                }
            }
        }
        out
    });
    Ok(rows.concat())
}

/// `max_ij [(A (x) A)_ij - A_ij]` with Gromov products at `base`.
pub fn delta_from_matrix(exec: Exec, d: &DistanceMatrix, base: usize) -> Result<f64> {
    if d.n() < 4 {
        return Err(Error::Usage(format!("hyperbolicity needs at least 4 points, got {}", d.n())));
    }
    let a = gromov_products(d, base)?;
    let aa = maxmin_product_with(exec, &a, &a, d.n())?;
    Ok(aa.iter().zip(&a).map(|(p, q)| p - q).fold(0.0, f64::max))
}

/// Exhaustive triple loop over the same quantity; the oracle for
/// [`delta_from_matrix`].
pub fn delta_brute_force(d: &DistanceMatrix, base: usize) -> Result<f64> {
    let n = d.n();
    let a = gromov_products(d, base)?;
    let mut best = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let v = a[i * n + k].min(a[k * n + j]) - a[i * n + j];
                if v > best {
                    best = v;
                }
            }
        }
    }
    Ok(best)
}

pub fn delta_rel_from_matrix(exec: Exec, d: &DistanceMatrix, base: usize) -> Result<f64> {
    let diam = d.diameter();
    if !(diam > 0.0) {
        return Err(Error::Degenerate("all points coincide (zero diameter)".into()));
    }
    let delta = delta_from_matrix(exec, d, base)?;
    Ok((2.0 * delta / diam).clamp(0.0, 1.0))
}

pub fn delta_hyperbolicity(points: &[Vec<f64>], metric: Metric, base: usize) -> Result<f64> {
    let d = pairwise_distances(points, metric)?;
    delta_from_matrix(Exec::default(), &d, base)
}

pub fn delta_rel(points: &[Vec<f64>], metric: Metric, base: usize) -> Result<f64> {
    let d = pairwise_distances(points, metric)?;
    delta_rel_from_matrix(Exec::default(), &d, base)
}

/// A parsed embedding file: a `dim=<n>` header, then one comma-separated
/// row per point.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub dim: usize,
    pub points: Vec<Vec<f64>>,
}

impl EmbeddingSet {
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let dim = loop {
            match lines.next() {
                None => return Err(Error::Parse { line: 1, message: "missing 'dim=<n>' header".into() }),
                Some((_, "")) => continue,
                Some((no, l)) => {
                    let v = l.strip_prefix("dim=").ok_or_else(|| Error::Parse {
                        line: no,
                        message: format!("expected 'dim=<n>' header, found '{l}'"),
                    })?;
                    let dim: usize = v.trim().parse().map_err(|_| Error::Parse {
                        line: no,
                        message: format!("invalid dimension '{v}'"),
                    })?;
                    if dim == 0 {
                        return Err(Error::Parse { line: no, message: "dimension must be positive".into() });
                    }
                    break dim;
                }
            }
        };
        let mut points = Vec::new();
        for (no, l) in lines {
            if l.is_empty() {
                continue;
            }
            let row = l
                .split(',')
                .map(|f| {
                    let f = f.trim();
                    match f.parse::<f64>() {
                        Ok(v) if v.is_finite() => Ok(v),
                        _ => Err(Error::Parse { line: no, message: format!("invalid number '{f}'") }),
                    }
                })
                .collect::<Result<Vec<f64>>>()?;
            if row.len() != dim {
                return Err(Error::Parse {
                    line: no,
                    message: format!("expected {dim} values, found {}", row.len()),
                });
            }
            points.push(row);
        }
        Ok(Self { dim, points })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("dim={}\n", self.dim);
        for p in &self.points {
            let row: Vec<String> = p.iter().map(|v| format!("{v:?}")).collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchValue {
    pub index: usize,
    pub delta: f64,
    pub diameter: f64,
    pub delta_rel: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperbolicityReport {
    pub schema: String,
    pub metric: Metric,
    pub point_count: usize,
    /// Position of the base point inside each (sorted) batch.
    pub base_index: usize,
    pub batch_size: usize,
    pub batch_count: usize,
    pub seed: u64,
    /// Means over batches.
    pub delta: f64,
    pub diameter: f64,
    pub delta_rel: f64,
    pub batches: Vec<BatchValue>,
}

/// Samples `batch_count` batches without replacement, each sorted by
/// original index, and averages their `delta_rel`. Batches larger than the
/// set are truncated to the full set.
pub fn batched_delta_rel(
    exec: Exec,
    set: &EmbeddingSet,
    batch_size: usize,
    batch_count: usize,
    seed: u64,
    metric: Metric,
) -> Result<HyperbolicityReport> {
    if batch_size < 4 {
        return Err(Error::Usage(format!("batch_size must be >= 4, got {batch_size}")));
    }
    if batch_count == 0 {
        return Err(Error::Usage("batch_count must be > 0".into()));
    }
    let n = set.points.len();
    if n < 4 {
        return Err(Error::Usage(format!("need at least 4 points, file has {n}")));
    }
    let size = batch_size.min(n);
    // batches run one after another, each parallel inside
    let mut batches = Vec::with_capacity(batch_count);
    for b in 0..batch_count {
        let mut r = rng::stream(seed, b as u64);
        let mut idx = index::sample(&mut r, n, size).into_vec();
        idx.sort_unstable();
        let pts: Vec<Vec<f64>> = idx.iter().map(|&i| set.points[i].clone()).collect();
        let d = pairwise_distances_with(exec, &pts, metric)?;
        let diameter = d.diameter();
        if !(diameter > 0.0) {
            return Err(Error::Degenerate(format!("batch {b} has zero diameter")));
        }
        let delta = delta_from_matrix(exec, &d, 0)?;
        batches.push(BatchValue {
            index: b,
            delta,
            diameter,
            delta_rel: (2.0 * delta / diameter).clamp(0.0, 1.0),
        });
    }
    let mean = |f: fn(&BatchValue) -> f64| batches.iter().map(f).sum::<f64>() / batches.len() as f64;
    Ok(HyperbolicityReport {
        schema: HYPERBOLICITY_REPORT_SCHEMA.to_string(),
        metric,
        point_count: n,
        base_index: 0,
        batch_size: size,
        batch_count,
        seed,
        delta: mean(|b| b.delta),
        diameter: mean(|b| b.diameter),
        delta_rel: mean(|b| b.delta_rel),
        batches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lorentz::{geodesic_distance, Curvature, LorentzPoint};
    use rand::Rng;

    /// Leaves a,b,c,d hanging off a hub with these edge lengths.
    fn star(edges: [f64; 4]) -> DistanceMatrix {
        let mut e = vec![0.0; 16];
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    e[i * 4 + j] = edges[i] + edges[j];
                }
            }
        }
        DistanceMatrix::from_entries(4, e).unwrap()
    }

    #[test]
    fn simplex_and_duplicates() {
        let pts = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]];
        let d = pairwise_distances(&pts, Metric::Euclidean).unwrap();
        assert_eq!(d.get(0, 1), 2f64.sqrt());
        assert_eq!(d.get(1, 2), 2f64.sqrt());
        assert_eq!(d.get(0, 3), 0.0);
        assert!(pairwise_distances(&[vec![1.0], vec![1.0, 2.0]], Metric::Euclidean).is_err());
    }

    #[test]
    fn lorentz_metric_matches_geodesic_distance() {
        let mut r = rng::seeded(3);
        let pts: Vec<Vec<f64>> = (0..8).map(|_| (0..3).map(|_| r.random_range(-2.0..2.0)).collect()).collect();
        let d = pairwise_distances(&pts, Metric::Lorentz).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                let a = LorentzPoint::lift(pts[i].clone(), Curvature::UNIT).unwrap();
                let b = LorentzPoint::lift(pts[j].clone(), Curvature::UNIT).unwrap();
                assert!((d.get(i, j) - geodesic_distance(&a, &b).unwrap()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gromov_product_identities() {
        let d = star([1.0, 2.0, 0.5, 3.0]);
        let a = gromov_products(&d, 1).unwrap();
        for y in 0..4 {
            assert_eq!(a[y * 4 + y], d.get(1, y));
            assert_eq!(a[4 + y], 0.0);
        }
        assert!(gromov_products(&d, 4).is_err());
    }

    #[test]
    fn maxmin_hand_matrix() {
        let a = [1.0, 5.0, 2.0, 4.0, 0.0, 3.0, 6.0, 2.0, 1.0];
        let b = [2.0, 1.0, 7.0, 3.0, 3.0, 0.0, 1.0, 4.0, 2.0];
        // enumerated by hand over k
        let want = [3.0, 3.0, 2.0, 2.0, 3.0, 4.0, 2.0, 2.0, 6.0];
        assert_eq!(maxmin_product(&a, &b, 3).unwrap(), want);
        let c = vec![0.7; 9];
        assert_eq!(maxmin_product(&c, &c, 3).unwrap(), c);
    }

    #[test]
    fn tree_metric_is_zero_hyperbolic() {
        let d = star([1.0, 2.0, 0.5, 3.0]);
        for base in 0..4 {
            assert_eq!(delta_from_matrix(Exec::Sequential, &d, base).unwrap(), 0.0);
        }
        assert_eq!(delta_rel_from_matrix(Exec::Parallel, &d, 0).unwrap(), 0.0);
    }

    #[test]
    fn square_is_not_a_tree() {
        // 4-cycle with unit edges: delta = 1 at any base
        let e = vec![0., 1., 2., 1., 1., 0., 1., 2., 2., 1., 0., 1., 1., 2., 1., 0.];
        let d = DistanceMatrix::from_entries(4, e).unwrap();
        assert_eq!(delta_from_matrix(Exec::Sequential, &d, 0).unwrap(), 1.0);
        assert_eq!(delta_rel_from_matrix(Exec::Sequential, &d, 0).unwrap(), 1.0);
    }

    #[test]
    fn degenerate_inputs() {
        let pts = vec![vec![0.5, 0.5]; 5];
        assert!(matches!(delta_rel(&pts, Metric::Euclidean, 0), Err(Error::Degenerate(_))));
        assert!(delta_hyperbolicity(&pts[..3], Metric::Euclidean, 0).is_err());
        assert!(DistanceMatrix::from_entries(2, vec![0.0, 1.0, 2.0, 0.0]).is_err());
    }

    #[test]
    fn parse_reports_line_numbers() {
        let ok = EmbeddingSet::parse("dim=2\n1,2\n\n3.5, -4\n").unwrap();
        assert_eq!(ok.points, vec![vec![1.0, 2.0], vec![3.5, -4.0]]);
        assert_eq!(EmbeddingSet::parse(&ok.to_csv()).unwrap(), ok);
        match EmbeddingSet::parse("dim=2\n1,2\n1,x\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        match EmbeddingSet::parse("dim=3\n1,2,3\n1,2\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(matches!(EmbeddingSet::parse("1,2\n"), Err(Error::Parse { line: 1, .. })));
        assert!(EmbeddingSet::parse("").is_err());
    }

    #[test]
    fn full_batch_equals_direct() {
        let mut r = rng::seeded(9);
        let points: Vec<Vec<f64>> = (0..20).map(|_| (0..3).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
        let set = EmbeddingSet { dim: 3, points };
        let rep = batched_delta_rel(Exec::Parallel, &set, 20, 1, 4, Metric::Lorentz).unwrap();
        let direct = delta_rel(&set.points, Metric::Lorentz, 0).unwrap();
        assert_eq!(rep.delta_rel, direct);
        let again = batched_delta_rel(Exec::Sequential, &set, 20, 1, 4, Metric::Lorentz).unwrap();
        assert_eq!(rep, again);
    }
}
