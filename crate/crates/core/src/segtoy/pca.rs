//! PCA of class descriptors and prototype construction.

use serde::{Deserialize, Serialize};

use crate::entailment::{EntailmentConfig, PrototypeSet};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{symmetric_eigen, Mat};
use crate::lorentz::{dot, exp_lift_origin, norm_sq};

/// Relative eigenvalue floor below which a direction counts as absent.
const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// `dim x d_orig`; row `k` is the k-th principal axis.
    pub components: Mat,
    /// Every covariance eigenvalue, descending.
    pub eigenvalues: Vec<f64>,
    pub requested_dim: usize,
    /// Set when the data had fewer than `requested_dim` directions.
    pub warning: Option<String>,
}

impl Pca {
    pub fn dim(&self) -> usize {
        self.components.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.input_dim(), v.len())?;
        let centred: Vec<f64> = v.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        Ok((0..self.dim()).map(|k| dot(self.components.row(k), &centred)).collect())
    }

    pub fn reconstruct(&self, z: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (k, zk) in z.iter().enumerate() {
            for (o, c) in out.iter_mut().zip(self.components.row(k)) {
                *o += zk * c;
            }
        }
        out
    }
}

/// Projects the mean-centred rows of `x` onto the top `d` eigenvectors of
/// their sample covariance. Eigenvector signs follow the eigen solver's
/// convention (first non-negligible component positive).
pub fn pca_reduce(x: &Mat, d: usize) -> Result<(Pca, Mat)> {
    let (n, m) = (x.rows(), x.cols());
    if n < 2 {
        return Err(Error::Usage(format!("PCA needs at least 2 rows, got {n}")));
    }
    if d == 0 || d > n.min(m) {
        return Err(Error::Usage(format!("PCA target dim {d} must be in 1..={}", n.min(m))));
    }
    let mean: Vec<f64> = (0..m).map(|j| (0..n).map(|i| x[(i, j)]).sum::<f64>() / n as f64).collect();
    let mut cov = Mat::zeros(m, m);
    for i in 0..n {
        let row = x.row(i);
        for a in 0..m {
            let da = row[a] - mean[a];
            for b in a..m {
                cov[(a, b)] += da * (row[b] - mean[b]);
            }
        }
    }
    for a in 0..m {
        for b in a..m {
            let v = cov[(a, b)] / (n - 1) as f64;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    let eig = symmetric_eigen(&cov)?;
    let top = eig.values.first().copied().unwrap_or(0.0).max(0.0);
    let rank = eig.values.iter().filter(|&&v| v > RANK_TOL * top && v > 0.0).count();
    if rank == 0 {
        return Err(Error::Degenerate("all descriptor rows are identical".into()));
    }
    let dim = d.min(rank);
    let warning = (dim < d).then(|| format!("descriptors span only {rank} directions; using d = {dim} instead of {d}"));
    let mut components = Mat::zeros(dim, m);
    for k in 0..dim {
        for j in 0..m {
            components[(k, j)] = eig.vectors[(j, k)];
        }
    }
    let pca = Pca { mean, components, eigenvalues: eig.values, requested_dim: d, warning };
    let mut reduced = Mat::zeros(n, dim);
    for i in 0..n {
        let z = pca.project(x.row(i))?;
        reduced.row_mut(i).copy_from_slice(&z);
    }
    Ok((pca, reduced))
}

/// Class descriptors with their PCA and the tangent scaling that brings the
/// mean reduced row to unit norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptorBank {
    pub names: Vec<String>,
    pub raw: Mat,
    pub pca: Pca,
    pub alpha_txt: f64,
    /// PCA rows multiplied by `alpha_txt`.
    pub reduced: Mat,
}

impl DescriptorBank {
    pub fn new(names: Vec<String>, raw: Mat, d: usize) -> Result<Self> {
        check_dim(raw.rows(), names.len())?;
        let (pca, pcs) = pca_reduce(&raw, d)?;
        let norms: Vec<f64> = (0..pcs.rows()).map(|i| norm_sq(pcs.row(i)).sqrt()).collect();
        if let Some(i) = norms.iter().position(|&n| n == 0.0) {
            return Err(Error::Usage(format!("descriptor '{}' reduces to the zero vector", names[i])));
        }
        let alpha_txt = norms.len() as f64 / norms.iter().sum::<f64>();
        let mut reduced = pcs;
        reduced.as_mut_slice().iter_mut().for_each(|v| *v *= alpha_txt);
        Ok(Self { names, raw, pca, alpha_txt, reduced })
    }

    pub fn dim(&self) -> usize {
        self.reduced.cols()
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Tangent vector of an arbitrary descriptor under the trained PCA and
    /// scaling (used for novel and parent queries).
    pub fn encode(&self, descriptor: &[f64]) -> Result<Vec<f64>> {
        let mut z = self.pca.project(descriptor)?;
        z.iter_mut().for_each(|v| *v *= self.alpha_txt);
        Ok(z)
    }
}

/// Class anchors in both tangent (Euclidean head) and lifted form.
#[derive(Debug, Clone, PartialEq)]
pub struct Prototypes {
    pub tangent: Mat,
    pub set: PrototypeSet,
}

impl Prototypes {
    pub fn len(&self) -> usize {
        self.tangent.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.tangent.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.tangent.cols()
    }

    /// Appends a novel class from its tangent vector.
    pub fn with_extra(&self, name: &str, tangent: &[f64], cfg: &EntailmentConfig) -> Result<Prototypes> {
        check_dim(self.dim(), tangent.len())?;
        let mut rows: Vec<Vec<f64>> = (0..self.len()).map(|i| self.tangent.row(i).to_vec()).collect();
        rows.push(tangent.to_vec());
        let mut names = self.set.labels().to_vec();
        names.push(name.to_string());
        from_tangent_rows(Mat::from_rows(&rows)?, names, self.set.descriptor_dim(), cfg)
    }
}

fn from_tangent_rows(tangent: Mat, names: Vec<String>, descriptor_dim: usize, cfg: &EntailmentConfig) -> Result<Prototypes> {
    let anchors = (0..tangent.rows())
        .map(|i| exp_lift_origin(tangent.row(i), cfg.curvature))
        .collect::<Result<Vec<_>>>()?;
    let set = PrototypeSet::new(anchors, names, descriptor_dim, cfg)?;
    Ok(Prototypes { tangent, set })
}

/// Lifts the bank's scaled rows through the exponential map at the origin.
pub fn build_prototypes(bank: &DescriptorBank, cfg: &EntailmentConfig) -> Result<Prototypes> {
    from_tangent_rows(bank.reduced.clone(), bank.names.clone(), bank.raw.cols(), cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lorentz::{geodesic_distance, LorentzPoint};

    fn fixture() -> Mat {
        Mat::from_rows(&[
            vec![2.0, 0.0, 1.0, 3.0],
            vec![1.0, 5.0, 0.0, 2.0],
            vec![4.0, 2.0, 2.0, 1.0],
            vec![0.0, 3.0, 7.0, 0.0],
            vec![3.0, 1.0, 5.0, 6.0],
        ])
        .unwrap()
    }

    #[test]
    fn eigenvalues_match_characteristic_roots() {
        // roots of det(Cov - l I) for the fixture, sample covariance
        let want = [8.840_324_076_547_605, 7.555_857_075_744_464, 2.409_749_422_944_02, 1.194_069_424_763_911_2];
        let (pca, _) = pca_reduce(&fixture(), 4).unwrap();
        for (got, w) in pca.eigenvalues.iter().zip(want) {
            assert!((got - w).abs() < 1e-12, "{got} vs {w}");
        }
        assert!(pca.warning.is_none());
    }

    #[test]
    fn full_dim_preserves_distances() {
        let x = fixture();
        let (_, z) = pca_reduce(&x, 4).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let dx: f64 = x.row(i).iter().zip(x.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
                let dz: f64 = z.row(i).iter().zip(z.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
                assert!((dx.sqrt() - dz.sqrt()).abs() < 1e-8);
            }
        }
    }

    fn recon_error(x: &Mat, d: usize) -> f64 {
        let (pca, z) = pca_reduce(x, d).unwrap();
        (0..x.rows())
            .map(|i| {
                let r = pca.reconstruct(z.row(i));
                r.iter().zip(x.row(i)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
            })
            .sum()
    }

    #[test]
    fn reconstruction_error_nonincreasing() {
        let x = fixture();
        let errs: Vec<f64> = (1..=4).map(|d| recon_error(&x, d)).collect();
        for w in errs.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        assert!(errs[3] < 1e-20);
    }

    #[test]
    fn subspace_data_and_rank_warning() {
        // rows on a line in 3-d
        let x = Mat::from_rows(&[vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 6.0], vec![-1.0, -2.0, -3.0]]).unwrap();
        assert!(recon_error(&x, 1) < 1e-8);
        let (pca, z) = pca_reduce(&x, 2).unwrap();
        assert_eq!(pca.dim(), 1);
        assert_eq!(z.cols(), 1);
        assert!(pca.warning.is_some());
        assert!(pca.components[(0, 0)] > 0.0);
        let same = Mat::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!(pca_reduce(&same, 1).is_err());
        assert!(pca_reduce(&fixture(), 5).is_err());
    }

    #[test]
    fn unit_rows_land_at_radius_one() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let raw = Mat::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0], vec![s, s], vec![-s, -s]])
            .unwrap();
        let names = (0..6).map(|i| format!("c{i}")).collect();
        let bank = DescriptorBank::new(names, raw, 2).unwrap();
        assert!((bank.alpha_txt - 1.0).abs() < 1e-12);
        let protos = build_prototypes(&bank, &EntailmentConfig::default()).unwrap();
        let o = LorentzPoint::origin(2, crate::lorentz::Curvature::UNIT);
        for i in 0..6 {
            let a = protos.set.anchor(i);
            assert!((geodesic_distance(&o, &a).unwrap() - 1.0).abs() < 1e-12);
            assert!((protos.set.aperture(i) - 0.17).abs() < 0.005);
        }
    }

    #[test]
    fn zero_descriptor_rejected() {
        // the middle row sits at the mean and reduces to zero
        let raw = Mat::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0], vec![-1.0, 0.0]]).unwrap();
        let names = vec!["a".into(), "mid".into(), "b".into()];
        match DescriptorBank::new(names, raw, 1) {
            Err(Error::Usage(m)) => assert!(m.contains("mid")),
            other => panic!("{other:?}"),
        }
    }
}
