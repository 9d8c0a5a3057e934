//! Dense kernels: eigenvalues, the discrete Lyapunov equation, Gershgorin
//! bounds and word-product enumeration.

use nalgebra::{DMatrix, Schur, SymmetricEigen};

use crate::config::Config;
use crate::error::{RdoError, Result};
use crate::model::Dynamics;
use crate::par;

/// Margin below 1 at which the Lyapunov solve refuses the input.
pub const INSTABILITY_MARGIN: f64 = 1e-9;

pub fn spectral_radius(g: &DMatrix<f64>) -> Result<f64> {
    if !g.is_square() || g.iter().any(|v| !v.is_finite()) {
        return Err(RdoError::EigenFailure);
    }
    if g.nrows() == 0 {
        return Ok(0.0);
    }
    let schur = Schur::try_new(g.clone(), f64::EPSILON, 100_000).ok_or(RdoError::EigenFailure)?;
    Ok(schur.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max))
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(symmetrize(m)).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn sym_min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(0.0)
}

pub fn sym_max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).last().copied().unwrap_or(0.0)
}

pub fn spectral_norm(g: &DMatrix<f64>) -> f64 {
    g.clone().singular_values().iter().copied().fold(0.0, f64::max)
}

/// Solves `G^T M G - M = -I` through the Kronecker system
/// `(I - G^T (x) G^T) vec(M) = vec(I)`, then symmetrizes.
pub fn solve_discrete_lyapunov(g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let rho = spectral_radius(g)?;
    if rho >= 1.0 - INSTABILITY_MARGIN {
        return Err(RdoError::UnstableDynamics { rho });
    }
    let n = g.nrows();
    let gt = g.transpose();
    let k = DMatrix::<f64>::identity(n * n, n * n) - gt.kronecker(&gt);
    let rhs = DMatrix::<f64>::identity(n, n);
    let vec_i = nalgebra::DVector::from_column_slice(rhs.as_slice());
    let sol = k.lu().solve(&vec_i).ok_or(RdoError::SingularSystem)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(RdoError::SingularSystem);
    }
    let m = DMatrix::from_column_slice(n, n, sol.as_slice());
    Ok(symmetrize(&m))
}

/// Frobenius norm of `G^T M G - M + I`.
pub fn lyapunov_residual(g: &DMatrix<f64>, m: &DMatrix<f64>) -> f64 {
    let n = g.nrows();
    (g.transpose() * m * g - m + DMatrix::<f64>::identity(n, n)).norm()
}

pub fn gershgorin_lambda_max(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows())
        .map(|i| m[(i, i)] + (0..m.ncols()).filter(|&j| j != i).map(|j| m[(i, j)].abs()).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Inverse of a symmetric PSD matrix with eigenvalues floored at
/// `eps_rel * trace`.
pub fn floored_inverse(q: &DMatrix<f64>, eps_rel: f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(q));
    let floor = (eps_rel * q.trace().abs()).max(f64::MIN_POSITIVE);
    let inv = eig.eigenvalues.map(|l| 1.0 / l.max(floor));
    let v = &eig.eigenvectors;
    symmetrize(&(v * DMatrix::from_diagonal(&inv) * v.transpose()))
}

/// A word over the generators and its product `G_{w_1} ... G_{w_k}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductWord {
    /// 0-based generator indices.
    pub indices: Vec<usize>,
    pub matrix: DMatrix<f64>,
}

impl ProductWord {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn recompute(&self, dyn_: &Dynamics) -> DMatrix<f64> {
        self.indices.iter().fold(DMatrix::identity(dyn_.n(), dyn_.n()), |acc, &j| acc * &dyn_.matrices()[j])
    }

    /// 1-based label such as `"12"`; `"e"` for the empty word.
    pub fn label(&self) -> String {
        if self.indices.is_empty() {
            return "e".into();
        }
        self.indices.iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join(if self.indices.iter().any(|&i| i >= 9) { "," } else { "" })
    }
}

fn level_count(s: usize, k: usize) -> u128 {
    (0..k).fold(1u128, |acc, _| acc.saturating_mul(s as u128))
}

pub(crate) fn check_level_cap(s: usize, k: usize, cfg: &Config) -> Result<()> {
    let count = level_count(s, k);
    if count > cfg.product_cap as u128 {
        return Err(RdoError::ProductCapExceeded { requested: count, cap: cfg.product_cap });
    }
    Ok(())
}

fn next_level(dyn_: &Dynamics, level: &[ProductWord], cfg: &Config) -> Vec<ProductWord> {
    let children = par::map(cfg.execution, level, |w| {
        dyn_.matrices()
            .iter()
            .enumerate()
            .map(|(j, g)| {
                let mut indices = w.indices.clone();
                indices.push(j);
                ProductWord { indices, matrix: &w.matrix * g }
            })
            .collect::<Vec<_>>()
    });
    children.into_iter().flatten().collect()
}

/// All `s^k` words of length `k` in lexicographic order.
pub fn enumerate_products(dyn_: &Dynamics, k: usize, cfg: &Config) -> Result<Vec<ProductWord>> {
    check_level_cap(dyn_.s(), k, cfg)?;
    let mut level = vec![ProductWord { indices: Vec::new(), matrix: DMatrix::identity(dyn_.n(), dyn_.n()) }];
    for _ in 0..k {
        level = next_level(dyn_, &level, cfg);
    }
    Ok(level)
}

/// Word levels `0..=r`; each level is checked against the cap.
pub fn product_levels(dyn_: &Dynamics, r: usize, cfg: &Config) -> Result<Vec<Vec<ProductWord>>> {
    check_level_cap(dyn_.s(), r, cfg)?;
    let mut levels = vec![vec![ProductWord { indices: Vec::new(), matrix: DMatrix::identity(dyn_.n(), dyn_.n()) }]];
    for _ in 0..r {
        let next = next_level(dyn_, levels.last().expect("nonempty"), cfg);
        levels.push(next);
    }
    Ok(levels)
}
