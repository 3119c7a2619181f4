//! Dense linear-algebra helpers on top of nalgebra: thresholded
//! pseudoinverse, full complex eigendecomposition of a real matrix, and
//! spectral-radius projection.

use nalgebra::{DMatrix, SVD};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative singular-value cutoff for the pseudoinverse.
pub const PINV_RCOND: f64 = 1e-10;
/// Eigenbasis condition number above which the matrix is treated as defective.
pub const EIGENBASIS_COND_LIMIT: f64 = 1e12;

fn svd(m: &DMatrix<f64>) -> Result<SVD<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("matrix has non-finite entries".into()));
    }
    SVD::try_new(m.clone(), true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("SVD did not converge".into()))
}

/// Moore-Penrose pseudoinverse, discarding singular values below
/// `rcond * sigma_max`.
pub fn pinv(m: &DMatrix<f64>, rcond: f64) -> Result<DMatrix<f64>> {
    let d = svd(m)?;
    let u = d.u.as_ref().ok_or_else(|| Error::Numerical("SVD missing U".into()))?;
    let vt = d.v_t.as_ref().ok_or_else(|| Error::Numerical("SVD missing V^T".into()))?;
    let smax = d.singular_values.iter().copied().fold(0.0, f64::max);
    let cutoff = rcond * smax;
    let mut out = DMatrix::<f64>::zeros(m.ncols(), m.nrows());
    for (k, &s) in d.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            let vk = vt.row(k).transpose();
            let uk = u.column(k).transpose();
            out += (vk * uk) / s;
        }
    }
    Ok(out)
}

/// Singular values, largest first.
pub fn singular_values(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    let d = svd(m)?;
    let mut s: Vec<f64> = d.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

/// Left singular vectors and singular values, sorted by decreasing singular value.
pub fn left_singular(m: &DMatrix<f64>) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let d = svd(m)?;
    let u = d.u.as_ref().ok_or_else(|| Error::Numerical("SVD missing U".into()))?;
    let mut order: Vec<usize> = (0..d.singular_values.len()).collect();
    order.sort_by(|&a, &b| d.singular_values[b].total_cmp(&d.singular_values[a]));
    let vecs = order.iter().map(|&k| u.column(k).iter().copied().collect()).collect();
    let vals = order.iter().map(|&k| d.singular_values[k]).collect();
    Ok((vecs, vals))
}

pub fn eigenvalues(a: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    if !a.is_square() {
        return Err(Error::InvalidInput("eigenvalues of a non-square matrix".into()));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("matrix has non-finite entries".into()));
    }
    let mut vals: Vec<Complex64> = a.complex_eigenvalues().iter().copied().collect();
    sort_eigenvalues(&mut vals);
    Ok(vals)
}

/// Orders by decreasing modulus, then by phase, for reproducible tables.
fn sort_eigenvalues(vals: &mut [Complex64]) {
    vals.sort_by(|x, y| {
        y.norm()
            .total_cmp(&x.norm())
            .then_with(|| x.arg().total_cmp(&y.arg()))
    });
}

pub fn spectral_radius(a: &DMatrix<f64>) -> Result<f64> {
    Ok(eigenvalues(a)?.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Eigenvalues with a matching (column) eigenvector matrix.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Vec<Complex64>,
    pub vectors: DMatrix<Complex64>,
    pub condition: f64,
    pub residual: f64,
}

/// Full eigendecomposition of a real square matrix. Eigenvectors are the
/// null vectors of `A - lambda I` obtained from a complex SVD; clustered
/// eigenvalues share one SVD and take that many trailing singular vectors.
pub fn eigen_decompose(a: &DMatrix<f64>) -> Result<EigenDecomposition> {
    let n = a.nrows();
    let values = eigenvalues(a)?;
    let ac: DMatrix<Complex64> = a.map(|v| Complex64::new(v, 0.0));
    let scale = a.norm().max(1.0);
    let mut vectors = DMatrix::<Complex64>::zeros(n, n);
    let mut assigned = vec![false; n];
    for i in 0..n {
        if assigned[i] {
            continue;
        }
        let tol = 1e-7 * values[i].norm().max(1.0);
        let cluster: Vec<usize> = (i..n)
            .filter(|&j| !assigned[j] && (values[j] - values[i]).norm() <= tol)
            .collect();
        let center = cluster.iter().map(|&j| values[j]).sum::<Complex64>() / cluster.len() as f64;
        let mut shifted = ac.clone();
        for d in 0..n {
            shifted[(d, d)] -= center;
        }
        let dec = SVD::try_new(shifted, false, true, f64::EPSILON, 0)
            .ok_or_else(|| Error::Numerical("eigenvector SVD did not converge".into()))?;
        let vt = dec.v_t.as_ref().ok_or_else(|| Error::Numerical("SVD missing V^H".into()))?;
        let mut order: Vec<usize> = (0..dec.singular_values.len()).collect();
        order.sort_by(|&x, &y| dec.singular_values[x].total_cmp(&dec.singular_values[y]));
        for (slot, &j) in cluster.iter().enumerate() {
            let row = vt.row(order[slot]);
            for r in 0..n {
                vectors[(r, j)] = row[r].conj();
            }
            assigned[j] = true;
        }
    }

    let sv = SVD::try_new(vectors.clone(), false, false, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("eigenbasis SVD did not converge".into()))?;
    let smax = sv.singular_values.iter().copied().fold(0.0, f64::max);
    let smin = sv.singular_values.iter().copied().fold(f64::INFINITY, f64::min);
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };

    let lambda = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(values.clone()));
    let residual = (&ac * &vectors - &vectors * lambda).norm() / scale;
    Ok(EigenDecomposition {
        values,
        vectors,
        condition,
        residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionMethod {
    /// Spectral radius already below one.
    Unchanged,
    /// Offending eigenvalues rescaled in the eigenbasis.
    Eigenbasis,
    /// Eigenbasis too ill-conditioned; whole matrix scaled.
    UniformRescale,
}

#[derive(Debug, Clone)]
pub struct SpectralProjection {
    pub matrix: DMatrix<f64>,
    pub method: ProjectionMethod,
    pub radius_before: f64,
    pub radius_after: f64,
    /// Eigenbasis condition number, when an eigendecomposition was attempted.
    pub condition: Option<f64>,
}

/// Maps every eigenvalue with modulus >= 1 to modulus `1 - eps`, keeping
/// its phase, and rebuilds the matrix in its eigenbasis. A near-defective
/// eigenbasis falls back to `A * (1 - eps) / rho(A)`.
pub fn enforce_spectral_radius(a: &DMatrix<f64>, eps: f64) -> Result<SpectralProjection> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidInput("margin must lie in (0, 1)".into()));
    }
    let values = eigenvalues(a)?;
    let rho = values.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if rho < 1.0 {
        return Ok(SpectralProjection {
            matrix: a.clone(),
            method: ProjectionMethod::Unchanged,
            radius_before: rho,
            radius_after: rho,
            condition: None,
        });
    }
    let target = 1.0 - eps;
    let uniform = |condition: Option<f64>| -> Result<SpectralProjection> {
        let m = a * (target / rho);
        let after = spectral_radius(&m)?;
        Ok(SpectralProjection {
            matrix: m,
            method: ProjectionMethod::UniformRescale,
            radius_before: rho,
            radius_after: after,
            condition,
        })
    };

    let dec = eigen_decompose(a)?;
    if !(dec.condition <= EIGENBASIS_COND_LIMIT) || !(dec.residual <= 1e-8) {
        return uniform(Some(dec.condition));
    }
    let Some(inv) = dec.vectors.clone().try_inverse() else {
        return uniform(Some(dec.condition));
    };
    let rescaled: Vec<Complex64> = dec
        .values
        .iter()
        .map(|&z| if z.norm() >= 1.0 { z * (target / z.norm()) } else { z })
        .collect();
    let lambda = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(rescaled));
    let rebuilt = &dec.vectors * lambda * inv;
    let imag = rebuilt.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    if imag > 1e-6 * a.norm().max(1.0) {
        return uniform(Some(dec.condition));
    }
    let m = rebuilt.map(|z| z.re);
    let after = spectral_radius(&m)?;
    if after >= 1.0 {
        return uniform(Some(dec.condition));
    }
    Ok(SpectralProjection {
        matrix: m,
        method: ProjectionMethod::Eigenbasis,
        radius_before: rho,
        radius_after: after,
        condition: Some(dec.condition),
    })
}
