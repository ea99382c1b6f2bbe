//! Error norms, convergence rates, localization-decay fits and basis reports.

use serde::{Deserialize, Serialize};

use crate::basis::{SlodBasis, SlodBasisEntry};
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::solvers::FineSystem;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub l2: f64,
    pub h1_semi: f64,
    /// `sqrt(ε|e|²_{H¹} + ‖e‖²_{L²})`.
    pub eps_norm: f64,
}

/// Norms of `reference − approx`, both given on the free fine nodes.
pub fn error_norms(fine: &FineSystem, reference: &[f64], approx: &[f64]) -> Result<ErrorReport> {
    let p = fine.problem();
    let n = p.free_count();
    if reference.len() != n || approx.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "error of vectors with lengths {} and {}, fine system has {n} free nodes",
            reference.len(),
            approx.len()
        )));
    }
    let e: Vec<f64> = reference.iter().zip(approx).map(|(a, b)| a - b).collect();
    let l2sq = p.m.quad_form(&e).max(0.0);
    let h1sq = p.k.quad_form(&e).max(0.0);
    Ok(ErrorReport {
        l2: l2sq.sqrt(),
        h1_semi: h1sq.sqrt(),
        eps_norm: (p.epsilon() * h1sq + l2sq).sqrt(),
    })
}

/// `‖v‖_{L²}` on the fine grid.
pub fn l2_norm(fine: &FineSystem, v: &[f64]) -> f64 {
    fine.problem().m.quad_form(v).max(0.0).sqrt()
}

/// Least-squares slope of `log error` against `log H`. Needs two or more
/// points with positive finite error and distinct `H`.
pub fn convergence_rate(points: &[(f64, f64)]) -> Option<f64> {
    let xy: Vec<(f64, f64)> = points
        .iter()
        .filter(|(h, e)| *h > 0.0 && *e > 0.0 && e.is_finite())
        .map(|(h, e)| (h.ln(), e.ln()))
        .collect();
    let (slope, _, _) = least_squares(&xy)?;
    Some(slope)
}

/// `(slope, intercept, rms residual)`; `None` for fewer than two points or
/// a single abscissa.
fn least_squares(xy: &[(f64, f64)]) -> Option<(f64, f64, f64)> {
    if xy.len() < 2 {
        return None;
    }
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xy.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    Some((slope, intercept, (rss / n).sqrt()))
}

/// `error ≈ C₁·exp(−C₂·ℓ^exponent)` with `exponent = d/(d−1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub c1: f64,
    pub c2: f64,
    pub exponent: f64,
    /// Root mean square of the residuals in `log error`.
    pub fit_residual: f64,
    /// Set when the fitted rate is not positive.
    pub non_decaying: bool,
}

/// Fits the localization decay to `(ℓ, error)` pairs. The order of the input
/// does not matter.
pub fn decay_fit(dim: usize, points: &[(usize, f64)]) -> Result<DecayFit> {
    if dim < 2 {
        return Err(Error::InvalidParameter(
            "decay fit needs dim >= 2; one-dimensional bases are exactly local".into(),
        ));
    }
    let mut pts: Vec<(usize, f64)> = points
        .iter()
        .copied()
        .filter(|&(l, e)| l >= 1 && e > 0.0 && e.is_finite())
        .collect();
    pts.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let exponent = dim as f64 / (dim as f64 - 1.0);
    let xy: Vec<(f64, f64)> = pts.iter().map(|&(l, e)| ((l as f64).powf(exponent), e.ln())).collect();
    let distinct = {
        let mut ls: Vec<usize> = pts.iter().map(|p| p.0).collect();
        ls.dedup();
        ls.len()
    };
    if pts.len() < 3 || distinct < 2 {
        return Err(Error::InvalidParameter(format!(
            "decay fit needs at least 3 points with positive error and 2 distinct levels, got {}",
            pts.len()
        )));
    }
    let (slope, intercept, fit_residual) = least_squares(&xy).expect("checked above");
    let c2 = -slope;
    Ok(DecayFit {
        c1: intercept.exp(),
        c2,
        exponent,
        fit_residual,
        non_decaying: !(c2 > 0.0),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenRow {
    pub center: usize,
    pub index: usize,
    pub lambda: f64,
    /// `λ_i / λ_max`.
    pub ratio: f64,
    pub selected: bool,
}

/// The normal-derivative spectra of all entries, one row per eigenvalue.
pub fn eigen_decay_report(entries: &[SlodBasisEntry]) -> Vec<EigenRow> {
    entries
        .iter()
        .flat_map(|e| {
            let top = e.spectrum.last().copied().unwrap_or(0.0);
            e.spectrum.iter().enumerate().map(move |(i, &lambda)| EigenRow {
                center: e.center,
                index: i,
                lambda,
                ratio: if top > 0.0 { lambda / top } else { 0.0 },
                selected: e.candidates.contains(&i),
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RieszReport {
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// `σ_max/σ_min`, infinite for a singular matrix.
    pub ratio: f64,
    /// `σ_min < 1e-8·σ_max`.
    pub flagged: bool,
}

/// Extremal singular values of a coefficient matrix.
pub fn riesz_of(matrix: &DenseMatrix) -> Result<RieszReport> {
    let s = matrix.singular_values()?;
    let sigma_max = s.first().copied().unwrap_or(0.0);
    let sigma_min = if matrix.rows() < matrix.cols() {
        0.0
    } else {
        s.last().copied().unwrap_or(0.0)
    };
    Ok(RieszReport {
        sigma_min,
        sigma_max,
        ratio: if sigma_min > 0.0 { sigma_max / sigma_min } else { f64::INFINITY },
        flagged: !(sigma_min >= 1e-8 * sigma_max),
    })
}

/// Stability of the sources as a basis of the piecewise constants.
pub fn riesz_report(basis: &SlodBasis) -> Result<RieszReport> {
    riesz_of(&basis.source_matrix())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::TensorGrid;
    use crate::velocity::VelocityField;
    use proptest::prelude::*;

    #[test]
    fn hat_function_norms() {
        let n = 16;
        let h = 1.0 / n as f64;
        let fine = FineSystem::new(TensorGrid::new(1, n).unwrap(), 0.25, &VelocityField::constant(&[1.0])).unwrap();
        let zero = vec![0.0; n - 1];
        let mut hat = zero.clone();
        hat[6] = 1.0;
        let r = error_norms(&fine, &hat, &zero).unwrap();
        assert!((r.l2 * r.l2 - 2.0 * h / 3.0).abs() < 1e-14);
        assert!((r.h1_semi * r.h1_semi - 2.0 / h).abs() < 1e-10);
        assert!((r.eps_norm.powi(2) - (0.25 * 2.0 / h + 2.0 * h / 3.0)).abs() < 1e-10);
        assert!(error_norms(&fine, &hat, &zero[1..]).is_err());
        let same = error_norms(&fine, &hat, &hat).unwrap();
        assert_eq!((same.l2, same.h1_semi, same.eps_norm), (0.0, 0.0, 0.0));
    }

    #[test]
    fn rates_of_exact_power_laws() {
        let pts: Vec<(f64, f64)> = [0.25, 0.125, 0.0625].iter().map(|&h| (h, 3.0 * h * h)).collect();
        assert!((convergence_rate(&pts).unwrap() - 2.0).abs() < 1e-12);
        assert!(convergence_rate(&pts[..1]).is_none());
        assert!(convergence_rate(&[(0.5, 1.0), (0.25, 0.0)]).is_none());
    }

    #[test]
    fn exact_decay_is_recovered() {
        let f = decay_fit(2, &[(1, 2.0 * (-0.7f64).exp()), (2, 2.0 * (-2.8f64).exp()), (3, 2.0 * (-6.3f64).exp())]).unwrap();
        assert!((f.c1 - 2.0).abs() < 1e-12 && (f.c2 - 0.7).abs() < 1e-12);
        assert!(f.fit_residual < 1e-12 && !f.non_decaying);
        assert_eq!(f.exponent, 2.0);
    }

    #[test]
    fn constant_errors_do_not_decay() {
        let f = decay_fit(3, &[(1, 0.1), (2, 0.1), (3, 0.1)]).unwrap();
        assert_eq!(f.c2, 0.0);
        assert!(f.non_decaying);
        assert!((f.exponent - 1.5).abs() < 1e-15);
    }

    #[test]
    fn decay_fit_rejects_bad_input() {
        assert!(decay_fit(2, &[(1, 0.1), (2, 0.01)]).is_err());
        assert!(decay_fit(1, &[(1, 0.1), (2, 0.01), (3, 0.001)]).is_err());
        assert!(decay_fit(2, &[(2, 0.1), (2, 0.01), (2, 0.001)]).is_err());
    }

    #[test]
    fn riesz_of_simple_matrices() {
        let r = riesz_of(&DenseMatrix::identity(4)).unwrap();
        assert!((r.ratio - 1.0).abs() < 1e-14 && !r.flagged);
        let dup = DenseMatrix::from_rows(&[vec![1.0, 1.0, 0.0], vec![2.0, 2.0, 0.0], vec![0.0, 0.0, 1.0]]);
        let r = riesz_of(&dup).unwrap();
        assert!(r.sigma_min < 1e-14 && r.flagged);
    }

    proptest! {
        #[test]
        fn decay_fit_ignores_point_order(
            errs in proptest::collection::vec(1e-8f64..1.0, 3..7),
            shift in 0usize..6,
        ) {
            let pts: Vec<(usize, f64)> = errs.iter().enumerate().map(|(i, &e)| (i + 1, e)).collect();
            let mut rotated = pts.clone();
            rotated.rotate_left(shift % pts.len());
            rotated.reverse();
            let a = decay_fit(2, &pts).unwrap();
            let b = decay_fit(2, &rotated).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
