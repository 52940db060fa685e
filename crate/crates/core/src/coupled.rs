//! Coupled (concentric, similar) ellipse fitting with unknown association.
//!
//! Both ellipses share `A..E`; the inner one is `F + η` with `η > 0`. Points
//! are first labeled by a relaxed cone program with `η` pinned to one, then
//! the seven-parameter vector `[A, B, C, D, E, F, η]` is fitted by the same
//! correntropy alternation as a single ellipse. Mislabeled points simply act
//! as outliers in the second step.

use serde::{Deserialize, Serialize};

use crate::conic::{conic_to_geometry, ConicVector, EllipseGeometry, Normalization, PointSet};
use crate::error::{Error, Result};
use crate::mcc::{self, denormalized_geometry, FitConfig, FitProblem, FitReport};
use crate::solver::{self, AuxBox, WeightedL1Problem};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssociationResult {
    /// Hard labels: `[1, 0]` outer, `[0, 1]` inner.
    pub phi: Vec<[u8; 2]>,
    pub phi_relaxed: Vec<[f64; 2]>,
    /// Conic of the association program, in input coordinates.
    pub v_assoc: ConicVector,
    pub tau: [f64; 2],
    pub objective: f64,
}

impl AssociationResult {
    pub fn from_labels(inner: &[bool]) -> Self {
        Self {
            phi: inner.iter().map(|&i| if i { [0, 1] } else { [1, 0] }).collect(),
            phi_relaxed: inner.iter().map(|&i| if i { [0.0, 1.0] } else { [1.0, 0.0] }).collect(),
            v_assoc: ConicVector([0.0; 6]),
            tau: [0.0, 1.0],
            objective: f64::NAN,
        }
    }

    pub fn inner(&self) -> Vec<bool> {
        self.phi.iter().map(|p| p[1] == 1).collect()
    }

    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }
}

/// `[A, B, C, D, E, F, η]` in input coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoupledConic {
    pub v_tilde: [f64; 7],
}

impl CoupledConic {
    pub fn outer(&self) -> ConicVector {
        ConicVector(self.v_tilde[..6].try_into().expect("six coefficients"))
    }

    pub fn inner(&self) -> ConicVector {
        let mut v = self.outer();
        v.0[5] += self.eta();
        v
    }

    pub fn eta(&self) -> f64 {
        self.v_tilde[6]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoupledGeometry {
    pub outer: EllipseGeometry,
    pub inner: EllipseGeometry,
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoupledFit {
    pub association: AssociationResult,
    pub conic: Option<CoupledConic>,
    pub geometry: Option<CoupledGeometry>,
    /// `conic`/`geometry` fields of the report describe the outer ellipse.
    pub report: FitReport,
}

/// `η` at or below this fraction of the largest conic coefficient counts as
/// zero: the two ellipses coincide to working precision.
pub const ETA_RELATIVE_FLOOR: f64 = 1e-9;

fn check_size(points: &PointSet) -> Result<()> {
    if points.len() < 12 {
        return Err(Error::InvalidInput(format!("need at least 12 points for a coupled fit, got {}", points.len())));
    }
    Ok(())
}

/// Labels each point as outer or inner by the relaxed program
/// `min Σ|vᵀu_i + p_i|`, `p_i ∈ [0, 1]`, rounding `p_i > 1/2` to inner.
pub fn associate(points: &PointSet, epsilon: f64) -> Result<AssociationResult> {
    check_size(points)?;
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidInput(format!("epsilon must be positive, got {epsilon}")));
    }
    let (problem, norm) = mcc::prepare(points, epsilon)?;
    let n = problem.rows.len();
    let lp = WeightedL1Problem::new(&problem.rows, vec![0.0; n], vec![1.0; n], problem.epsilon)?
        .with_aux(AuxBox { lower: 0.0, upper: 1.0 })?;
    let sol = solver::solve(&lp)?;
    let phi_relaxed: Vec<[f64; 2]> = sol.aux.iter().map(|&p| [1.0 - p, p]).collect();
    Ok(AssociationResult {
        phi: sol.aux.iter().map(|&p| if p > 0.5 { [0, 1] } else { [1, 0] }).collect(),
        phi_relaxed,
        v_assoc: norm.denormalize(&ConicVector(sol.x[..6].try_into().expect("six coefficients"))),
        tau: [0.0, 1.0],
        objective: sol.objective,
    })
}

/// Seven-component design rows: `[u_i, 0]` for outer, `[u_i, 1]` for inner.
pub fn augment(points: &PointSet, assoc: &AssociationResult) -> Result<Vec<[f64; 7]>> {
    if assoc.len() != points.len() {
        return Err(Error::InvalidInput(format!("association has {} labels for {} points", assoc.len(), points.len())));
    }
    Ok(points
        .rows()
        .iter()
        .zip(&assoc.phi)
        .map(|(u, phi)| {
            let mut r = [0.0; 7];
            r[..6].copy_from_slice(u);
            r[6] = f64::from(phi[1]);
            r
        })
        .collect())
}

/// Associates, then fits both ellipses.
///
/// `Err(CoupledDegenerate)` when the fitted `η` is not positive (see
/// [`ETA_RELATIVE_FLOOR`]), i.e. the "inner" ellipse would not lie strictly
/// inside the outer one.
pub fn fit_coupled(points: &PointSet, cfg: &FitConfig) -> Result<CoupledFit> {
    cfg.validate()?;
    let assoc = associate(points, cfg.epsilon)?;
    fit_coupled_with(points, assoc, cfg)
}

/// Second stage only, with caller-supplied labels.
pub fn fit_coupled_with(points: &PointSet, assoc: AssociationResult, cfg: &FitConfig) -> Result<CoupledFit> {
    cfg.validate()?;
    check_size(points)?;
    let (problem, norm) = coupled_problem(points, &assoc, cfg.epsilon)?;
    let n = problem.rows.len();
    let initial =
        WeightedL1Problem::new(&problem.rows, vec![cfg.initial_center; n], vec![1.0 / n as f64; n], problem.epsilon)
            .and_then(|p| solver::solve(&p));
    let step0 = match initial {
        Ok(s) => s,
        Err(e) => return Ok(failed(assoc, format!("initial solve: {e}"), Vec::new(), 0.0)),
    };
    let kkt0 = step0.kkt.max_residual();
    let outcome = mcc::alternate(&problem, cfg, step0.x, kkt0);
    if let Some(reason) = outcome.failure {
        return Ok(failed(assoc, reason, outcome.trace, outcome.max_kkt_residual));
    }
    let v = &outcome.v;
    let eta = v[6];
    let magnitude = v[..6].iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if !(eta > ETA_RELATIVE_FLOOR * magnitude) {
        return Err(Error::CoupledDegenerate { eta });
    }
    let outer_n = ConicVector(v[..6].try_into().expect("six coefficients"));
    let mut inner_n = outer_n;
    inner_n.0[5] += eta;
    let conic = CoupledConic {
        v_tilde: {
            let mut t = [0.0; 7];
            t[..6].copy_from_slice(&norm.denormalize(&outer_n).0);
            t[6] = eta;
            t
        },
    };
    let geometry = denormalized_geometry(&norm, &outer_n).and_then(|outer| {
        let inner = denormalized_geometry(&norm, &inner_n)?;
        Ok(CoupledGeometry { outer, inner, mu: inner.a / outer.a })
    });
    let geometry = match geometry {
        Ok(g) => g,
        Err(e) => return Ok(failed(assoc, format!("final conic: {e}"), outcome.trace, outcome.max_kkt_residual)),
    };
    let report = FitReport {
        conic: Some(conic.outer()),
        geometry: Some(geometry.outer),
        kernel: outcome.kernel,
        iterations: outcome.trace.len(),
        trace: outcome.trace,
        converged: outcome.converged,
        failure: None,
        bandwidth_capped: outcome.bandwidth_capped,
        kernel_degenerate: outcome.kernel_degenerate,
        max_kkt_residual: outcome.max_kkt_residual,
    };
    Ok(CoupledFit { association: assoc, conic: Some(conic), geometry: Some(geometry), report })
}

fn coupled_problem(points: &PointSet, assoc: &AssociationResult, epsilon: f64) -> Result<(FitProblem, Normalization)> {
    let (single, norm) = mcc::prepare(points, epsilon)?;
    let labels = augment(points, assoc)?;
    let rows = single
        .rows
        .into_iter()
        .zip(&labels)
        .map(|(mut r, l)| {
            r.push(l[6]);
            r
        })
        .collect();
    Ok((FitProblem { rows, epsilon: single.epsilon }, norm))
}

fn failed(association: AssociationResult, reason: String, trace: Vec<mcc::TraceEntry>, kkt: f64) -> CoupledFit {
    let report = FitReport {
        conic: None,
        geometry: None,
        kernel: None,
        iterations: trace.len(),
        trace,
        converged: false,
        failure: Some(reason),
        bandwidth_capped: false,
        kernel_degenerate: false,
        max_kkt_residual: kkt,
    };
    CoupledFit { association, conic: None, geometry: None, report }
}

/// Inner ellipse of a coupled pair from the outer geometry and the ratio.
pub fn inner_of(outer: &EllipseGeometry, mu: f64) -> EllipseGeometry {
    EllipseGeometry::new(outer.g, outer.h, mu * outer.a, mu * outer.b, outer.theta)
}

/// Geometry pair of a coupled conic given directly in input coordinates.
pub fn coupled_geometry(conic: &CoupledConic) -> Result<CoupledGeometry> {
    let outer = conic_to_geometry(&conic.outer())?;
    let inner = conic_to_geometry(&conic.inner())?;
    Ok(CoupledGeometry { outer, inner, mu: inner.a / outer.a })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::sample_ellipse;

    fn pair(mu: f64, n: usize) -> (PointSet, Vec<bool>, EllipseGeometry) {
        let outer = EllipseGeometry::new(4.0, 7.0, 40.0, 25.0, 0.4);
        let inner = inner_of(&outer, mu);
        let mut pts = sample_ellipse(&outer, n).unwrap().points().to_vec();
        pts.extend_from_slice(sample_ellipse(&inner, n).unwrap().points());
        let labels = (0..2 * n).map(|i| i >= n).collect();
        (PointSet::new(pts).unwrap(), labels, outer)
    }

    #[test]
    fn augment_appends_label() {
        let (ps, labels, _) = pair(0.5, 10);
        let rows = augment(&ps, &AssociationResult::from_labels(&labels)).unwrap();
        assert_eq!(rows.iter().map(|r| r[6]).sum::<f64>(), 10.0);
        assert_eq!(rows[0][6], 0.0);
        assert_eq!(rows[15][6], 1.0);
        assert_eq!(rows[3][..6], ps.rows()[3]);
    }

    #[test]
    fn clean_pair_is_associated_and_fitted() {
        let (ps, labels, outer) = pair(0.6, 100);
        let fit = fit_coupled(&ps, &FitConfig::default()).unwrap();
        assert_eq!(fit.association.inner(), labels);
        let g = fit.geometry.expect("fit succeeds");
        assert!((g.mu - 0.6).abs() < 1e-3, "{g:?}");
        for (e, t) in g.outer.as_array().iter().zip(outer.as_array()) {
            assert!((e - t).abs() <= 1e-3 * t.abs().max(1.0), "{g:?}");
        }
        assert_eq!((g.inner.g, g.inner.h, g.inner.theta), (g.outer.g, g.outer.h, g.outer.theta));
    }

    #[test]
    fn single_ellipse_input_is_degenerate() {
        let ps = sample_ellipse(&EllipseGeometry::new(0.0, 0.0, 30.0, 20.0, 0.2), 60).unwrap();
        let half: Vec<bool> = (0..60).map(|i| i % 2 == 1).collect();
        let r = fit_coupled_with(&ps, AssociationResult::from_labels(&half), &FitConfig::default());
        assert!(matches!(r, Err(Error::CoupledDegenerate { .. })), "{r:?}");
    }

    #[test]
    fn needs_twelve_points() {
        let (ps, _, _) = pair(0.5, 5);
        assert!(matches!(associate(&ps, 1.0), Err(Error::InvalidInput(_))));
    }
}
