//! Single-ellipse fitting by maximum correntropy with a variable kernel
//! center.
//!
//! Each outer iteration solves the conic subproblem for fixed kernel
//! parameters (itself a sequence of weighted-L1 cone programs whose weights
//! come from the convex conjugate of the Laplacian kernel), then re-estimates
//! the kernel center and bandwidth from the new residuals.
//!
//! Points are centered and scaled before solving; the cone margin is
//! rescaled with them so the returned conic is exactly the solution of the
//! problem posed in the caller's coordinates.

use serde::{Deserialize, Serialize};

use crate::conic::{conic_to_geometry, ConicVector, EllipseGeometry, Normalization, PointSet};
use crate::error::{Error, Result};
use crate::kernel::{self, KernelParams};
use crate::solver::{self, ConicSolution, SolveOptions, WeightedL1Problem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub max_iterations: usize,
    pub stop_tolerance: f64,
    pub epsilon: f64,
    pub inner_max_iterations: usize,
    pub inner_tolerance: f64,
    pub initial_center: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            stop_tolerance: 1e-5,
            epsilon: 1.0,
            inner_max_iterations: 100,
            inner_tolerance: 1e-8,
            initial_center: 0.0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 || self.inner_max_iterations == 0 {
            return Err(Error::InvalidInput("iteration limits must be at least 1".into()));
        }
        if !(self.stop_tolerance > 0.0) || !(self.inner_tolerance > 0.0) {
            return Err(Error::InvalidInput("tolerances must be positive".into()));
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() || !self.initial_center.is_finite() {
            return Err(Error::InvalidInput(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub g: f64,
    pub c: f64,
    pub sigma: f64,
    /// Cone programs solved in this iteration's conic subproblem.
    pub inner_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    /// Fitted conic in input coordinates, unnormalized: it satisfies
    /// `B² - 4AC <= -ε²`.
    pub conic: Option<ConicVector>,
    pub geometry: Option<EllipseGeometry>,
    pub kernel: Option<KernelParams>,
    pub iterations: usize,
    pub trace: Vec<TraceEntry>,
    pub converged: bool,
    pub failure: Option<String>,
    /// Set when a bandwidth update hit its iteration cap and the last
    /// iterate was used.
    pub bandwidth_capped: bool,
    /// Set when the residuals collapsed onto the kernel center (exactly
    /// determined or noiseless data) and iteration stopped at that conic.
    pub kernel_degenerate: bool,
    /// Largest certified KKT residual over all cone programs of the fit.
    pub max_kkt_residual: f64,
}

impl FitReport {
    pub fn failed(&self) -> bool {
        self.failure.is_some()
    }

    fn failure(reason: String, trace: Vec<TraceEntry>, max_kkt_residual: f64) -> Self {
        Self {
            conic: None,
            geometry: None,
            kernel: None,
            iterations: trace.len(),
            trace,
            converged: false,
            failure: Some(reason),
            bandwidth_capped: false,
            kernel_degenerate: false,
            max_kkt_residual,
        }
    }
}

/// Convex-conjugate weights `w_i = -exp(-|δ_i - c| / σ)`.
pub fn update_weights(residuals: &[f64], kp: &KernelParams) -> Vec<f64> {
    residuals.iter().map(|d| -(-(d - kp.c).abs() / kp.sigma).exp()).collect()
}

/// `-Σ exp(-|δ_i - c| / σ)`, the quantity the conic subproblem decreases.
pub fn mcc_objective(residuals: &[f64], kp: &KernelParams) -> f64 {
    kernel::center_objective(residuals, kp.c, kp.sigma)
}

/// Design rows prepared for fitting: normalized coordinates plus the cone
/// margin that corresponds to the caller's `ε`.
#[derive(Debug, Clone)]
pub struct FitProblem {
    pub rows: Vec<Vec<f64>>,
    pub epsilon: f64,
}

impl FitProblem {
    pub fn residuals(&self, v: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|u| u.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
    }

    fn solve(&self, weights: Vec<f64>, center: f64, warm: Option<&[f64]>) -> Result<ConicSolution> {
        let problem = WeightedL1Problem::new(&self.rows, vec![center; self.rows.len()], weights, self.epsilon)?;
        let opts = SolveOptions { warm_start: warm.map(<[f64]>::to_vec), ..SolveOptions::default() };
        solver::solve_with(&problem, &opts)
    }
}

/// Result of one conic subproblem.
#[derive(Debug, Clone, PartialEq)]
pub struct SubproblemResult {
    pub v: Vec<f64>,
    /// MCC objective after each accepted cone program (first entry is the
    /// starting point).
    pub objectives: Vec<f64>,
    pub solves: usize,
    pub max_kkt_residual: f64,
}

/// Majorize-minimize loop for fixed kernel parameters, starting from `v`.
///
/// A cone program whose solution would increase the MCC objective (possible
/// only through solver round-off) is rejected and the loop stops.
pub fn solve_mcc(problem: &FitProblem, kp: &KernelParams, cfg: &FitConfig, v: &[f64]) -> Result<SubproblemResult> {
    let mut v = v.to_vec();
    let mut current = mcc_objective(&problem.residuals(&v), kp);
    let mut out = SubproblemResult { v: Vec::new(), objectives: vec![current], solves: 0, max_kkt_residual: 0.0 };
    for _ in 0..cfg.inner_max_iterations {
        let weights: Vec<f64> = update_weights(&problem.residuals(&v), kp).iter().map(|w| -w).collect();
        let sol = problem.solve(weights, kp.c, Some(&v))?;
        out.solves += 1;
        out.max_kkt_residual = out.max_kkt_residual.max(sol.kkt.max_residual());
        let next = mcc_objective(&problem.residuals(&sol.x), kp);
        if next > current {
            break;
        }
        let change = current - next;
        v = sol.x;
        current = next;
        out.objectives.push(current);
        if change < cfg.inner_tolerance {
            break;
        }
    }
    out.v = v;
    Ok(out)
}

/// Normalizes the points and builds the design rows used by the fitters.
pub fn prepare(points: &PointSet, epsilon: f64) -> Result<(FitProblem, Normalization)> {
    if points.len() < 6 {
        return Err(Error::InvalidInput(format!("need at least 6 points, got {}", points.len())));
    }
    let norm = Normalization::fit(points.points());
    let scaled = norm.apply(points)?;
    let rows = scaled.rows().iter().map(|r| r.to_vec()).collect();
    Ok((FitProblem { rows, epsilon: norm.epsilon(epsilon) }, norm))
}

/// Geometry of a conic given in normalized coordinates, mapped back to the
/// input frame without forming the (cancellation-prone) input-frame conic.
pub fn denormalized_geometry(norm: &Normalization, v: &ConicVector) -> Result<EllipseGeometry> {
    let q = conic_to_geometry(v)?;
    Ok(EllipseGeometry::new(
        norm.scale * q.g + norm.shift[0],
        norm.scale * q.h + norm.shift[1],
        norm.scale * q.a,
        norm.scale * q.b,
        q.theta,
    ))
}

/// Outer alternation shared by the single and coupled fits. `v0` is the
/// step-0 solution; returns the final coefficients in normalized
/// coordinates together with the report fields.
pub(crate) fn alternate(problem: &FitProblem, cfg: &FitConfig, v0: Vec<f64>, kkt0: f64) -> AlternationOutcome {
    let mut out = AlternationOutcome {
        v: v0,
        kernel: None,
        trace: Vec::new(),
        converged: false,
        bandwidth_capped: false,
        kernel_degenerate: false,
        max_kkt_residual: kkt0,
        failure: None,
    };
    let deltas = problem.residuals(&out.v);
    let c0 = cfg.initial_center;
    let mut kp = match bandwidth(&deltas, c0, &mut out.bandwidth_capped) {
        Ok(kp) => kp,
        Err(Error::DegenerateSample) => {
            out.kernel_degenerate = true;
            out.converged = true;
            return out;
        }
        Err(e) => {
            out.failure = Some(format!("initial bandwidth: {e}"));
            return out;
        }
    };
    let mut g_prev = kernel::objective_g(&deltas, &kp);
    for _ in 0..cfg.max_iterations {
        let sub = match solve_mcc(problem, &kp, cfg, &out.v) {
            Ok(s) => s,
            Err(e) => {
                out.failure = Some(format!("conic subproblem: {e}"));
                return out;
            }
        };
        out.max_kkt_residual = out.max_kkt_residual.max(sub.max_kkt_residual);
        out.v = sub.v;
        let deltas = problem.residuals(&out.v);
        let next =
            kernel::estimate_center(&deltas, kp.sigma).and_then(|c| bandwidth(&deltas, c, &mut out.bandwidth_capped));
        kp = match next {
            Ok(kp) => kp,
            Err(Error::DegenerateSample) => {
                // The residuals are explained exactly; nothing left to reweight.
                out.kernel_degenerate = true;
                out.converged = true;
                break;
            }
            Err(e) => {
                out.failure = Some(format!("kernel update: {e}"));
                return out;
            }
        };
        let g = kernel::objective_g(&deltas, &kp);
        out.trace.push(TraceEntry { g, c: kp.c, sigma: kp.sigma, inner_iterations: sub.solves });
        if (g - g_prev).abs() < cfg.stop_tolerance {
            out.converged = true;
            break;
        }
        g_prev = g;
    }
    out.kernel = Some(kp);
    out
}

pub(crate) struct AlternationOutcome {
    pub v: Vec<f64>,
    pub kernel: Option<KernelParams>,
    pub trace: Vec<TraceEntry>,
    pub converged: bool,
    pub bandwidth_capped: bool,
    pub kernel_degenerate: bool,
    pub max_kkt_residual: f64,
    pub failure: Option<String>,
}

fn bandwidth(deltas: &[f64], c: f64, capped: &mut bool) -> Result<KernelParams> {
    match kernel::estimate_bandwidth(deltas, c, 0.0) {
        Err(Error::ConvergenceFailure { last, .. }) => {
            *capped = true;
            KernelParams::new(c, last)
        }
        other => other,
    }
}

/// Fits one ellipse with the variable-center correntropy criterion.
///
/// Returns an error only for invalid input; numerical breakdowns are
/// reported through [`FitReport::failure`].
pub fn fit_single(points: &PointSet, cfg: &FitConfig) -> Result<FitReport> {
    cfg.validate()?;
    let (problem, norm) = prepare(points, cfg.epsilon)?;
    let n = problem.rows.len();
    let step0 = match problem.solve(vec![1.0 / n as f64; n], cfg.initial_center, None) {
        Ok(s) => s,
        Err(e) => return Ok(FitReport::failure(format!("initial solve: {e}"), Vec::new(), 0.0)),
    };
    let kkt0 = step0.kkt.max_residual();
    let outcome = alternate(&problem, cfg, step0.x, kkt0);
    Ok(finish_single(outcome, &norm))
}

fn finish_single(outcome: AlternationOutcome, norm: &Normalization) -> FitReport {
    if let Some(reason) = outcome.failure {
        let mut report = FitReport::failure(reason, outcome.trace, outcome.max_kkt_residual);
        report.bandwidth_capped = outcome.bandwidth_capped;
        return report;
    }
    let v = ConicVector::new(outcome.v[..6].try_into().expect("six coefficients"));
    match denormalized_geometry(norm, &v) {
        Ok(geometry) => FitReport {
            conic: Some(norm.denormalize(&v)),
            geometry: Some(geometry),
            kernel: outcome.kernel,
            iterations: outcome.trace.len(),
            trace: outcome.trace,
            converged: outcome.converged,
            failure: None,
            bandwidth_capped: outcome.bandwidth_capped,
            kernel_degenerate: outcome.kernel_degenerate,
            max_kkt_residual: outcome.max_kkt_residual,
        },
        Err(e) => FitReport::failure(format!("final conic: {e}"), outcome.trace, outcome.max_kkt_residual),
    }
}

/// Plain algebraic least squares under the same ellipse cone: minimizes
/// `Σ(vᵀu_i)²` subject to `4AC − B² ≥ ε²`. The constraint is active at the
/// optimum, so this is the direct least-squares ellipse fit with its
/// normalization set to `ε²`, solved in closed form.
pub fn fit_baseline_ls(points: &PointSet, epsilon: f64) -> Result<FitReport> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidInput(format!("epsilon must be positive, got {epsilon}")));
    }
    let (problem, norm) = prepare(points, epsilon)?;
    let (v, residual) = match least_squares_conic(&problem.rows, problem.epsilon) {
        Ok(r) => r,
        Err(e) => return Ok(FitReport::failure(format!("least squares: {e}"), Vec::new(), 0.0)),
    };
    let outcome = AlternationOutcome {
        v,
        kernel: None,
        trace: Vec::new(),
        converged: true,
        bandwidth_capped: false,
        kernel_degenerate: false,
        max_kkt_residual: residual,
        failure: None,
    };
    Ok(finish_single(outcome, &norm))
}

/// Returns the minimizer and its relative stationarity residual
/// `‖Mv − λQv‖ / (‖M‖‖v‖)`.
fn least_squares_conic(rows: &[Vec<f64>], epsilon: f64) -> Result<(Vec<f64>, f64)> {
    use nalgebra::{Matrix3, Matrix6, SymmetricEigen, Vector3, Vector6};

    let mut m = Matrix6::<f64>::zeros();
    for r in rows {
        let u = Vector6::from_column_slice(r);
        m += u * u.transpose();
    }
    m /= rows.len() as f64;
    let s1: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into();
    let s2: Matrix3<f64> = m.fixed_view::<3, 3>(0, 3).into();
    let s3: Matrix3<f64> = m.fixed_view::<3, 3>(3, 3).into();
    let s3_inv = s3.try_inverse().ok_or(Error::DegenerateConic("points are collinear"))?;
    // Linear coefficients are eliminated: [D, E, F] = T [A, B, C].
    let t = -s3_inv * s2.transpose();
    let reduced = s1 + s2 * t;
    let reduced = 0.5 * (reduced + reduced.transpose());
    // 4AC − B² as a quadratic form.
    let q = Matrix3::new(0.0, 0.0, 2.0, 0.0, -1.0, 0.0, 2.0, 0.0, 0.0);

    let scale = reduced.norm().max(f64::MIN_POSITIVE);
    let eig = SymmetricEigen::new(reduced);
    let (kmin, lmin) =
        eig.eigenvalues.iter().enumerate().fold((0, f64::INFINITY), |b, (k, &l)| if l < b.1 { (k, l) } else { b });
    let null: Vector3<f64> = eig.eigenvectors.column(kmin).into();
    let a = if lmin <= 1e-13 * scale && null.dot(&(q * null)) > 0.0 {
        // Exact fit: the residual-free conic is already an ellipse.
        null
    } else {
        let chol = reduced.cholesky().ok_or(Error::DegenerateConic("singular design"))?;
        let l_inv = chol.l().try_inverse().ok_or(Error::DegenerateConic("singular design"))?;
        let k = l_inv * q * l_inv.transpose();
        let ke = SymmetricEigen::new(0.5 * (k + k.transpose()));
        let (top, kappa) =
            ke.eigenvalues
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |b, (i, &l)| if l > b.1 { (i, l) } else { b });
        if !(kappa > 0.0) {
            return Err(Error::DegenerateConic("no ellipse direction"));
        }
        let b: Vector3<f64> = ke.eigenvectors.column(top).into();
        l_inv.transpose() * b
    };
    let form = a.dot(&(q * a));
    if !(form > 0.0) {
        return Err(Error::DegenerateConic("no ellipse direction"));
    }
    let mut a = a * (epsilon / form.sqrt());
    if a[0] + a[2] < 0.0 {
        a = -a;
    }
    let lin = t * a;
    let v = Vector6::new(a[0], a[1], a[2], lin[0], lin[1], lin[2]);

    let mv = m * v;
    let lambda = v.dot(&mv) / (epsilon * epsilon);
    let qa = q * a;
    let mut stat = mv;
    for j in 0..3 {
        stat[j] -= lambda * qa[j];
    }
    let residual = stat.norm() / (m.norm() * v.norm()).max(f64::MIN_POSITIVE);
    Ok((v.as_slice().to_vec(), residual))
}

/// Ground-truth comparison used to label fits as failed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FailureRule {
    /// Center error limit as a fraction of the true long axis.
    pub center_fraction: f64,
    /// Relative error limit for each axis.
    pub axis_fraction: f64,
    /// Orientation error limit in degrees.
    pub angle_degrees: f64,
    /// Orientation is only judged when `(a - b)/a` reaches this value.
    pub distinct_axes: f64,
}

impl Default for FailureRule {
    fn default() -> Self {
        Self { center_fraction: 0.25, axis_fraction: 0.25, angle_degrees: 15.0, distinct_axes: 0.05 }
    }
}

impl FailureRule {
    /// `None` when `est` is an acceptable estimate of `truth`, otherwise the
    /// first violated condition.
    pub fn assess(&self, est: &EllipseGeometry, truth: &EllipseGeometry) -> Option<String> {
        let center = (est.g - truth.g).hypot(est.h - truth.h);
        if !(center <= self.center_fraction * truth.a.max(truth.b)) {
            return Some(format!("center off by {center:.3}"));
        }
        for (name, e, t) in [("long", est.a, truth.a), ("short", est.b, truth.b)] {
            let rel = (e - t).abs() / t;
            if !(rel <= self.axis_fraction) {
                return Some(format!("{name} axis off by {:.1}%", 100.0 * rel));
            }
        }
        if (truth.a - truth.b) / truth.a >= self.distinct_axes {
            let d = wrapped_angle(est.theta - truth.theta).abs().to_degrees();
            if !(d <= self.angle_degrees) {
                return Some(format!("orientation off by {d:.1} deg"));
            }
        }
        None
    }
}

/// Angle difference reduced to `(-π/2, π/2]` (orientation of an axis).
pub fn wrapped_angle(d: f64) -> f64 {
    crate::conic::canonical_angle(d)
}
