//! Dense barrier solver for weighted-L1 conic fitting problems.
//!
//! The problem family is
//!
//! ```text
//! minimize   Σ w_i ζ_i
//! subject to |a_iᵀx + p_i - o_i| <= ζ_i           (every row)
//!            ‖[x_B, ε, x_A - x_C]‖ <= x_A + x_C     (one 3-slot cone)
//!            l <= p_i <= u                         (only with an aux box)
//! ```
//!
//! with `x` of dimension 6 or 7 and the per-row auxiliary `p_i` present only
//! when an [`AuxBox`] is attached. The slacks never enter the Newton system:
//! for a fixed barrier weight `t` the optimal `ζ_i` has a closed form, which
//! leaves a smooth self-concordant function of `(x, p)` whose Newton system
//! is reduced to `dim(x)` unknowns by eliminating the diagonal `p` block.
//!
//! A small penalty `(γ/t)(x_A + x_C)` is added along the central path. It
//! vanishes as `t → ∞` but keeps the path bounded when the rows admit an
//! exact conic, in which case every positive multiple of that conic is
//! optimal.
//!
//! Multipliers are rebuilt from the row terms after each centering, nudged
//! onto exact stationarity, and checked by [`certify`]; the solver stops on
//! the certified residuals rather than on the barrier weight alone, because
//! the central path cannot be followed to arbitrary accuracy in double
//! precision.

use nalgebra::{DMatrix, DVector};

use crate::accurate::{self, CompensatedSum};
use crate::error::{Error, Result};

/// Per-row auxiliary variable `p_i ∈ [lower, upper]` entering row `i` with
/// coefficient `+1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuxBox {
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedL1Problem {
    dim: usize,
    rows: Vec<f64>,
    pub offsets: Vec<f64>,
    pub weights: Vec<f64>,
    pub epsilon: f64,
    pub aux: Option<AuxBox>,
    /// Slots of `x` holding `(A, B, C)` for the cone constraint.
    pub soc_index: [usize; 3],
}

impl WeightedL1Problem {
    pub fn new<R: AsRef<[f64]>>(rows: &[R], offsets: Vec<f64>, weights: Vec<f64>, epsilon: f64) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        if rows.iter().any(|r| r.as_ref().len() != dim) {
            return Err(Error::InvalidInput("design rows have different lengths".into()));
        }
        let problem = Self {
            dim,
            rows: rows.iter().flat_map(|r| r.as_ref().iter().copied()).collect(),
            offsets,
            weights,
            epsilon,
            aux: None,
            soc_index: [0, 1, 2],
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn with_aux(mut self, aux: AuxBox) -> Result<Self> {
        self.aux = Some(aux);
        self.validate()?;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.offsets.len();
        if !(6..=7).contains(&self.dim) {
            return Err(Error::InvalidInput(format!("rows must have 6 or 7 entries, got {}", self.dim)));
        }
        if n < 6 || self.rows.len() != n * self.dim || self.weights.len() != n {
            return Err(Error::InvalidInput(format!(
                "need at least 6 rows with matching offsets and weights (rows {}, offsets {n}, weights {})",
                self.rows.len() / self.dim.max(1),
                self.weights.len()
            )));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidInput("weights must be finite and non-negative".into()));
        }
        if self.rows.iter().chain(&self.offsets).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite problem data".into()));
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidInput(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        let [ia, ib, ic] = self.soc_index;
        if ia.max(ib).max(ic) >= self.dim || ia == ib || ib == ic || ia == ic {
            return Err(Error::InvalidInput("cone slots must be three distinct coefficients".into()));
        }
        if let Some(b) = self.aux {
            if !(b.lower < b.upper) || !b.lower.is_finite() || !b.upper.is_finite() {
                return Err(Error::InvalidInput("aux box needs finite lower < upper".into()));
            }
        }
        Ok(())
    }

    fn residual(&self, i: usize, x: &[f64], p: &[f64]) -> f64 {
        let mut r = -self.offsets[i];
        for (a, v) in self.row(i).iter().zip(x) {
            r += a * v;
        }
        if self.aux.is_some() {
            r += p[i];
        }
        r
    }

    /// Cone argument `[x_A + x_C, x_B, ε, x_A - x_C]`.
    fn cone_point(&self, x: &[f64]) -> [f64; 4] {
        let [ia, ib, ic] = self.soc_index;
        [x[ia] + x[ic], x[ib], self.epsilon, x[ia] - x[ic]]
    }

    /// `4 x_A x_C - x_B² - ε²`, positive strictly inside the cone.
    fn cone_margin(&self, x: &[f64]) -> f64 {
        let [ia, ib, ic] = self.soc_index;
        4.0 * x[ia] * x[ic] - x[ib] * x[ib] - self.epsilon * self.epsilon
    }

    fn strictly_feasible(&self, x: &[f64], p: &[f64]) -> bool {
        let [ia, _, ic] = self.soc_index;
        if !(self.cone_margin(x) > 0.0) || !(x[ia] + x[ic] > 0.0) || x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        match self.aux {
            Some(b) => p.iter().all(|&v| v > b.lower && v < b.upper),
            None => true,
        }
    }
}

/// Lagrange multipliers recovered from the central path.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DualEstimate {
    /// Multiplier of `ζ_i - r_i >= 0`.
    pub lambda_plus: Vec<f64>,
    /// Multiplier of `ζ_i + r_i >= 0`.
    pub lambda_minus: Vec<f64>,
    /// Cone multiplier, paired with `[x_A + x_C, x_B, ε, x_A - x_C]`.
    pub cone: [f64; 4],
    pub nu_lower: Vec<f64>,
    pub nu_upper: Vec<f64>,
}

/// Scaled optimality residuals; see [`certify`].
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize)]
pub struct KktReport {
    pub primal: f64,
    pub cone: f64,
    pub bounds: f64,
    pub stationarity: f64,
    pub dual_cone: f64,
    /// Relative duality gap; negative values only come from rounding or
    /// infeasible duals.
    pub gap: f64,
    pub primal_objective: f64,
    pub dual_objective: f64,
}

impl KktReport {
    pub fn max_residual(&self) -> f64 {
        [self.primal, self.cone, self.bounds, self.stationarity, self.dual_cone, self.gap.abs()]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicSolution {
    pub x: Vec<f64>,
    /// Auxiliary variables (empty without an aux box).
    pub aux: Vec<f64>,
    pub zeta: Vec<f64>,
    pub objective: f64,
    pub duals: DualEstimate,
    pub kkt: KktReport,
    /// Barrier-weight increases.
    pub outer_iterations: usize,
    /// Total Newton steps.
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    /// Relative duality-gap target.
    pub tolerance: f64,
    pub max_outer: usize,
    pub max_newton: usize,
    /// Starting coefficients; ignored when not strictly inside the cone.
    pub warm_start: Option<Vec<f64>>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tolerance: 1e-9, max_outer: 200, max_newton: 100, warm_start: None }
    }
}

const BARRIER_GROWTH: f64 = 10.0;
const ARMIJO: f64 = 0.01;
const BACKTRACK: f64 = 0.5;
const CENTERED: f64 = 1e-10;
/// Largest certified residual returned without an error.
const ACCEPTABLE: f64 = 1e-7;
/// Outer iterations without a better certificate before giving up.
const STALL_LIMIT: usize = 3;

pub fn solve(problem: &WeightedL1Problem) -> Result<ConicSolution> {
    solve_with(problem, &SolveOptions::default())
}

pub fn solve_with(problem: &WeightedL1Problem, opts: &SolveOptions) -> Result<ConicSolution> {
    problem.validate()?;
    let (mut x, mut p) = start_point(problem, opts.warm_start.as_deref());

    let active = problem.weights.iter().filter(|w| **w > 0.0).count();
    if active == 0 {
        return Ok(finish(problem, x, p, None, 0, 0));
    }
    let barrier_order = (2 * active + 2 + if problem.aux.is_some() { 2 * problem.len() } else { 0 }) as f64;
    let gamma = 1.0 / problem.epsilon;

    // Start where the barrier and the objective are of similar size.
    let (mut l1, mut size) = (0.0, 0.0);
    for i in 0..problem.len() {
        let w = problem.weights[i];
        let row: f64 = problem.row(i).iter().zip(&x).map(|(a, v)| (a * v).abs()).sum();
        l1 += w * problem.residual(i, &x, &p).abs();
        size += w * (row + problem.offsets[i].abs());
    }
    let mut t = barrier_order / l1.max(1e-8 * size).max(f64::MIN_POSITIVE);

    let mut best: Option<ConicSolution> = None;
    let mut newton_steps = 0;
    let mut stale = 0;
    for outer in 1..=opts.max_outer {
        let path = CentralPath { problem, t, gamma };
        match path.center(&mut x, &mut p, opts.max_newton) {
            Ok(steps) => newton_steps += steps,
            // Beyond this barrier weight the Newton system is numerically
            // singular; keep the best certified iterate.
            Err(_) if best.is_some() => break,
            Err(e) => return Err(e),
        }
        let candidate = finish(problem, x.clone(), p.clone(), Some(t), outer, newton_steps);
        let score = candidate.kkt.max_residual();
        if best.as_ref().is_none_or(|b| score < b.kkt.max_residual()) {
            best = Some(candidate);
            stale = 0;
        } else {
            stale += 1;
            if stale >= STALL_LIMIT {
                break;
            }
        }
        if score <= opts.tolerance {
            break;
        }
        t *= BARRIER_GROWTH;
        if !t.is_finite() {
            break;
        }
    }
    let best = best.expect("at least one outer iteration");
    if best.kkt.max_residual() <= ACCEPTABLE {
        Ok(best)
    } else {
        Err(Error::SolverStalled { iterations: opts.max_outer, gap: best.kkt.gap })
    }
}

fn start_point(problem: &WeightedL1Problem, warm: Option<&[f64]>) -> (Vec<f64>, Vec<f64>) {
    let p = match problem.aux {
        Some(b) => vec![0.5 * (b.lower + b.upper); problem.len()],
        None => Vec::new(),
    };
    if let Some(w) = warm {
        if w.len() == problem.dim && problem.strictly_feasible(w, &p) {
            // Move off the cone boundary so the barrier starts well scaled.
            let eps2 = problem.epsilon * problem.epsilon;
            let margin = problem.cone_margin(w) + eps2;
            let lift = (2.0 * eps2 / margin).sqrt().max(1.0);
            return (w.iter().map(|v| v * lift).collect(), p);
        }
    }
    let [ia, _, ic] = problem.soc_index;
    let radius =
        (0..problem.len()).map(|i| problem.row(i)[ia] + problem.row(i)[ic]).sum::<f64>() / problem.len() as f64;
    let s = problem.epsilon.max(1.0);
    let mut x = vec![0.0; problem.dim];
    x[ia] = s;
    x[ic] = s;
    if problem.dim > 5 {
        x[5] = -s * radius;
    }
    (x, p)
}

/// Row barrier after eliminating `ζ`: with `k = 1/(t w)` and
/// `ρ = hypot(k, r)` the minimizing slack is `ζ = k + ρ` and the barrier
/// value (up to a constant) is `ρ/k - ln(k + ρ)`.
#[derive(Debug, Clone, Copy)]
struct RowTerm {
    value: f64,
    d1: f64,
    d2: f64,
}

fn row_term(r: f64, k: f64) -> RowTerm {
    let rho = k.hypot(r);
    RowTerm { value: rho / k - (k + rho).ln(), d1: r / (k * (k + rho)), d2: 1.0 / (rho * (k + rho)) }
}

/// `(ρ + r, ρ - r)` without cancellation.
fn split_rho(r: f64, k: f64) -> (f64, f64) {
    let rho = k.hypot(r);
    if r >= 0.0 {
        let plus = rho + r;
        (plus, k * k / plus)
    } else {
        let minus = rho - r;
        (k * k / minus, minus)
    }
}

struct CentralPath<'a> {
    problem: &'a WeightedL1Problem,
    t: f64,
    gamma: f64,
}

impl CentralPath<'_> {
    fn row_scale(&self, i: usize) -> Option<f64> {
        let w = self.problem.weights[i];
        let k = 1.0 / (self.t * w);
        (w > 0.0 && k.is_finite() && k > 0.0).then_some(k)
    }

    fn value(&self, x: &[f64], p: &[f64]) -> f64 {
        let pb = self.problem;
        let [ia, _, ic] = pb.soc_index;
        let mut acc = CompensatedSum::new();
        for i in 0..pb.len() {
            if let Some(k) = self.row_scale(i) {
                acc.add(row_term(pb.residual(i, x, p), k).value);
            }
        }
        acc.add(-pb.cone_margin(x).ln() + self.gamma * (x[ia] + x[ic]));
        if let Some(b) = pb.aux {
            for &v in p {
                acc.add(-(v - b.lower).ln() - (b.upper - v).ln());
            }
        }
        acc.value()
    }

    /// Newton direction and squared decrement.
    fn newton(&self, x: &[f64], p: &[f64]) -> Result<(Vec<f64>, Vec<f64>, f64)> {
        let pb = self.problem;
        let n = pb.dim;
        let m = pb.len();
        let mut s = DMatrix::<f64>::zeros(n, n);
        let mut gx = DVector::<f64>::zeros(n);
        let mut rhs_extra = DVector::<f64>::zeros(n);
        let mut gp = vec![0.0; if pb.aux.is_some() { m } else { 0 }];
        let mut hpp = vec![0.0; gp.len()];
        let mut psi2 = vec![0.0; m];

        for i in 0..m {
            let a = pb.row(i);
            let term = self.row_scale(i).map(|k| row_term(pb.residual(i, x, p), k));
            let (d1, d2) = term.map(|t| (t.d1, t.d2)).unwrap_or((0.0, 0.0));
            psi2[i] = d2;
            let curvature = if let Some(b) = pb.aux {
                let (lo, up) = (p[i] - b.lower, b.upper - p[i]);
                let box1 = -1.0 / lo + 1.0 / up;
                let box2 = 1.0 / (lo * lo) + 1.0 / (up * up);
                gp[i] = d1 + box1;
                hpp[i] = d2 + box2;
                let coef = d2 / hpp[i] * gp[i];
                for j in 0..n {
                    rhs_extra[j] += coef * a[j];
                }
                d2 * box2 / hpp[i]
            } else {
                d2
            };
            for j in 0..n {
                gx[j] += d1 * a[j];
                if curvature != 0.0 {
                    let cj = curvature * a[j];
                    for l in 0..=j {
                        s[(j, l)] += cj * a[l];
                    }
                }
            }
        }
        for j in 0..n {
            for l in 0..j {
                s[(l, j)] = s[(j, l)];
            }
        }

        let [ia, ib, ic] = pb.soc_index;
        let q = pb.cone_margin(x);
        let grad_q = [4.0 * x[ic], -2.0 * x[ib], 4.0 * x[ia]];
        let slots = [ia, ib, ic];
        for (u, &su) in slots.iter().enumerate() {
            gx[su] += -grad_q[u] / q;
            for (v, &sv) in slots.iter().enumerate() {
                s[(su, sv)] += grad_q[u] * grad_q[v] / (q * q);
            }
        }
        s[(ia, ic)] -= 4.0 / q;
        s[(ic, ia)] -= 4.0 / q;
        s[(ib, ib)] += 2.0 / q;
        gx[ia] += self.gamma;
        gx[ic] += self.gamma;

        let rhs = -&gx + rhs_extra;
        let dx = solve_spd(&s, &rhs)?;
        let mut dp = vec![0.0; gp.len()];
        let mut dec = -gx.dot(&dx);
        for i in 0..gp.len() {
            let ad: f64 = pb.row(i).iter().zip(dx.iter()).map(|(a, d)| a * d).sum();
            dp[i] = -(gp[i] + psi2[i] * ad) / hpp[i];
            dec -= gp[i] * dp[i];
        }
        Ok((dx.iter().copied().collect(), dp, dec))
    }

    fn center(&self, x: &mut Vec<f64>, p: &mut Vec<f64>, max_newton: usize) -> Result<usize> {
        let pb = self.problem;
        let mut steps = 0;
        let mut value = self.value(x, p);
        while steps < max_newton {
            let (dx, dp, dec) = self.newton(x, p)?;
            if !dec.is_finite() {
                return Err(Error::Infeasible("Newton system became non-finite".into()));
            }
            if dec <= CENTERED {
                break;
            }
            steps += 1;
            let damped = dec.sqrt() >= 0.25;
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..80 {
                let xn: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + alpha * d).collect();
                let pn: Vec<f64> = p.iter().zip(&dp).map(|(a, d)| a + alpha * d).collect();
                if pb.strictly_feasible(&xn, &pn) {
                    let vn = self.value(&xn, &pn);
                    if (!damped && vn.is_finite()) || vn < value - ARMIJO * alpha * dec {
                        *x = xn;
                        *p = pn;
                        value = vn;
                        accepted = true;
                        break;
                    }
                }
                alpha *= BACKTRACK;
            }
            if !accepted {
                // Rounding noise in the barrier value; the point is as centered
                // as double precision allows.
                break;
            }
        }
        Ok(steps)
    }
}

/// Solves an SPD system with diagonal equilibration, escalating diagonal
/// regularization on factorization failure, and two refinement sweeps.
fn solve_spd(s: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let n = s.nrows();
    let d = DVector::from_iterator(
        n,
        (0..n).map(|i| if s[(i, i)] > 0.0 && s[(i, i)].is_finite() { 1.0 / s[(i, i)].sqrt() } else { 1.0 }),
    );
    let scaled = DMatrix::from_fn(n, n, |i, j| s[(i, j)] * d[i] * d[j]);
    let mut reg = 0.0;
    let chol = loop {
        let mut m = scaled.clone();
        for i in 0..n {
            m[(i, i)] += reg;
        }
        if let Some(c) = m.cholesky() {
            break c;
        }
        reg = if reg == 0.0 { 1e-14 } else { reg * 100.0 };
        if reg > 1.0 {
            return Err(Error::Infeasible("Newton system is singular".into()));
        }
    };
    let solve_scaled = |r: &DVector<f64>| -> DVector<f64> {
        let z = chol.solve(&r.component_mul(&d));
        z.component_mul(&d)
    };
    let mut x = solve_scaled(rhs);
    for _ in 0..2 {
        let residual = rhs - s * &x;
        x += solve_scaled(&residual);
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Infeasible("Newton direction is non-finite".into()));
    }
    Ok(x)
}

fn finish(
    problem: &WeightedL1Problem,
    x: Vec<f64>,
    p: Vec<f64>,
    t: Option<f64>,
    outer: usize,
    newton: usize,
) -> ConicSolution {
    let m = problem.len();
    let residuals: Vec<f64> = (0..m).map(|i| problem.residual(i, &x, &p)).collect();
    let zeta: Vec<f64> = residuals.iter().map(|r| r.abs()).collect();
    let objective = accurate::dot(&problem.weights, &zeta);

    let mut sol = ConicSolution {
        x,
        aux: p,
        zeta,
        objective,
        duals: dual_from_differences(problem, &vec![0.0; m]),
        kkt: KktReport::default(),
        outer_iterations: outer,
        iterations: newton,
    };
    // The zero multiplier is dual feasible and certifies exact fits.
    sol.kkt = certify(&sol, problem);
    if let Some(t) = t {
        let mut diff = vec![0.0; m];
        for i in 0..m {
            let w = problem.weights[i];
            let k = 1.0 / (t * w);
            if w > 0.0 && k.is_finite() {
                let (plus, minus) = split_rho(residuals[i], k);
                diff[i] = w * plus / (plus + k) - w * minus / (minus + k);
            }
        }
        polish_differences(problem, &mut diff);
        let duals = dual_from_differences(problem, &diff);
        let trial = ConicSolution { duals, ..sol.clone() };
        let kkt = certify(&trial, problem);
        if kkt.max_residual() < sol.kkt.max_residual() {
            sol = ConicSolution { kkt, ..trial };
        }
    }
    sol
}

/// Builds a full multiplier set from the row differences `d_i = λ⁺_i - λ⁻_i`.
///
/// `λ^±` split `w_i` exactly, the bound multipliers take the smallest values
/// consistent with `d_i`, and the cone multiplier solves stationarity on the
/// cone slots, with its free `ε` component chosen to maximize the dual
/// objective.
fn dual_from_differences(problem: &WeightedL1Problem, diff: &[f64]) -> DualEstimate {
    let m = problem.len();
    let mut duals = DualEstimate {
        lambda_plus: vec![0.0; m],
        lambda_minus: vec![0.0; m],
        cone: [0.0; 4],
        nu_lower: Vec::new(),
        nu_upper: Vec::new(),
    };
    for i in 0..m {
        let (w, d) = (problem.weights[i], diff[i].clamp(-problem.weights[i], problem.weights[i]));
        duals.lambda_plus[i] = 0.5 * (w + d);
        duals.lambda_minus[i] = 0.5 * (w - d);
    }
    if problem.aux.is_some() {
        duals.nu_lower = diff.iter().map(|d| d.max(0.0)).collect();
        duals.nu_upper = diff.iter().map(|d| (-d).max(0.0)).collect();
    }
    let [ia, ib, ic] = problem.soc_index;
    let slot = |j: usize| {
        let mut acc = CompensatedSum::new();
        for i in 0..m {
            acc.add_product(duals.lambda_plus[i] - duals.lambda_minus[i], problem.row(i)[j]);
        }
        acc.value()
    };
    let (ga, gb, gc) = (slot(ia), slot(ib), slot(ic));
    let y0 = 0.5 * (ga + gc);
    let y3 = 0.5 * (ga - gc);
    let room = y0 * y0 - gb * gb - y3 * y3;
    let y2 = if y0 > 0.0 { -room.max(0.0).sqrt() } else { 0.0 };
    duals.cone = [y0, gb, y2, y3];
    duals
}

/// Minimum-change correction of the row differences that zeroes the
/// stationarity residual on coefficients outside the cone and moves the cone
/// slots onto their projection into the dual cone. Rows whose difference is
/// saturated at `±w` are left untouched.
fn polish_differences(problem: &WeightedL1Problem, diff: &mut [f64]) {
    let n = problem.dim;
    let m = problem.len();
    let [ia, ib, ic] = problem.soc_index;
    for _ in 0..2 {
        let room: Vec<f64> = (0..m)
            .map(|i| {
                let w = problem.weights[i];
                (w * w - diff[i] * diff[i]).max(0.0)
            })
            .collect();
        let slot: Vec<f64> = (0..n)
            .map(|j| {
                let mut acc = CompensatedSum::new();
                for i in 0..m {
                    acc.add_product(diff[i], problem.row(i)[j]);
                }
                acc.value()
            })
            .collect();
        // The cone slots are only constrained when the multiplier has left
        // the dual cone; otherwise they stay free.
        let (y0, y1, y3) = (0.5 * (slot[ia] + slot[ic]), slot[ib], 0.5 * (slot[ia] - slot[ic]));
        let outside = y1.hypot(y3) > y0;
        let mut target = vec![0.0; n];
        if outside {
            let [p0, p1, p3] = project_soc3(y0, y1, y3);
            target[ia] = p0 + p3;
            target[ib] = p1;
            target[ic] = p0 - p3;
        }
        let fixed: Vec<usize> = (0..n).filter(|j| outside || !problem.soc_index.contains(j)).collect();
        let k = fixed.len();
        let mut gram = DMatrix::<f64>::zeros(k, k);
        let mut resid = DVector::<f64>::zeros(k);
        for (u, &ju) in fixed.iter().enumerate() {
            resid[u] = target[ju] - slot[ju];
            for (v, &jv) in fixed.iter().enumerate() {
                gram[(u, v)] = (0..m).map(|i| room[i] * problem.row(i)[ju] * problem.row(i)[jv]).sum();
            }
        }
        let Ok(mu) = solve_spd(&gram, &resid) else { return };
        for i in 0..m {
            let a = problem.row(i);
            let shift: f64 = fixed.iter().enumerate().map(|(u, &j)| mu[u] * a[j]).sum();
            let w = problem.weights[i];
            diff[i] = (diff[i] + room[i] * shift).clamp(-w, w);
        }
    }
}

/// Euclidean projection of `(y0, y1, y3)` onto `{y0 ≥ ‖(y1, y3)‖}`.
fn project_soc3(y0: f64, y1: f64, y3: f64) -> [f64; 3] {
    let r = y1.hypot(y3);
    if r <= y0 {
        [y0, y1, y3]
    } else if r <= -y0 {
        [0.0; 3]
    } else {
        let k = 0.5 * (y0 + r);
        [k, k * y1 / r, k * y3 / r]
    }
}

/// Recomputes feasibility, stationarity and duality gap of a solution with
/// compensated sums. Every residual is relative to the magnitude of the
/// terms it is built from.
pub fn certify(solution: &ConicSolution, problem: &WeightedL1Problem) -> KktReport {
    let m = problem.len();
    let n = problem.dim;
    let x = &solution.x;
    let p = &solution.aux;
    let d = &solution.duals;
    let has_aux = problem.aux.is_some() && p.len() == m;
    let mut report = KktReport::default();

    let mut primal_obj = CompensatedSum::new();
    let mut magnitude = 0.0;
    for i in 0..m {
        let a = problem.row(i);
        let mut r = CompensatedSum::new();
        let mut size = problem.offsets[i].abs();
        for j in 0..n {
            r.add_product(a[j], x[j]);
            size += (a[j] * x[j]).abs();
        }
        r.add(-problem.offsets[i]);
        if has_aux {
            r.add(p[i]);
            size += p[i].abs();
        }
        let zeta = solution.zeta.get(i).copied().unwrap_or(f64::NAN);
        let excess = r.value().abs() - zeta;
        report.primal = report.primal.max(excess.max(0.0) / (1.0 + size));
        if zeta.is_nan() {
            report.primal = f64::INFINITY;
        }
        primal_obj.add_product(problem.weights[i], zeta);
        magnitude += problem.weights[i] * size;
    }

    let s = problem.cone_point(x);
    let tail = (s[1] * s[1] + s[2] * s[2] + s[3] * s[3]).sqrt();
    report.cone = (tail - s[0]).max(0.0) / (1.0 + s[0].abs() + tail);

    if let Some(b) = problem.aux {
        for &v in p {
            report.bounds = report.bounds.max((b.lower - v).max(v - b.upper).max(0.0));
        }
    }

    // Stationarity in ζ: w = λ⁺ + λ⁻ with both non-negative.
    let mut stat: f64 = 0.0;
    for i in 0..m {
        let (lp, lm, w) = (d.lambda_plus[i], d.lambda_minus[i], problem.weights[i]);
        stat = stat.max((w - lp - lm).abs() / (1.0 + w));
        stat = stat.max((-lp).max(-lm).max(0.0) / (1.0 + w));
    }
    // Stationarity in x: Σ(λ⁺ - λ⁻) a_i = Mᵀ y.
    let [ia, ib, ic] = problem.soc_index;
    let y = d.cone;
    let mut my = vec![0.0; n];
    my[ia] = y[0] + y[3];
    my[ib] = y[1];
    my[ic] = y[0] - y[3];
    for j in 0..n {
        let mut acc = CompensatedSum::new();
        let mut size = my[j].abs();
        for i in 0..m {
            let diff = d.lambda_plus[i] - d.lambda_minus[i];
            acc.add_product(diff, problem.row(i)[j]);
            size += (diff * problem.row(i)[j]).abs();
        }
        acc.add(-my[j]);
        stat = stat.max(acc.value().abs() / (1.0 + size));
    }
    // Stationarity in p: λ⁺ - λ⁻ = ν_l - ν_u.
    if has_aux {
        for i in 0..m {
            let (lp, lm, nl, nu) = (d.lambda_plus[i], d.lambda_minus[i], d.nu_lower[i], d.nu_upper[i]);
            let size = 1.0 + lp.abs() + lm.abs() + nl.abs() + nu.abs();
            stat = stat.max((lp - lm - nl + nu).abs() / size);
            stat = stat.max((-nl).max(-nu).max(0.0) / size);
        }
    }
    report.stationarity = stat;
    let ytail = (y[1] * y[1] + y[2] * y[2] + y[3] * y[3]).sqrt();
    report.dual_cone = (ytail - y[0]).max(0.0) / (1.0 + y[0].abs() + ytail);

    let mut dual_obj = CompensatedSum::new();
    for i in 0..m {
        dual_obj.add_product(d.lambda_minus[i] - d.lambda_plus[i], problem.offsets[i]);
    }
    dual_obj.add_product(-problem.epsilon, y[2]);
    if let (Some(b), true) = (problem.aux, has_aux) {
        for i in 0..m {
            dual_obj.add_product(d.nu_lower[i], b.lower);
            dual_obj.add_product(-d.nu_upper[i], b.upper);
        }
    }
    report.primal_objective = primal_obj.value();
    report.dual_objective = dual_obj.value();
    // Relative to the size of the weighted terms, i.e. the resolution at which
    // residuals can be evaluated at all.
    let scale = 1f64.max(report.primal_objective.abs()).max(report.dual_objective.abs()).max(magnitude);
    report.gap = (report.primal_objective - report.dual_objective) / scale;
    report
}
