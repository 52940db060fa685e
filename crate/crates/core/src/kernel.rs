//! Laplacian kernel center and bandwidth estimation.
//!
//! For residuals `δ_i` the kernel parameters minimize the integrated squared
//! error between a single Laplacian kernel `κ_σ(δ - c)` and the sample
//! density:
//!
//! ```text
//! (c, σ) = argmin 1/(4σ) - 1/(Nσ) Σ exp(-|δ_i - c| / σ)
//! ```
//!
//! The two parameters are updated one at a time. The bandwidth is found in
//! `r = 1/σ` by repeatedly minimizing a convex quartic model of
//! `h(r) = r/4 - (r/N) Σ exp(-â_i r)` whose stationary point has a closed
//! form. The center starts at the sample median and is refined against the
//! exact objective.

use crate::error::{Error, Result};

/// Smallest bandwidth handed to downstream code.
pub const SIGMA_FLOOR: f64 = 1e-12;
/// Iteration cap of the bandwidth fixed point.
pub const BANDWIDTH_MAX_ITERATIONS: usize = 200;
/// Relative step size at which the bandwidth fixed point stops.
pub const BANDWIDTH_TOLERANCE: f64 = 1e-8;

/// Laplacian kernel center `c` and bandwidth `sigma` (`r = 1/sigma`).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct KernelParams {
    pub c: f64,
    pub sigma: f64,
    pub r: f64,
    /// Set when `sigma` was raised to [`SIGMA_FLOOR`].
    pub sigma_clamped: bool,
}

impl KernelParams {
    pub fn new(c: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !c.is_finite() {
            return Err(Error::InvalidInput(format!(
                "kernel needs a finite center and a positive bandwidth (c = {c}, sigma = {sigma})"
            )));
        }
        let sigma_clamped = sigma < SIGMA_FLOOR;
        let sigma = sigma.max(SIGMA_FLOOR);
        Ok(Self { c, sigma, r: 1.0 / sigma, sigma_clamped })
    }
}

/// MCC objective `g = -(1/σ) Σ exp(-|δ_i - c|/σ)`.
pub fn objective_g(residuals: &[f64], kp: &KernelParams) -> f64 {
    -residuals.iter().map(|d| (-(d - kp.c).abs() / kp.sigma).exp()).sum::<f64>() / kp.sigma
}

/// Integrated-squared-error objective `1/(4σ) - 1/(Nσ) Σ exp(-|δ_i - c|/σ)`.
pub fn ise_objective(residuals: &[f64], kp: &KernelParams) -> f64 {
    let n = residuals.len().max(1) as f64;
    let s: f64 = residuals.iter().map(|d| (-(d - kp.c).abs() / kp.sigma).exp()).sum();
    0.25 / kp.sigma - s / (n * kp.sigma)
}

/// Bandwidth objective in `r`: `h(r) = r/4 - (r/N) Σ exp(-â_i r)`.
pub fn bandwidth_objective(a_hat: &[f64], r: f64) -> f64 {
    let n = a_hat.len() as f64;
    r / 4.0 - r * a_hat.iter().map(|a| (-a * r).exp()).sum::<f64>() / n
}

/// `h'(r) = 1/4 - (1/N) Σ exp(-â_i r) + (r/N) Σ â_i exp(-â_i r)`.
pub fn bandwidth_objective_derivative(a_hat: &[f64], r: f64) -> f64 {
    let n = a_hat.len() as f64;
    let (s0, s1) = a_hat.iter().fold((0.0, 0.0), |(s0, s1), &a| {
        let e = (-a * r).exp();
        (s0 + e, s1 + a * e)
    });
    0.25 - s0 / n + r * s1 / n
}

/// Exponential moments `b_k = (1/N) Σ â_i^{k-1} exp(-â_i r0)` defining the
/// quartic model of `h` around `r0`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthExpansion {
    pub r0: f64,
    pub a_hat: Vec<f64>,
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub b4: f64,
}

pub fn bandwidth_expansion(a_hat: &[f64], r0: f64) -> Result<BandwidthExpansion> {
    if a_hat.is_empty() {
        return Err(Error::InvalidInput("empty distance sample".into()));
    }
    if !(r0 >= 0.0) || !r0.is_finite() {
        return Err(Error::InvalidInput(format!("expansion point must be >= 0, got {r0}")));
    }
    if a_hat.iter().any(|a| !(*a >= 0.0) || !a.is_finite()) {
        return Err(Error::InvalidInput("distances must be finite and non-negative".into()));
    }
    let n = a_hat.len() as f64;
    let (mut b1, mut b2, mut b3, mut b4) = (0.0, 0.0, 0.0, 0.0);
    for &a in a_hat {
        let e = (-a * r0).exp();
        b1 += e;
        b2 += a * e;
        b3 += a * a * e;
        b4 += a * a * a * e;
    }
    Ok(BandwidthExpansion { r0, a_hat: a_hat.to_vec(), b1: b1 / n, b2: b2 / n, b3: b3 / n, b4: b4 / n })
}

impl BandwidthExpansion {
    /// Quartic model `f(r)` of `h(r)` around `r0`.
    pub fn quartic_f(&self, r: f64) -> f64 {
        let t = r - self.r0;
        self.b4 / 6.0 * t.powi(4) - self.b3 / 2.0 * t.powi(3)
            + self.b2 * t * t
            + (self.b2 * self.r0 - self.b1 + 0.25) * t
            + (0.25 * self.r0 - self.b1 * self.r0)
    }

    /// `f'(r)`.
    pub fn quartic_derivative(&self, r: f64) -> f64 {
        let t = r - self.r0;
        2.0 * self.b4 / 3.0 * t.powi(3) - 1.5 * self.b3 * t * t
            + 2.0 * self.b2 * t
            + (self.b2 * self.r0 - self.b1 + 0.25)
    }

    /// `f''(r) = 2 b4 t² - 3 b3 t + 2 b2` with `t = r - r0`.
    pub fn quartic_second_derivative(&self, r: f64) -> f64 {
        let t = r - self.r0;
        2.0 * self.b4 * t * t - 3.0 * self.b3 * t + 2.0 * self.b2
    }

    /// `b2 b4 - (9/16) b3²`, positive whenever some `â_i > 0`.
    pub fn convexity_margin(&self) -> f64 {
        self.b2 * self.b4 - 9.0 / 16.0 * self.b3 * self.b3
    }

    fn is_degenerate(&self) -> bool {
        let first = self.a_hat[0];
        self.a_hat.iter().all(|&a| a == first) || !(self.b4 > 0.0) || !(self.convexity_margin() > 0.0)
    }
}

/// Closed-form stationary point of the quartic model.
///
/// `f'(t) = d1 t³ + d2 t² + d3 t + d4` (with `t = r - r0`) is strictly
/// increasing, so it has exactly one real root.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CardanoSolve {
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    pub d4: f64,
    pub p: f64,
    pub q_card: f64,
    pub delta: f64,
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
    pub k1: f64,
    pub k2: f64,
    pub t_root: f64,
    pub r_root: f64,
}

impl CardanoSolve {
    pub fn cubic(&self, t: f64) -> f64 {
        ((self.d1 * t + self.d2) * t + self.d3) * t + self.d4
    }

    fn cubic_slope(&self, t: f64) -> f64 {
        (3.0 * self.d1 * t + 2.0 * self.d2) * t + self.d3
    }
}

pub fn minimize_quartic(exp: &BandwidthExpansion) -> Result<CardanoSolve> {
    if exp.is_degenerate() {
        return Err(Error::DegenerateSample);
    }
    let (b1, b2, b3, b4, r0) = (exp.b1, exp.b2, exp.b3, exp.b4, exp.r0);
    let d1 = 2.0 * b4 / 3.0;
    let d2 = -1.5 * b3;
    let d3 = 2.0 * b2;
    let d4 = b2 * r0 - b1 + 0.25;

    let p = (3.0 * d1 * d3 - d2 * d2) / (3.0 * d1 * d1);
    let q_card = (27.0 * d1 * d1 * d4 - 9.0 * d1 * d2 * d3 + 2.0 * d2.powi(3)) / (27.0 * d1.powi(3));
    let delta = (q_card / 2.0).powi(2) + (p / 3.0).powi(3);

    let e1 = d2 * d2 - 3.0 * d1 * d3;
    let e2 = d2 * d3 - 9.0 * d1 * d4;
    let e3 = d3 * d3 - 3.0 * d2 * d4;
    let disc = e2 * e2 - 4.0 * e1 * e3;

    // k1, k2 are the roots of z² - (2 e1 d2 - 3 d1 e2) z + e1³; take the
    // larger one from the quadratic formula and the other from the product.
    let sum = 2.0 * e1 * d2 - 3.0 * d1 * e2;
    let spread = 3.0 * d1 * disc.max(0.0).sqrt();
    let (k1, k2) = if sum >= 0.0 {
        let k1 = 0.5 * (sum + spread);
        (k1, e1.powi(3) / k1)
    } else {
        let k2 = 0.5 * (sum - spread);
        (e1.powi(3) / k2, k2)
    };

    let mut solve = CardanoSolve {
        d1,
        d2,
        d3,
        d4,
        p,
        q_card,
        delta,
        e1,
        e2,
        e3,
        k1,
        k2,
        t_root: (-d2 - (k1.cbrt() + k2.cbrt())) / (3.0 * d1),
        r_root: 0.0,
    };
    if !solve.t_root.is_finite() {
        return Err(Error::DegenerateSample);
    }
    // Newton polish on the monotone cubic removes cube-root cancellation.
    for _ in 0..4 {
        let t = solve.t_root;
        let step = solve.cubic(t) / solve.cubic_slope(t);
        let next = t - step;
        if !next.is_finite() || solve.cubic(next).abs() >= solve.cubic(t).abs() {
            break;
        }
        solve.t_root = next;
    }
    solve.r_root = solve.t_root + r0;
    Ok(solve)
}

enum FixedPoint {
    Converged { r: f64 },
    Stalled { r: f64 },
}

fn bandwidth_fixed_point(a_hat: &[f64], r_init: f64) -> Result<FixedPoint> {
    let mut r0 = r_init;
    for _ in 0..BANDWIDTH_MAX_ITERATIONS {
        let solve = minimize_quartic(&bandwidth_expansion(a_hat, r0)?)?;
        let r = solve.r_root.max(0.0);
        if (r - r0).abs() < BANDWIDTH_TOLERANCE * r0.max(1.0) {
            return Ok(FixedPoint::Converged { r });
        }
        r0 = r;
    }
    Ok(FixedPoint::Stalled { r: r0 })
}

/// Best point of `h` on a logarithmic grid covering the sample's scales.
fn coarse_scan(a_hat: &[f64]) -> Option<(f64, f64)> {
    let positive = a_hat.iter().copied().filter(|&a| a > 0.0);
    let lo = positive.clone().fold(f64::INFINITY, f64::min);
    let hi = positive.fold(0.0, f64::max);
    if !(lo > 0.0) || !lo.is_finite() {
        return None;
    }
    let (start, stop) = ((0.05 / hi).ln(), (20.0 / lo).ln());
    let count = (((stop - start) / std::f64::consts::LN_10) * 8.0).ceil().clamp(8.0, 400.0) as usize;
    (0..=count)
        .map(|k| (start + (stop - start) * k as f64 / count as f64).exp())
        .map(|r| (r, bandwidth_objective(a_hat, r)))
        .min_by(|x, y| x.1.total_cmp(&y.1))
}

/// Bandwidth estimate for fixed center `c_hat`.
///
/// Runs the quartic fixed point from `r_init`; when a coarse scan of `h`
/// finds a lower basin the fixed point is restarted there and the better
/// stationary point is kept.
pub fn estimate_bandwidth(residuals: &[f64], c_hat: f64, r_init: f64) -> Result<KernelParams> {
    if residuals.is_empty() {
        return Err(Error::InvalidInput("empty residual sample".into()));
    }
    if !(r_init >= 0.0) || !r_init.is_finite() {
        return Err(Error::InvalidInput(format!("r_init must be >= 0, got {r_init}")));
    }
    let a_hat: Vec<f64> = residuals.iter().map(|d| (d - c_hat).abs()).collect();
    if a_hat.iter().any(|a| !a.is_finite()) {
        return Err(Error::InvalidInput("non-finite residual".into()));
    }
    if a_hat.iter().all(|&a| a == a_hat[0]) {
        return Err(Error::DegenerateSample);
    }
    // h is scale-equivariant: â -> â/s maps r -> r s and h -> h s.
    let unit = a_hat.iter().sum::<f64>() / a_hat.len() as f64;
    let scaled: Vec<f64> = a_hat.iter().map(|a| a / unit).collect();

    let mut best = match bandwidth_fixed_point(&scaled, r_init * unit)? {
        FixedPoint::Converged { r } => Some(r),
        FixedPoint::Stalled { r } => {
            return Err(Error::ConvergenceFailure { iterations: BANDWIDTH_MAX_ITERATIONS, last: unit / r })
        }
    };
    if let (Some(r), Some((r_scan, h_scan))) = (best, coarse_scan(&scaled)) {
        let h_best = bandwidth_objective(&scaled, r);
        if h_scan < h_best - 1e-12 * (1.0 + h_best.abs()) {
            if let FixedPoint::Converged { r: r_alt } = bandwidth_fixed_point(&scaled, r_scan)? {
                if bandwidth_objective(&scaled, r_alt) < h_best {
                    best = Some(r_alt);
                }
            }
        }
    }
    let r = best.expect("fixed point result");
    if !(r > 0.0) {
        return Err(Error::DegenerateSample);
    }
    KernelParams::new(c_hat, unit / r)
}

/// Lower sample median, the minimizer of `Σ |δ_i - c|` restricted to
/// sample points.
pub fn estimate_center_lp(residuals: &[f64]) -> Result<f64> {
    if residuals.is_empty() {
        return Err(Error::InvalidInput("empty residual sample".into()));
    }
    let mut sorted = residuals.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[(sorted.len() - 1) / 2])
}

/// Center objective `J(c) = -Σ exp(-|δ_i - c|/σ)`.
pub fn center_objective(residuals: &[f64], c: f64, sigma: f64) -> f64 {
    -residuals.iter().map(|d| (-(d - c).abs() / sigma).exp()).sum::<f64>()
}

/// Kernel center for fixed bandwidth.
///
/// `J` is concave between consecutive samples, so its minimum over any
/// interval with sample endpoints is attained at a sample. The search
/// interval spans the median and the sample with the smallest objective;
/// the returned center is the best sample inside it (ties go to the sample
/// closest to the median).
pub fn estimate_center(residuals: &[f64], sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidInput(format!("sigma must be positive, got {sigma}")));
    }
    let median = estimate_center_lp(residuals)?;
    let scored: Vec<(f64, f64)> = residuals.iter().map(|&d| (d, center_objective(residuals, d, sigma))).collect();
    let better = |a: &(f64, f64), b: &(f64, f64)| {
        a.1.total_cmp(&b.1)
            .then_with(|| (a.0 - median).abs().total_cmp(&(b.0 - median).abs()))
            .then_with(|| a.0.total_cmp(&b.0))
    };
    let anchor = scored.iter().min_by(|a, b| better(a, b)).expect("non-empty");
    let (lo, hi) = if anchor.0 < median { (anchor.0, median) } else { (median, anchor.0) };
    let best = scored
        .iter()
        .filter(|(d, _)| *d >= lo && *d <= hi)
        .min_by(|a, b| better(a, b))
        .expect("interval contains the anchor");
    Ok(best.0)
}
