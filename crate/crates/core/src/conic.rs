//! Algebraic and geometric ellipse representations.
//!
//! A conic is stored as `v = [A, B, C, D, E, F]` for
//! `A x² + B xy + C y² + D x + E y + F = 0`; the geometric form is
//! `q = [g, h, a, b, θ]` (center, half-long axis, half-short axis, and
//! counter-clockwise rotation of the long axis). Angles are radians and are
//! canonicalized to `(-π/2, π/2]` with `a >= b`.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative axis gap below which an ellipse is treated as a circle and its
/// angle is reported as zero.
pub const CIRCLE_TOLERANCE: f64 = 1e-9;

/// Implicit conic coefficients `[A, B, C, D, E, F]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConicVector(pub [f64; 6]);

impl ConicVector {
    pub fn new(coefficients: [f64; 6]) -> Self {
        Self(coefficients)
    }

    pub fn coefficients(&self) -> &[f64; 6] {
        &self.0
    }

    /// `B² - 4AC`; negative for ellipses.
    pub fn discriminant(&self) -> f64 {
        let [a, b, c, ..] = self.0;
        b * b - 4.0 * a * c
    }

    pub fn is_ellipse(&self) -> bool {
        self.discriminant() < 0.0
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self(self.0.map(|x| x * s))
    }

    /// Representative with `A + C = 2`. Returns `self` unchanged when
    /// `A + C` is zero.
    pub fn normalized(&self) -> Self {
        let trace = self.0[0] + self.0[2];
        if trace == 0.0 || !trace.is_finite() {
            return *self;
        }
        self.scaled(2.0 / trace)
    }

    /// Algebraic residual `vᵀu` at a point.
    pub fn evaluate(&self, x: f64, y: f64) -> f64 {
        let [a, b, c, d, e, f] = self.0;
        a * x * x + b * x * y + c * y * y + d * x + e * y + f
    }
}

/// Geometric ellipse parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipseGeometry {
    pub g: f64,
    pub h: f64,
    pub a: f64,
    pub b: f64,
    /// Counter-clockwise rotation of the long axis, radians.
    pub theta: f64,
}

impl EllipseGeometry {
    /// Builds a canonical geometry: swaps axes if needed so that `a >= b`,
    /// and wraps `theta` into `(-π/2, π/2]`.
    pub fn new(g: f64, h: f64, a: f64, b: f64, theta: f64) -> Self {
        let (a, b, theta) = if a >= b { (a, b, theta) } else { (b, a, theta + FRAC_PI_2) };
        let theta = if (a - b).abs() <= CIRCLE_TOLERANCE * a { 0.0 } else { canonical_angle(theta) };
        Self { g, h, a, b, theta }
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.g, self.h, self.a, self.b, self.theta]
    }

    /// Point at parameter angle `t`.
    pub fn point_at(&self, t: f64) -> [f64; 2] {
        let (st, ct) = t.sin_cos();
        let (sr, cr) = self.theta.sin_cos();
        let (px, py) = (self.a * ct, self.b * st);
        [self.g + px * cr - py * sr, self.h + px * sr + py * cr]
    }

    /// Left-hand side of the canonical ellipse equation minus one; zero on
    /// the curve, negative inside.
    pub fn level(&self, x: f64, y: f64) -> f64 {
        let (s, c) = self.theta.sin_cos();
        let (dx, dy) = (x - self.g, y - self.h);
        let u = dx * c + dy * s;
        let w = -dx * s + dy * c;
        u * u / (self.a * self.a) + w * w / (self.b * self.b) - 1.0
    }
}

/// Wraps an angle into `(-π/2, π/2]`; ellipse orientation has period π.
pub fn canonical_angle(theta: f64) -> f64 {
    let mut t = theta % PI;
    if t <= -FRAC_PI_2 {
        t += PI;
    } else if t > FRAC_PI_2 {
        t -= PI;
    }
    t
}

/// Design row `[x², xy, y², x, y, 1]`.
pub fn design_row(x: f64, y: f64) -> Result<[f64; 6]> {
    if !x.is_finite() || !y.is_finite() {
        return Err(Error::InvalidInput(format!("non-finite point ({x}, {y})")));
    }
    Ok([x * x, x * y, y * y, x, y, 1.0])
}

/// Observed points together with their design rows.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    points: Vec<[f64; 2]>,
    rows: Vec<[f64; 6]>,
}

impl PointSet {
    pub fn new(points: Vec<[f64; 2]>) -> Result<Self> {
        let rows = points.iter().map(|&[x, y]| design_row(x, y)).collect::<Result<Vec<_>>>()?;
        Ok(Self { points, rows })
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn rows(&self) -> &[[f64; 6]] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Result<Self> {
        Self::new(self.points.iter().map(|p| [p[0] + dx, p[1] + dy]).collect())
    }
}

/// Residuals `δ_i = vᵀu_i`.
pub fn residuals(v: &ConicVector, ps: &PointSet) -> Vec<f64> {
    ps.rows().iter().map(|u| u.iter().zip(&v.0).map(|(a, b)| a * b).sum()).collect()
}

/// Converts implicit coefficients into canonical geometric parameters.
pub fn conic_to_geometry(v: &ConicVector) -> Result<EllipseGeometry> {
    if v.0.iter().any(|x| !x.is_finite()) {
        return Err(Error::DegenerateConic("non-finite coefficients"));
    }
    // Orient so the quadratic part is positive definite.
    let v = if v.0[0] + v.0[2] < 0.0 { v.scaled(-1.0) } else { *v };
    let [a, b, c, d, e, f] = v.0;
    if a == 0.0 && b == 0.0 && c == 0.0 {
        return Err(Error::DegenerateConic("quadratic part vanishes"));
    }
    let det4 = 4.0 * a * c - b * b;
    if !(det4 > 0.0) {
        return Err(Error::DegenerateConic("B² - 4AC is not negative"));
    }
    // Center solves 2A g + B h + D = 0, B g + 2C h + E = 0.
    let g = (b * e - 2.0 * c * d) / det4;
    let h = (b * d - 2.0 * a * e) / det4;
    let f0 = f + 0.5 * (d * g + e * h);

    let half_trace = 0.5 * (a + c);
    let radius = (0.5 * (a - c)).hypot(0.5 * b);
    let lambda_small = half_trace - radius;
    let lambda_large = half_trace + radius;
    if !(lambda_small > 0.0) {
        return Err(Error::DegenerateConic("zero eigenvalue"));
    }
    if !(f0 < 0.0) {
        return Err(Error::DegenerateConic("imaginary or point ellipse"));
    }
    let long = (-f0 / lambda_small).sqrt();
    let short = (-f0 / lambda_large).sqrt();
    // Long axis follows the eigenvector of the smaller eigenvalue.
    let theta = 0.5 * (-b).atan2(c - a);
    Ok(EllipseGeometry::new(g, h, long, short, theta))
}

/// Expands the geometric form into implicit coefficients with `A + C = 2`.
pub fn geometry_to_conic(q: &EllipseGeometry) -> ConicVector {
    let (s, c) = q.theta.sin_cos();
    let ia = 1.0 / (q.a * q.a);
    let ib = 1.0 / (q.b * q.b);
    let a = c * c * ia + s * s * ib;
    let b = 2.0 * c * s * (ia - ib);
    let cc = s * s * ia + c * c * ib;
    let d = -2.0 * a * q.g - b * q.h;
    let e = -b * q.g - 2.0 * cc * q.h;
    let f = a * q.g * q.g + b * q.g * q.h + cc * q.h * q.h - 1.0;
    ConicVector([a, b, cc, d, e, f]).normalized()
}

/// `n` noiseless points at uniformly spaced parameter angles.
pub fn sample_ellipse(q: &EllipseGeometry, n: usize) -> Result<PointSet> {
    if n == 0 {
        return Err(Error::InvalidInput("need at least one sample".into()));
    }
    let step = 2.0 * PI / n as f64;
    PointSet::new((0..n).map(|k| q.point_at(step * k as f64)).collect())
}

/// Similarity map `original = scale * normalized + shift` that centers a
/// point cloud and gives it unit RMS radius per axis.
///
/// Algebraic residuals are invariant under the map when the conic is
/// transformed alongside the points, and `B² - 4AC` scales by `scale⁴`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    pub scale: f64,
    pub shift: [f64; 2],
}

impl Normalization {
    pub fn identity() -> Self {
        Self { scale: 1.0, shift: [0.0, 0.0] }
    }

    pub fn fit(points: &[[f64; 2]]) -> Self {
        if points.is_empty() {
            return Self::identity();
        }
        let n = points.len() as f64;
        let mx = points.iter().map(|p| p[0]).sum::<f64>() / n;
        let my = points.iter().map(|p| p[1]).sum::<f64>() / n;
        let ms = points.iter().map(|p| (p[0] - mx).powi(2) + (p[1] - my).powi(2)).sum::<f64>() / n;
        let scale = (0.5 * ms).sqrt();
        let scale = if scale > 0.0 && scale.is_finite() { scale } else { 1.0 };
        Self { scale, shift: [mx, my] }
    }

    pub fn apply(&self, ps: &PointSet) -> Result<PointSet> {
        PointSet::new(
            ps.points()
                .iter()
                .map(|p| [(p[0] - self.shift[0]) / self.scale, (p[1] - self.shift[1]) / self.scale])
                .collect(),
        )
    }

    /// Maps a conic expressed in normalized coordinates back to original
    /// coordinates, keeping polynomial values at corresponding points equal.
    pub fn denormalize(&self, v: &ConicVector) -> ConicVector {
        let [a, b, c, d, e, f] = v.0;
        let s = self.scale;
        let s2 = s * s;
        let [tx, ty] = self.shift;
        ConicVector([
            a / s2,
            b / s2,
            c / s2,
            (-2.0 * a * tx - b * ty) / s2 + d / s,
            (-2.0 * c * ty - b * tx) / s2 + e / s,
            (a * tx * tx + b * tx * ty + c * ty * ty) / s2 - (d * tx + e * ty) / s + f,
        ])
    }

    /// Inverse of [`Normalization::denormalize`].
    pub fn normalize_conic(&self, v: &ConicVector) -> ConicVector {
        let [a, b, c, d, e, f] = v.0;
        let s = self.scale;
        let s2 = s * s;
        let [tx, ty] = self.shift;
        ConicVector([
            a * s2,
            b * s2,
            c * s2,
            s * (2.0 * a * tx + b * ty + d),
            s * (2.0 * c * ty + b * tx + e),
            a * tx * tx + b * tx * ty + c * ty * ty + d * tx + e * ty + f,
        ])
    }

    /// SOC margin in normalized coordinates equivalent to `epsilon` in
    /// original coordinates.
    pub fn epsilon(&self, epsilon: f64) -> f64 {
        epsilon * self.scale * self.scale
    }
}
