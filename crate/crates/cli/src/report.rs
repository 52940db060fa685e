//! JSON documents written by the fit commands.

use mccvc::mcc::TraceEntry;
use mccvc::{ConicVector, EllipseGeometry, FitConfig, FitReport};
use serde::Serialize;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
pub struct Conic {
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "E")]
    pub e: f64,
    #[serde(rename = "F")]
    pub f: f64,
}

impl From<&ConicVector> for Conic {
    /// Display form with `A + C = 2`.
    fn from(v: &ConicVector) -> Self {
        let [a, b, c, d, e, f] = v.normalized().0;
        Self { a, b, c, d, e, f }
    }
}

#[derive(Debug, Serialize)]
pub struct Geometry {
    pub g: f64,
    pub h: f64,
    pub a: f64,
    pub b: f64,
    pub theta_deg: f64,
}

impl From<&EllipseGeometry> for Geometry {
    fn from(q: &EllipseGeometry) -> Self {
        Self { g: q.g, h: q.h, a: q.a, b: q.b, theta_deg: q.theta.to_degrees() }
    }
}

#[derive(Debug, Serialize)]
pub struct Kernel {
    pub c: f64,
    pub sigma: f64,
    pub sigma_clamped: bool,
}

#[derive(Debug, Serialize)]
pub struct ConfigEcho {
    pub epsilon: f64,
    pub max_iterations: usize,
    pub stop_tolerance: f64,
}

impl From<&FitConfig> for ConfigEcho {
    fn from(c: &FitConfig) -> Self {
        Self { epsilon: c.epsilon, max_iterations: c.max_iterations, stop_tolerance: c.stop_tolerance }
    }
}

#[derive(Debug, Serialize)]
pub struct SingleReport {
    pub schema_version: u32,
    pub method: &'static str,
    pub config: ConfigEcho,
    pub points: usize,
    pub conic: Option<Conic>,
    pub geometry: Option<Geometry>,
    pub kernel: Option<Kernel>,
    pub iterations: usize,
    pub converged: bool,
    pub failed: bool,
    pub reason: Option<String>,
    pub trace: Vec<TraceEntry>,
}

impl SingleReport {
    pub fn new(method: &'static str, cfg: &FitConfig, points: usize, r: &FitReport) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            method,
            config: cfg.into(),
            points,
            conic: r.conic.as_ref().map(Conic::from),
            geometry: r.geometry.as_ref().map(Geometry::from),
            kernel: r.kernel.map(|k| Kernel { c: k.c, sigma: k.sigma, sigma_clamped: k.sigma_clamped }),
            iterations: r.iterations,
            converged: r.converged,
            failed: r.failed(),
            reason: r.failure.clone(),
            trace: r.trace.clone(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct AssociationSummary {
    pub outer: usize,
    pub inner: usize,
    /// Present only when the input carried labels.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct CoupledReport {
    pub schema_version: u32,
    pub method: &'static str,
    pub config: ConfigEcho,
    pub points: usize,
    pub association: AssociationSummary,
    /// Outer conic in display form; the inner one is `F + eta` on the same
    /// scale.
    pub conic: Option<Conic>,
    pub eta: Option<f64>,
    pub outer: Option<Geometry>,
    pub inner: Option<Geometry>,
    pub mu: Option<f64>,
    pub kernel: Option<Kernel>,
    pub iterations: usize,
    pub converged: bool,
    pub failed: bool,
    pub reason: Option<String>,
    pub trace: Vec<TraceEntry>,
}
