//! Control problem instances: coefficients, bounds, control mesh.

mod audit;
mod families;

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use audit::{audit_assumptions, AssumptionReport, SamplePoint, Violation};
pub use families::{
    CoefficientFamily, Diffusion, Drift, Driver, DriverDependence, Terminal, DIFFUSION_FAMILIES,
    DRIFT_FAMILIES, DRIVER_FAMILIES, PROBE_RADIUS, TERMINAL_FAMILIES,
};

use crate::error::{Error, Result};

/// One atom of the finite control mesh standing in for the compact set U.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlPoint(pub Vec<f64>);

impl ControlPoint {
    pub fn scalar(v: f64) -> Self {
        ControlPoint(vec![v])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl Serialize for ControlPoint {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.len() == 1 {
            s.serialize_f64(self.0[0])
        } else {
            self.0.serialize(s)
        }
    }
}

impl<'de> Deserialize<'de> for ControlPoint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Scalar(f64),
            Vector(Vec<f64>),
        }
        Ok(match Raw::deserialize(d)? {
            Raw::Scalar(v) => ControlPoint(vec![v]),
            Raw::Vector(v) => ControlPoint(v),
        })
    }
}

/// Declared constants of the standing assumptions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    /// Bound on |b| and on the operator norm of sigma.
    #[serde(rename = "M")]
    pub m: f64,
    /// Joint Lipschitz constant.
    #[serde(rename = "C")]
    pub c: f64,
    /// Bound on |f| and |Phi|.
    #[serde(rename = "F")]
    pub f: f64,
}

/// Optional default grid carried by a config document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub nx: usize,
    pub nt: usize,
    pub lo: f64,
    pub hi: f64,
    #[serde(default)]
    pub periodic: bool,
}

/// The config document as read from JSON. Every field is optional at this
/// level so that validation can report the offending path.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub dimension: Option<usize>,
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_time: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_state: Option<Vec<f64>>,
    pub drift: Option<CoefficientFamily>,
    pub diffusion: Option<CoefficientFamily>,
    pub driver: Option<CoefficientFamily>,
    pub terminal: Option<CoefficientFamily>,
    pub control_mesh: Option<Vec<ControlPoint>>,
    pub bounds: Option<Bounds>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
}

/// A fully resolved control problem.
#[derive(Clone, Debug)]
pub struct Problem {
    pub dim: usize,
    pub horizon: f64,
    pub start_time: f64,
    pub start_state: Vec<f64>,
    pub drift: Drift,
    pub diffusion: Diffusion,
    pub driver: Driver,
    pub terminal: Terminal,
    pub control_mesh: Vec<ControlPoint>,
    pub bounds: Bounds,
    pub grid: Option<GridConfig>,
    config: ProblemConfig,
}

fn missing(path: &str, what: &str) -> Error {
    Error::config(path, format!("missing {what}"))
}

impl Problem {
    /// Resolve and validate a config document.
    pub fn from_config(cfg: ProblemConfig) -> Result<Self> {
        let dim = cfg.dimension.ok_or_else(|| missing("dimension", "dimension"))?;
        if dim == 0 {
            return Err(Error::config("dimension", "dimension must be positive"));
        }
        let horizon = cfg.horizon.ok_or_else(|| missing("horizon", "horizon"))?;
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::config("horizon", "non-positive horizon"));
        }
        let start_time = cfg.start_time.unwrap_or(0.0);
        if !(0.0..=horizon).contains(&start_time) {
            return Err(Error::config("start_time", "start_time must lie in [0, horizon]"));
        }
        let start_state = cfg.start_state.clone().unwrap_or_else(|| vec![0.0; dim]);
        if start_state.len() != dim {
            return Err(Error::config(
                "start_state",
                format!("expected {dim} components, got {}", start_state.len()),
            ));
        }

        let coef = |f: &Option<CoefficientFamily>, path: &str| {
            f.clone().ok_or_else(|| missing(path, "coefficient"))
        };
        let drift = Drift::resolve(&coef(&cfg.drift, "drift")?, "drift")?;
        let diffusion = Diffusion::resolve(&coef(&cfg.diffusion, "diffusion")?, "diffusion", dim)?;
        let driver = Driver::resolve(&coef(&cfg.driver, "driver")?, "driver")?;
        let terminal = Terminal::resolve(&coef(&cfg.terminal, "terminal")?, "terminal")?;

        let control_mesh = cfg
            .control_mesh
            .clone()
            .ok_or_else(|| missing("control_mesh", "control mesh"))?;
        if control_mesh.is_empty() {
            return Err(Error::config("control_mesh", "empty control mesh"));
        }
        let k = control_mesh[0].0.len();
        for (i, c) in control_mesh.iter().enumerate() {
            if c.0.is_empty() || c.0.len() != k || c.0.iter().any(|v| !v.is_finite()) {
                return Err(Error::config(
                    format!("control_mesh[{i}]"),
                    "control points must be finite and share one dimension",
                ));
            }
            if control_mesh[..i].contains(c) {
                return Err(Error::config(format!("control_mesh[{i}]"), "duplicate control point"));
            }
        }

        let bounds = cfg.bounds.ok_or_else(|| missing("bounds", "declared bounds"))?;
        for (name, v) in [("bounds.M", bounds.m), ("bounds.C", bounds.c), ("bounds.F", bounds.f)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(name, "declared bound must be positive"));
            }
        }
        if let Some(g) = &cfg.grid {
            if g.nx < 3 || g.nt < 1 || !(g.lo < g.hi) {
                return Err(Error::config("grid", "need nx >= 3, nt >= 1, lo < hi"));
            }
        }

        Ok(Problem {
            dim,
            horizon,
            start_time,
            start_state,
            drift,
            diffusion,
            driver,
            terminal,
            control_mesh,
            bounds,
            grid: cfg.grid.clone(),
            config: cfg,
        })
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: ProblemConfig =
            serde_json::from_str(s).map_err(|e| Error::config("<document>", e.to_string()))?;
        Self::from_config(cfg)
    }

    /// `load_problem`: read and validate a JSON config file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|_| Error::ConfigNotFound(path.display().to_string()))?;
        Self::from_json_str(&text)
    }

    pub fn config(&self) -> &ProblemConfig {
        &self.config
    }

    pub fn n_controls(&self) -> usize {
        self.control_mesh.len()
    }

    pub fn control_index(&self, v: &ControlPoint) -> Result<usize> {
        self.control_mesh
            .iter()
            .position(|c| c == v)
            .ok_or_else(|| Error::ControlNotInMesh(v.0.clone()))
    }

    /// Constants implied by the catalog metadata of the selected families:
    /// (M, C, F) in the same sense as [`Bounds`].
    pub fn catalog_bounds(&self) -> Bounds {
        let mesh = &self.control_mesh;
        Bounds {
            m: self
                .drift
                .bound(self.dim, mesh)
                .max(self.diffusion.bound(mesh)),
            c: (self.drift.lipschitz() + self.diffusion.lipschitz())
                .max(self.terminal.lipschitz() + self.driver.lipschitz()),
            f: self.driver.bound(self.dim, mesh).max(self.terminal.bound()),
        }
    }

    /// `evaluate_dynamics`: pointwise (b, sigma, f) at a mesh control.
    pub fn evaluate_dynamics(
        &self,
        x: &[f64],
        y: f64,
        z: &[f64],
        v: &ControlPoint,
    ) -> Result<PointDynamics> {
        let idx = self.control_index(v)?;
        Ok(point_dynamics(self, x, y, z, idx))
    }

    /// `evaluate_terminal`: Phi(x).
    pub fn evaluate_terminal(&self, x: &[f64]) -> f64 {
        self.terminal.eval(x)
    }
}

/// Coefficient values at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct PointDynamics {
    pub drift: Vec<f64>,
    pub diffusion: DMatrix<f64>,
    pub driver: f64,
}

pub(crate) fn point_dynamics<C: Coefficients + ?Sized>(
    c: &C,
    x: &[f64],
    y: f64,
    z: &[f64],
    v: usize,
) -> PointDynamics {
    let d = c.dim();
    let mut b = vec![0.0; d];
    let mut s = vec![0.0; d * d];
    c.drift(x, v, &mut b);
    c.diffusion(x, v, &mut s);
    PointDynamics {
        drift: b,
        diffusion: DMatrix::from_row_slice(d, d, &s),
        driver: c.driver(x, y, z, v),
    }
}

/// Coefficient access by control-mesh index. Implemented by the raw
/// [`Problem`] and by its mollified counterpart, so the solver and the
/// simulators are written once for both.
///
/// Diffusion matrices are written row-major into a `d * d` slice.
pub trait Coefficients: Sync {
    fn dim(&self) -> usize;
    fn n_controls(&self) -> usize;
    fn drift(&self, x: &[f64], v: usize, out: &mut [f64]);
    fn diffusion(&self, x: &[f64], v: usize, out: &mut [f64]);
    fn driver(&self, x: &[f64], y: f64, z: &[f64], v: usize) -> f64;
    fn terminal(&self, x: &[f64]) -> f64;
    /// Regularisation level: adds `delta^2 I` to the diffusion generator and
    /// `delta dB` to the state equation. Zero for the raw problem.
    fn delta(&self) -> f64 {
        0.0
    }
}

impl Coefficients for Problem {
    fn dim(&self) -> usize {
        self.dim
    }
    fn n_controls(&self) -> usize {
        self.control_mesh.len()
    }
    fn drift(&self, x: &[f64], v: usize, out: &mut [f64]) {
        self.drift.eval(x, &self.control_mesh[v].0, out)
    }
    fn diffusion(&self, x: &[f64], v: usize, out: &mut [f64]) {
        self.diffusion.eval(x, &self.control_mesh[v].0, out)
    }
    fn driver(&self, x: &[f64], y: f64, z: &[f64], v: usize) -> f64 {
        self.driver.eval(x, y, z, &self.control_mesh[v].0)
    }
    fn terminal(&self, x: &[f64]) -> f64 {
        self.terminal.eval(x)
    }
}

/// Operator norm of a row-major square matrix.
pub(crate) fn operator_norm(m: &[f64], d: usize) -> f64 {
    match d {
        1 => m[0].abs(),
        _ => {
            let mat = DMatrix::from_row_slice(d, d, m);
            mat.singular_values().max()
        }
    }
}
