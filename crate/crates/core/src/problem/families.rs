//! Closed catalog of parametric coefficient families.
//!
//! Each family knows how to evaluate itself, which arguments it actually
//! depends on (used by the mollifier to skip inert coordinates), and its
//! Lipschitz constant and uniform bound as functions of its parameters. The
//! bounds of drivers that grow in `y` or `z` are taken over the audit probe
//! box `|y|, |z_i| <= PROBE_RADIUS`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::ControlPoint;

/// Half-width of the probe box used for audits and for driver bound metadata.
pub const PROBE_RADIUS: f64 = 5.0;

/// A coefficient selection as written in a config document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientFamily {
    #[serde(rename = "family")]
    pub family_name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl CoefficientFamily {
    pub fn new(name: &str, params: &[(&str, f64)]) -> Self {
        CoefficientFamily {
            family_name: name.to_string(),
            params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    fn take(&self, path: &str, names: &[&'static str]) -> Result<Vec<f64>> {
        if self.params.len() != names.len() {
            return Err(Error::config(
                format!("{path}.params"),
                format!(
                    "family `{}` takes {} parameter(s) ({}), got {}",
                    self.family_name,
                    names.len(),
                    names.join(", "),
                    self.params.len()
                ),
            ));
        }
        names
            .iter()
            .map(|n| {
                let v = self.params.get(*n).copied().ok_or_else(|| {
                    Error::config(
                        format!("{path}.params.{n}"),
                        format!("missing parameter for family `{}`", self.family_name),
                    )
                })?;
                if !v.is_finite() {
                    return Err(Error::config(
                        format!("{path}.params.{n}"),
                        "parameter must be finite",
                    ));
                }
                Ok(v)
            })
            .collect()
    }

    fn unknown(&self, path: &str, catalog: &[&str]) -> Error {
        Error::config(
            format!("{path}.family"),
            format!(
                "unknown family `{}` (known: {})",
                self.family_name,
                catalog.join(", ")
            ),
        )
    }
}

fn first(v: &[f64]) -> f64 {
    v.first().copied().unwrap_or(0.0)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn max_abs_control(mesh: &[ControlPoint]) -> f64 {
    mesh.iter()
        .flat_map(|c| c.0.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()))
}

fn max_norm_control(mesh: &[ControlPoint]) -> f64 {
    mesh.iter().fold(0.0f64, |m, c| m.max(norm(&c.0)))
}

// ---------------------------------------------------------------------------
// Drift b(x, v)

pub const DRIFT_FAMILIES: &[&str] = &["constant-drift", "bang-drift", "trig-drift"];

#[derive(Clone, Debug, PartialEq)]
pub enum Drift {
    /// b_i = value
    Constant { value: f64 },
    /// b_i = gain * v_{i mod k}
    Bang { gain: f64 },
    /// b_i = amplitude * sin(x_i) + gain * v_{i mod k}
    Trig { amplitude: f64, gain: f64 },
}

impl Drift {
    pub fn resolve(fam: &CoefficientFamily, path: &str) -> Result<Self> {
        Ok(match fam.family_name.as_str() {
            "constant-drift" => Drift::Constant {
                value: fam.take(path, &["value"])?[0],
            },
            "bang-drift" => Drift::Bang {
                gain: fam.take(path, &["gain"])?[0],
            },
            "trig-drift" => {
                let p = fam.take(path, &["amplitude", "gain"])?;
                Drift::Trig {
                    amplitude: p[0],
                    gain: p[1],
                }
            }
            _ => return Err(fam.unknown(path, DRIFT_FAMILIES)),
        })
    }

    pub fn eval(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        let k = v.len().max(1);
        let vc = |i: usize| v.get(i % k).copied().unwrap_or(0.0);
        for (i, o) in out.iter_mut().enumerate() {
            *o = match *self {
                Drift::Constant { value } => value,
                Drift::Bang { gain } => gain * vc(i),
                Drift::Trig { amplitude, gain } => amplitude * x[i].sin() + gain * vc(i),
            };
        }
    }

    pub fn depends_on_x(&self) -> bool {
        matches!(self, Drift::Trig { amplitude, .. } if *amplitude != 0.0)
    }

    pub fn lipschitz(&self) -> f64 {
        match *self {
            Drift::Trig { amplitude, .. } => amplitude.abs(),
            _ => 0.0,
        }
    }

    pub fn bound(&self, dim: usize, mesh: &[ControlPoint]) -> f64 {
        let sd = (dim as f64).sqrt();
        let vmax = max_abs_control(mesh);
        match *self {
            Drift::Constant { value } => value.abs() * sd,
            Drift::Bang { gain } => gain.abs() * vmax * sd,
            Drift::Trig { amplitude, gain } => (amplitude.abs() + gain.abs() * vmax) * sd,
        }
    }
}

// ---------------------------------------------------------------------------
// Diffusion sigma(x, v), row-major d x d

pub const DIFFUSION_FAMILIES: &[&str] = &[
    "identity-diffusion",
    "rotation-diffusion",
    "control-diffusion",
    "diagonal-diffusion",
];

#[derive(Clone, Debug, PartialEq)]
pub enum Diffusion {
    /// sigma = scale * I
    Identity { scale: f64 },
    /// sigma = scale * R(frequency * x_1), a rotation in the (x_1, x_2) plane.
    Rotation { scale: f64, frequency: f64 },
    /// sigma = scale * v_1 * I
    Control { scale: f64 },
    /// sigma = diag(scale, rest, ..., rest)
    Diagonal { scale: f64, rest: f64 },
}

impl Diffusion {
    pub fn resolve(fam: &CoefficientFamily, path: &str, dim: usize) -> Result<Self> {
        Ok(match fam.family_name.as_str() {
            "identity-diffusion" => Diffusion::Identity {
                scale: fam.take(path, &["scale"])?[0],
            },
            "rotation-diffusion" => {
                let p = fam.take(path, &["scale", "frequency"])?;
                if dim < 2 {
                    return Err(Error::config(
                        format!("{path}.family"),
                        "rotation-diffusion needs dimension >= 2",
                    ));
                }
                Diffusion::Rotation {
                    scale: p[0],
                    frequency: p[1],
                }
            }
            "control-diffusion" => Diffusion::Control {
                scale: fam.take(path, &["scale"])?[0],
            },
            "diagonal-diffusion" => {
                let p = fam.take(path, &["scale", "rest"])?;
                Diffusion::Diagonal {
                    scale: p[0],
                    rest: p[1],
                }
            }
            _ => return Err(fam.unknown(path, DIFFUSION_FAMILIES)),
        })
    }

    pub fn eval(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        let d = x.len();
        out.iter_mut().for_each(|o| *o = 0.0);
        match *self {
            Diffusion::Identity { scale } => {
                for i in 0..d {
                    out[i * d + i] = scale;
                }
            }
            Diffusion::Control { scale } => {
                let s = scale * first(v);
                for i in 0..d {
                    out[i * d + i] = s;
                }
            }
            Diffusion::Diagonal { scale, rest } => {
                for i in 0..d {
                    out[i * d + i] = if i == 0 { scale } else { rest };
                }
            }
            Diffusion::Rotation { scale, frequency } => {
                for i in 0..d {
                    out[i * d + i] = scale;
                }
                let (s, c) = (frequency * x[0]).sin_cos();
                out[0] = scale * c;
                out[1] = -scale * s;
                out[d] = scale * s;
                out[d + 1] = scale * c;
            }
        }
    }

    pub fn depends_on_x(&self) -> bool {
        matches!(self, Diffusion::Rotation { frequency, .. } if *frequency != 0.0)
    }

    /// Lipschitz constant in operator norm.
    pub fn lipschitz(&self) -> f64 {
        match *self {
            Diffusion::Rotation { scale, frequency } => (scale * frequency).abs(),
            _ => 0.0,
        }
    }

    /// Bound on the operator norm.
    pub fn bound(&self, mesh: &[ControlPoint]) -> f64 {
        match *self {
            Diffusion::Identity { scale } | Diffusion::Rotation { scale, .. } => scale.abs(),
            Diffusion::Diagonal { scale, rest } => scale.abs().max(rest.abs()),
            Diffusion::Control { scale } => {
                scale.abs() * mesh.iter().fold(0.0f64, |m, c| m.max(first(&c.0).abs()))
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Driver f(x, y, z, v)

pub const DRIVER_FAMILIES: &[&str] = &[
    "constant-driver",
    "linear-in-y-driver",
    "z-coupled-driver",
    "control-linear-driver",
    "control-quadratic-driver",
    "linear-z-driver",
    "convex-z-driver",
    "trig-driver",
];

#[derive(Clone, Debug, PartialEq)]
pub enum Driver {
    /// f = value
    Constant { value: f64 },
    /// f = rate * y + offset
    LinearInY { rate: f64, offset: f64 },
    /// f = z_gain * sin(z_1) + y_gain * y
    ZCoupled { z_gain: f64, y_gain: f64 },
    /// f = gain * v_1 + offset
    ControlLinear { gain: f64, offset: f64 },
    /// f = weight * |v|^2 + offset
    ControlQuadratic { weight: f64, offset: f64 },
    /// f = gain * z_1
    LinearZ { gain: f64 },
    /// f = gain * sqrt(1 + |z|^2)
    ConvexZ { gain: f64 },
    /// f = amplitude * sin(x_1) + offset
    Trig { amplitude: f64, offset: f64 },
}

/// Which arguments of the driver carry information.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DriverDependence {
    pub x: bool,
    pub y: bool,
    pub z: bool,
}

impl Driver {
    pub fn resolve(fam: &CoefficientFamily, path: &str) -> Result<Self> {
        Ok(match fam.family_name.as_str() {
            "constant-driver" => Driver::Constant {
                value: fam.take(path, &["value"])?[0],
            },
            "linear-in-y-driver" => {
                let p = fam.take(path, &["rate", "offset"])?;
                Driver::LinearInY {
                    rate: p[0],
                    offset: p[1],
                }
            }
            "z-coupled-driver" => {
                let p = fam.take(path, &["z_gain", "y_gain"])?;
                Driver::ZCoupled {
                    z_gain: p[0],
                    y_gain: p[1],
                }
            }
            "control-linear-driver" => {
                let p = fam.take(path, &["gain", "offset"])?;
                Driver::ControlLinear {
                    gain: p[0],
                    offset: p[1],
                }
            }
            "control-quadratic-driver" => {
                let p = fam.take(path, &["weight", "offset"])?;
                Driver::ControlQuadratic {
                    weight: p[0],
                    offset: p[1],
                }
            }
            "linear-z-driver" => Driver::LinearZ {
                gain: fam.take(path, &["gain"])?[0],
            },
            "convex-z-driver" => Driver::ConvexZ {
                gain: fam.take(path, &["gain"])?[0],
            },
            "trig-driver" => {
                let p = fam.take(path, &["amplitude", "offset"])?;
                Driver::Trig {
                    amplitude: p[0],
                    offset: p[1],
                }
            }
            _ => return Err(fam.unknown(path, DRIVER_FAMILIES)),
        })
    }

    pub fn eval(&self, x: &[f64], y: f64, z: &[f64], v: &[f64]) -> f64 {
        match *self {
            Driver::Constant { value } => value,
            Driver::LinearInY { rate, offset } => rate * y + offset,
            Driver::ZCoupled { z_gain, y_gain } => z_gain * first(z).sin() + y_gain * y,
            Driver::ControlLinear { gain, offset } => gain * first(v) + offset,
            Driver::ControlQuadratic { weight, offset } => {
                weight * v.iter().map(|a| a * a).sum::<f64>() + offset
            }
            Driver::LinearZ { gain } => gain * first(z),
            Driver::ConvexZ { gain } => gain * (1.0 + z.iter().map(|a| a * a).sum::<f64>()).sqrt(),
            Driver::Trig { amplitude, offset } => amplitude * x[0].sin() + offset,
        }
    }

    pub fn dependence(&self) -> DriverDependence {
        let (x, y, z) = match *self {
            Driver::Constant { .. }
            | Driver::ControlLinear { .. }
            | Driver::ControlQuadratic { .. } => (false, false, false),
            Driver::LinearInY { rate, .. } => (false, rate != 0.0, false),
            Driver::ZCoupled { z_gain, y_gain } => (false, y_gain != 0.0, z_gain != 0.0),
            Driver::LinearZ { gain } | Driver::ConvexZ { gain } => (false, false, gain != 0.0),
            Driver::Trig { amplitude, .. } => (amplitude != 0.0, false, false),
        };
        DriverDependence { x, y, z }
    }

    /// Whether f is independent of z (precondition of the (H2) check).
    pub fn independent_of_z(&self) -> bool {
        !self.dependence().z
    }

    /// Joint Lipschitz constant for |f - f'| <= C (|dx| + |dy| + |dz|).
    pub fn lipschitz(&self) -> f64 {
        match *self {
            Driver::Constant { .. }
            | Driver::ControlLinear { .. }
            | Driver::ControlQuadratic { .. } => 0.0,
            Driver::LinearInY { rate, .. } => rate.abs(),
            Driver::ZCoupled { z_gain, y_gain } => z_gain.abs().max(y_gain.abs()),
            Driver::LinearZ { gain } | Driver::ConvexZ { gain } => gain.abs(),
            Driver::Trig { amplitude, .. } => amplitude.abs(),
        }
    }

    /// Bound of |f| over the probe box.
    pub fn bound(&self, dim: usize, mesh: &[ControlPoint]) -> f64 {
        let r = PROBE_RADIUS;
        match *self {
            Driver::Constant { value } => value.abs(),
            Driver::LinearInY { rate, offset } => rate.abs() * r + offset.abs(),
            Driver::ZCoupled { z_gain, y_gain } => z_gain.abs() + y_gain.abs() * r,
            Driver::ControlLinear { gain, offset } => {
                gain.abs() * mesh.iter().fold(0.0f64, |m, c| m.max(first(&c.0).abs())) + offset.abs()
            }
            Driver::ControlQuadratic { weight, offset } => {
                weight.abs() * max_norm_control(mesh).powi(2) + offset.abs()
            }
            Driver::LinearZ { gain } => gain.abs() * r,
            Driver::ConvexZ { gain } => gain.abs() * (1.0 + r * r * dim as f64).sqrt(),
            Driver::Trig { amplitude, offset } => amplitude.abs() + offset.abs(),
        }
    }
}

// ---------------------------------------------------------------------------
// Terminal Phi(x)

pub const TERMINAL_FAMILIES: &[&str] = &["trig-terminal", "constant-terminal", "capped-abs-terminal"];

#[derive(Clone, Debug, PartialEq)]
pub enum Terminal {
    /// Phi = amplitude * mean_i sin(x_i)
    Trig { amplitude: f64 },
    /// Phi = value
    Constant { value: f64 },
    /// Phi = min(|x|, cap)
    CappedAbs { cap: f64 },
}

impl Terminal {
    pub fn resolve(fam: &CoefficientFamily, path: &str) -> Result<Self> {
        Ok(match fam.family_name.as_str() {
            "trig-terminal" => Terminal::Trig {
                amplitude: fam.take(path, &["amplitude"])?[0],
            },
            "constant-terminal" => Terminal::Constant {
                value: fam.take(path, &["value"])?[0],
            },
            "capped-abs-terminal" => {
                let cap = fam.take(path, &["cap"])?[0];
                if cap < 0.0 {
                    return Err(Error::config(format!("{path}.params.cap"), "cap must be >= 0"));
                }
                Terminal::CappedAbs { cap }
            }
            _ => return Err(fam.unknown(path, TERMINAL_FAMILIES)),
        })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            Terminal::Trig { amplitude } => {
                amplitude * x.iter().map(|a| a.sin()).sum::<f64>() / x.len() as f64
            }
            Terminal::Constant { value } => value,
            Terminal::CappedAbs { cap } => norm(x).min(cap),
        }
    }

    pub fn depends_on_x(&self) -> bool {
        match *self {
            Terminal::Trig { amplitude } => amplitude != 0.0,
            Terminal::Constant { .. } => false,
            Terminal::CappedAbs { cap } => cap > 0.0,
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match *self {
            Terminal::Trig { amplitude } => amplitude.abs(),
            Terminal::Constant { .. } => 0.0,
            Terminal::CappedAbs { cap } => {
                if cap > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn bound(&self) -> f64 {
        match *self {
            Terminal::Trig { amplitude } => amplitude.abs(),
            Terminal::Constant { value } => value.abs(),
            Terminal::CappedAbs { cap } => cap,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arity_mismatch_names_the_field() {
        let fam = CoefficientFamily::new("constant-driver", &[("value", 1.0), ("extra", 2.0)]);
        let err = Driver::resolve(&fam, "driver").unwrap_err();
        assert!(err.to_string().starts_with("driver.params"), "{err}");
    }

    #[test]
    fn unknown_family_lists_catalog() {
        let fam = CoefficientFamily::new("warp-drift", &[]);
        let err = Drift::resolve(&fam, "drift").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("drift.family") && msg.contains("bang-drift"), "{msg}");
    }

    #[test]
    fn rotation_is_orthogonal_times_scale() {
        let d = Diffusion::Rotation {
            scale: 2.0,
            frequency: 0.7,
        };
        let mut s = [0.0; 4];
        d.eval(&[1.3, -0.2], &[0.0], &mut s);
        // s^T s = scale^2 I
        let a = s[0] * s[0] + s[2] * s[2];
        let b = s[0] * s[1] + s[2] * s[3];
        assert!((a - 4.0).abs() < 1e-12 && b.abs() < 1e-12);
    }

    #[test]
    fn z_coupled_closed_form() {
        let f = Driver::ZCoupled {
            z_gain: 1.0,
            y_gain: 1.0,
        };
        let v = f.eval(&[0.3], 0.0, &[std::f64::consts::FRAC_PI_2], &[1.0]);
        assert!((v - 1.0).abs() < 1e-15);
    }
}
