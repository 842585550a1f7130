//! Classical-limit phase in the logarithmic parametrization.
//!
//! With `q(c) = ln(1 + 2 sigma2_0 c)` one has `dq = 2 sigma2(c) dc`, and on the
//! stationary family `sigma1 = -sigma2 x~`, so
//!
//! `sigma1.x + sigma2 x^2 / 2 = sigma2 ((x - x~)^2 - x~^2) / 2`.
//!
//! Hence `1/4 int_0^Q (x - x~)^2 dq` equals the quadratic-ansatz phase plus the
//! path-independent constant `x~^2 Q / 4`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::minkowski::FourVector;
use crate::phase_flow::{check_same_grid, FlowCoefficients, FlowInitialData};
use crate::quadrature::trapezoid;
use crate::stationarity::optimal_sigma1;
use crate::worldline::{check_grid, Worldline};

/// Below this `|Q|` the shift point is not computed.
pub const DEGENERATE_Q: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseGeometry {
    #[serde(rename = "Q")]
    pub q_span: f64,
    pub x_tilde: FourVector,
    pub sigma2_0: f64,
    #[serde(rename = "C")]
    pub duration: f64,
}

impl PhaseGeometry {
    pub fn new(a: &FourVector, b: &FourVector, sigma2_0: f64, duration: f64) -> Result<Self> {
        let q_span = log_duration(sigma2_0, duration)?;
        let x_tilde = shift_point(a, b, q_span)?;
        Ok(PhaseGeometry {
            q_span,
            x_tilde,
            sigma2_0,
            duration,
        })
    }

    /// Map from the `q` parameter back to `c`.
    pub fn c_of_q(&self, q: f64) -> f64 {
        if self.sigma2_0 == 0.0 {
            q
        } else {
            q.exp_m1() / (2.0 * self.sigma2_0)
        }
    }

    /// The additive constant `x~^2 Q / 4`.
    pub fn offset(&self) -> f64 {
        0.25 * self.x_tilde.square() * self.q_span
    }
}

/// `ln(1 + 2 sigma2_0 C)`.
pub fn log_duration(sigma2_0: f64, duration: f64) -> Result<f64> {
    let x = 2.0 * sigma2_0 * duration;
    if !(1.0 + x > 0.0) {
        return Err(Error::FlowSingularity {
            c_star: -1.0 / (2.0 * sigma2_0),
        });
    }
    Ok(x.ln_1p())
}

/// `-(b - e^Q a) / (e^Q - 1)`.
pub fn shift_point(a: &FourVector, b: &FourVector, q_span: f64) -> Result<FourVector> {
    if !(q_span.abs() >= DEGENERATE_Q) {
        return Err(Error::DegenerateQ(q_span));
    }
    let e = q_span.exp();
    Ok(-(*b - *a * e) / q_span.exp_m1())
}

/// `1/4 int (x - x~)^2 dq` for samples on a uniform grid over a signed `q` span.
pub fn phase_eval_q(samples: &[FourVector], q_span: f64, x_tilde: &FourVector) -> Result<f64> {
    let n = samples.len().saturating_sub(1);
    if n < 2 || !q_span.is_finite() {
        return Err(Error::BadGrid(format!(
            "{} samples over q span {q_span}",
            samples.len()
        )));
    }
    let f: Vec<f64> = samples
        .iter()
        .map(|x| 0.25 * (*x - *x_tilde).square())
        .collect();
    Ok(trapezoid(&f, q_span / n as f64))
}

/// `int [sigma1.x + sigma2 x^2 / 2] dc` on the shared grid.
pub fn phase_eval_c(w: &Worldline, flow: &FlowCoefficients) -> Result<f64> {
    check_same_grid(flow.duration, flow.intervals(), w)?;
    let f: Vec<f64> = w
        .points()
        .iter()
        .zip(flow.sigma1.iter().zip(&flow.sigma2))
        .map(|(x, (s1, s2))| s1.dot(x) + 0.5 * s2 * x.square())
        .collect();
    Ok(trapezoid(&f, w.step()))
}

/// Both sides of the change-of-variables identity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseComparison {
    pub geometry: PhaseGeometry,
    pub phase_q: f64,
    pub phase_c: f64,
    /// `x~^2/2 int sigma2 dc` on the c-grid.
    pub constant: f64,
}

impl PhaseComparison {
    /// `phase_q - phase_c`.
    pub fn raw_difference(&self) -> f64 {
        self.phase_q - self.phase_c
    }

    pub fn gap(&self) -> f64 {
        (self.phase_q - self.phase_c - self.constant).abs()
    }
}

/// Evaluates both phases for `w`, with `sigma1_0` taken at its stationary value.
/// The `q`-grid has as many intervals as `w`.
pub fn compare_phases(
    w: &Worldline,
    sigma2_0: f64,
    a: &FourVector,
    b: &FourVector,
    duration: f64,
) -> Result<PhaseComparison> {
    check_grid(duration, w.intervals())?;
    let geometry = PhaseGeometry::new(a, b, sigma2_0, duration)?;
    let sigma1_0 = optimal_sigma1(sigma2_0, a, b, duration)?;
    let flow = FlowCoefficients::closed_form(
        FlowInitialData::new(sigma1_0, sigma2_0),
        duration,
        w.intervals(),
    )?;
    let phase_c = phase_eval_c(w, &flow)?;

    let n = w.intervals();
    let dq = geometry.q_span / n as f64;
    let resampled: Vec<FourVector> = (0..=n)
        .map(|j| {
            let c = if j == n {
                duration
            } else {
                geometry.c_of_q(j as f64 * dq)
            };
            w.interpolate(c.clamp(0.0, duration))
        })
        .collect();
    let phase_q = phase_eval_q(&resampled, geometry.q_span, &geometry.x_tilde)?;
    let constant = 0.5 * geometry.x_tilde.square() * trapezoid(&flow.sigma2, w.step());
    Ok(PhaseComparison {
        geometry,
        phase_q,
        phase_c,
        constant,
    })
}

/// `|phase_q - phase_c - x~^2/2 int sigma2 dc|`.
pub fn consistency_gap(
    w: &Worldline,
    sigma2_0: f64,
    a: &FourVector,
    b: &FourVector,
    duration: f64,
) -> Result<f64> {
    compare_phases(w, sigma2_0, a, b, duration).map(|cmp| cmp.gap())
}
