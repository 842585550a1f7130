//! Flow of the quadratic phase coefficients along the world line.
//!
//! With the phase `sigma = int [sigma1 . x + sigma2 x^2 / 2] dc`, the action
//! eigenvalue is independent of the interior of the world line iff
//!
//! ```text
//! d sigma1 / dc = -2 sigma2 sigma1,     d sigma2 / dc = -2 sigma2^2,
//! ```
//!
//! whose solution shares the denominator `D(c) = 1 + 2 sigma2_0 c`:
//! `sigma1(c) = sigma1_0 / D(c)`, `sigma2(c) = sigma2_0 / D(c)`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::minkowski::FourVector;
use crate::worldline::{check_grid, Worldline};

/// Smallest admissible value of the shared denominator during integration.
pub const DENOMINATOR_GUARD: f64 = 1e-12;

/// Initial data `(sigma1_0, sigma2_0)` of the coefficient flow.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FlowInitialData {
    pub sigma1_0: FourVector,
    pub sigma2_0: f64,
}

impl FlowInitialData {
    pub fn new(sigma1_0: FourVector, sigma2_0: f64) -> Self {
        FlowInitialData { sigma1_0, sigma2_0 }
    }

    /// `1 + 2 sigma2_0 c`.
    pub fn denominator(&self, c: f64) -> f64 {
        1.0 + 2.0 * self.sigma2_0 * c
    }

    /// Errors with [`Error::FlowSingularity`] unless `D > 0` on the closed
    /// interval between 0 and `c_end` (either sign of `c_end`).
    pub fn check_admissible(&self, c_end: f64) -> Result<()> {
        if self.denominator(c_end) > 0.0 {
            Ok(())
        } else {
            Err(Error::FlowSingularity {
                c_star: -1.0 / (2.0 * self.sigma2_0),
            })
        }
    }
}

/// Flow coefficients sampled on a uniform grid over `[0, C]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowCoefficients {
    pub init: FlowInitialData,
    pub duration: f64,
    pub sigma1: Vec<FourVector>,
    pub sigma2: Vec<f64>,
}

impl FlowCoefficients {
    /// Samples the closed-form solution at `N + 1` nodes.
    pub fn closed_form(init: FlowInitialData, duration: f64, intervals: usize) -> Result<Self> {
        check_grid(duration, intervals)?;
        init.check_admissible(duration)?;
        let h = duration / intervals as f64;
        let (sigma1, sigma2) = (0..=intervals)
            .map(|i| closed_form(&init, i as f64 * h))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .unzip();
        Ok(FlowCoefficients {
            init,
            duration,
            sigma1,
            sigma2,
        })
    }

    /// Coefficients held at their initial values. These violate the flow
    /// whenever `sigma2_0 != 0` and serve as a negative control.
    pub fn frozen(init: FlowInitialData, duration: f64, intervals: usize) -> Result<Self> {
        check_grid(duration, intervals)?;
        Ok(FlowCoefficients {
            init,
            duration,
            sigma1: vec![init.sigma1_0; intervals + 1],
            sigma2: vec![init.sigma2_0; intervals + 1],
        })
    }

    pub fn intervals(&self) -> usize {
        self.sigma2.len() - 1
    }

    pub fn step(&self) -> f64 {
        self.duration / self.intervals() as f64
    }

    pub fn grid(&self) -> Vec<f64> {
        let h = self.step();
        (0..=self.intervals()).map(|i| i as f64 * h).collect()
    }

    /// Errors unless `w` has the same duration and node count.
    pub fn check_matches(&self, w: &Worldline) -> Result<()> {
        check_same_grid(self.duration, self.intervals(), w)
    }

    /// CSV with header `c,sigma1_0,sigma1_1,sigma1_2,sigma1_3,sigma2`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("c,sigma1_0,sigma1_1,sigma1_2,sigma1_3,sigma2\n");
        for ((c, s1), s2) in self.grid().iter().zip(&self.sigma1).zip(&self.sigma2) {
            let [s0, sx, sy, sz] = s1.0;
            let _ = writeln!(
                out,
                "{c:.16e},{s0:.16e},{sx:.16e},{sy:.16e},{sz:.16e},{s2:.16e}"
            );
        }
        out
    }
}

pub(crate) fn check_same_grid(duration: f64, intervals: usize, w: &Worldline) -> Result<()> {
    if intervals != w.intervals() {
        return Err(Error::GridMismatch(format!(
            "coefficients have {intervals} intervals, world line has {}",
            w.intervals()
        )));
    }
    if (duration - w.duration()).abs() > 1e-12 * duration.abs().max(1.0) {
        return Err(Error::GridMismatch(format!(
            "coefficients span C = {duration}, world line spans C = {}",
            w.duration()
        )));
    }
    Ok(())
}

/// Right-hand side `(-2 sigma2 sigma1, -2 sigma2^2)`.
pub fn flow_rhs(sigma1: &FourVector, sigma2: f64) -> (FourVector, f64) {
    (*sigma1 * (-2.0 * sigma2), -2.0 * sigma2 * sigma2)
}

/// Exact solution at parameter `c`.
pub fn closed_form(init: &FlowInitialData, c: f64) -> Result<(FourVector, f64)> {
    let d = init.denominator(c);
    if !(d > 0.0) {
        return Err(Error::FlowSingularity {
            c_star: -1.0 / (2.0 * init.sigma2_0),
        });
    }
    Ok((init.sigma1_0 / d, init.sigma2_0 / d))
}

/// Location of the pole `-1 / (2 sigma2_0)` when it lies at positive `c`.
pub fn singularity_time(init: &FlowInitialData) -> Option<f64> {
    (init.sigma2_0 < 0.0).then(|| -1.0 / (2.0 * init.sigma2_0))
}

/// Classic fixed-step RK4 integration of the flow on `N` steps over `[0, C]`.
pub fn integrate_flow(
    init: FlowInitialData,
    duration: f64,
    intervals: usize,
) -> Result<FlowCoefficients> {
    check_grid(duration, intervals)?;
    if let Some(c_star) = singularity_time(&init) {
        if c_star <= duration {
            return Err(Error::FlowSingularity { c_star });
        }
    }
    let h = duration / intervals as f64;
    let mut s1 = init.sigma1_0;
    let mut s2 = init.sigma2_0;
    let mut sigma1 = Vec::with_capacity(intervals + 1);
    let mut sigma2 = Vec::with_capacity(intervals + 1);
    sigma1.push(s1);
    sigma2.push(s2);
    for _ in 0..intervals {
        let (k1a, k1b) = flow_rhs(&s1, s2);
        let (k2a, k2b) = flow_rhs(&(s1 + k1a * (0.5 * h)), s2 + 0.5 * h * k1b);
        let (k3a, k3b) = flow_rhs(&(s1 + k2a * (0.5 * h)), s2 + 0.5 * h * k2b);
        let (k4a, k4b) = flow_rhs(&(s1 + k3a * h), s2 + h * k3b);
        s1 += (k1a + k2a * 2.0 + k3a * 2.0 + k4a) * (h / 6.0);
        s2 += h / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b);

        // D(c) = sigma2_0 / sigma2(c) along the exact solution
        if init.sigma2_0 != 0.0 {
            let d = init.sigma2_0 / s2;
            if !(d > DENOMINATOR_GUARD) || !d.is_finite() {
                return Err(Error::FlowSingularity {
                    c_star: -1.0 / (2.0 * init.sigma2_0),
                });
            }
        }
        sigma1.push(s1);
        sigma2.push(s2);
    }
    Ok(FlowCoefficients {
        init,
        duration,
        sigma1,
        sigma2,
    })
}

/// Largest relative deviation of `flow` from the closed form, measured per
/// node on the Euclidean norm of `sigma1` and on `|sigma2|`. Nodes where the
/// exact value vanishes contribute their absolute error.
pub fn max_relative_error(flow: &FlowCoefficients) -> Result<f64> {
    let mut worst = 0.0f64;
    for (i, c) in flow.grid().into_iter().enumerate() {
        let (e1, e2) = closed_form(&flow.init, c)?;
        let rel = |err: f64, scale: f64| if scale > 0.0 { err / scale } else { err };
        worst = worst
            .max(rel(
                (flow.sigma1[i] - e1).euclidean_norm(),
                e1.euclidean_norm(),
            ))
            .max(rel((flow.sigma2[i] - e2).abs(), e2.abs()));
    }
    Ok(worst)
}
