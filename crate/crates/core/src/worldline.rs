//! World lines sampled on a uniform grid of the invariant parameter `c`.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::minkowski::FourVector;
use crate::quadrature;

/// Number of sine modes in an interior perturbation.
const PERTURBATION_MODES: usize = 4;

/// `N + 1` samples `x_i = x(i C / N)` of a world line over `c in [0, C]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Worldline {
    duration: f64,
    points: Vec<FourVector>,
}

pub(crate) fn check_grid(duration: f64, intervals: usize) -> Result<()> {
    if intervals < 2 {
        return Err(Error::BadGrid(format!(
            "need N >= 2 intervals, got {intervals}"
        )));
    }
    if !(duration > 0.0) || !duration.is_finite() {
        return Err(Error::BadGrid(format!(
            "duration must be positive, got {duration}"
        )));
    }
    Ok(())
}

impl Worldline {
    pub fn from_points(duration: f64, points: Vec<FourVector>) -> Result<Self> {
        check_grid(duration, points.len().saturating_sub(1))?;
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::BadGrid(format!("sample {i} is not finite")));
        }
        Ok(Worldline { duration, points })
    }

    /// Samples `f(c)` at every node.
    pub fn from_fn(duration: f64, intervals: usize, f: impl Fn(f64) -> FourVector) -> Result<Self> {
        check_grid(duration, intervals)?;
        let step = duration / intervals as f64;
        let points = (0..=intervals).map(|i| f(i as f64 * step)).collect();
        Worldline::from_points(duration, points)
    }

    /// The classical trajectory `x(c) = a + (c / C)(b - a)`.
    pub fn straight_line(
        a: FourVector,
        b: FourVector,
        duration: f64,
        intervals: usize,
    ) -> Result<Self> {
        check_grid(duration, intervals)?;
        let delta = b - a;
        let mut points: Vec<FourVector> = (0..=intervals)
            .map(|i| a + delta * (i as f64 / intervals as f64))
            .collect();
        points[intervals] = b;
        Worldline::from_points(duration, points)
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn intervals(&self) -> usize {
        self.points.len() - 1
    }

    pub fn step(&self) -> f64 {
        self.duration / self.intervals() as f64
    }

    pub fn points(&self) -> &[FourVector] {
        &self.points
    }

    pub fn start(&self) -> FourVector {
        self.points[0]
    }

    pub fn end(&self) -> FourVector {
        self.points[self.intervals()]
    }

    pub fn grid(&self) -> Vec<f64> {
        let h = self.step();
        (0..=self.intervals()).map(|i| i as f64 * h).collect()
    }

    /// Displaces interior nodes by a random superposition of sine modes that
    /// vanish at both ends. Each component offset is bounded by `amplitude / 2`,
    /// so the Euclidean norm of the offset never exceeds `amplitude`. The modes
    /// depend only on `seed`, not on the grid, so the same seed gives the same
    /// continuous perturbation at every resolution.
    pub fn perturb_interior(&self, amplitude: f64, seed: u64) -> Worldline {
        if amplitude == 0.0 {
            return self.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut coeffs = [[0.0f64; PERTURBATION_MODES]; 4];
        for row in coeffs.iter_mut() {
            for c in row.iter_mut() {
                *c = rng.gen_range(-1.0..1.0);
            }
            let total: f64 = row.iter().map(|c| c.abs()).sum();
            if total > 0.0 {
                for c in row.iter_mut() {
                    *c *= 0.5 / total;
                }
            }
        }

        let n = self.intervals();
        let mut points = self.points.clone();
        for (i, p) in points.iter_mut().enumerate().take(n).skip(1) {
            let s = i as f64 / n as f64;
            let offset = FourVector(std::array::from_fn(|mu| {
                coeffs[mu]
                    .iter()
                    .enumerate()
                    .map(|(k, c)| c * ((k + 1) as f64 * std::f64::consts::PI * s).sin())
                    .sum::<f64>()
            }));
            *p += offset * amplitude;
        }
        Worldline {
            duration: self.duration,
            points,
        }
    }

    /// Second-order finite-difference velocity `dx/dc` at node `i`.
    pub fn velocity(&self, i: usize) -> Result<FourVector> {
        let n = self.intervals();
        if i > n {
            return Err(Error::IndexOutOfRange { index: i, max: n });
        }
        let h = self.step();
        let x = &self.points;
        let v = if i == 0 {
            (x[1] * 4.0 - x[0] * 3.0 - x[2]) / (2.0 * h)
        } else if i == n {
            (x[n] * 3.0 - x[n - 1] * 4.0 + x[n - 2]) / (2.0 * h)
        } else {
            (x[i + 1] - x[i - 1]) / (2.0 * h)
        };
        Ok(v)
    }

    pub fn velocities(&self) -> Vec<FourVector> {
        (0..=self.intervals())
            .map(|i| self.velocity(i).expect("index in range"))
            .collect()
    }

    /// Local cubic Lagrange interpolation through the four nearest nodes.
    pub fn interpolate(&self, c: f64) -> FourVector {
        let n = self.intervals();
        let h = self.step();
        let s = (c / h).clamp(0.0, n as f64);
        let mut base = (s.floor() as usize).saturating_sub(1);
        base = base.min(n.saturating_sub(3));
        let nodes: [usize; 4] = std::array::from_fn(|k| (base + k).min(n));
        let mut out = FourVector::ZERO;
        for (j, &nj) in nodes.iter().enumerate() {
            let mut w = 1.0;
            for (k, &nk) in nodes.iter().enumerate() {
                if k != j {
                    w *= (s - nk as f64) / (nj as f64 - nk as f64);
                }
            }
            out += self.points[nj] * w;
        }
        out
    }

    /// CSV with header `c,x0,x1,x2,x3`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("c,x0,x1,x2,x3\n");
        for (c, p) in self.grid().iter().zip(&self.points) {
            let [t, x, y, z] = p.0;
            let _ = writeln!(out, "{c:.16e},{t:.16e},{x:.16e},{y:.16e},{z:.16e}");
        }
        out
    }
}

/// Positive lapse samples on a uniform grid over `tau in [0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LapseProfile {
    samples: Vec<f64>,
}

impl LapseProfile {
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::BadGrid("lapse needs at least two samples".into()));
        }
        if let Some((index, &value)) = samples.iter().enumerate().find(|(_, &x)| !(x > 0.0)) {
            return Err(Error::NonPositiveLapse { index, value });
        }
        Ok(LapseProfile { samples })
    }

    pub fn from_fn(points: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let n = points.max(2) - 1;
        LapseProfile::new((0..=n).map(|j| f(j as f64 / n as f64)).collect())
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }
}

/// Invariant parameter `c(tau_j)` on the lapse grid together with `C = c(1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Reparametrization {
    pub c_grid: Vec<f64>,
    pub duration: f64,
}

/// Cumulative trapezoid integral of the lapse.
pub fn reparametrize(lapse: &LapseProfile) -> Reparametrization {
    let step = 1.0 / (lapse.samples.len() - 1) as f64;
    let c_grid = quadrature::cumulative_trapezoid(&lapse.samples, step);
    let duration = *c_grid.last().expect("non-empty grid");
    Reparametrization { c_grid, duration }
}
