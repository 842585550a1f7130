//! Stationary points of the action eigenvalue over the initial data and the
//! invariant duration.
//!
//! Substituting the stationary `sigma1_0` into the closed form eliminates
//! `sigma2_0` entirely and leaves `lambda(C) = (b - a)^2 / (4C) + m^2 C`,
//! which is stationary at `C = ±sqrt((b - a)^2) / (2m)` with value
//! `±m sqrt((b - a)^2)`. The point is a saddle (concave along `sigma1_0`,
//! convex along `C` on the `+` branch), so [`StationarySearch`] solves
//! `grad lambda = 0` by Newton's method instead of descending.

use std::fmt::Write as _;

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::eigenvalue::lambda_closed_form;
use crate::error::{Error, Result};
use crate::minkowski::{interval_sq, Branch, FourVector, IntervalClass};
use crate::phase_flow::FlowInitialData;

/// Default `sigma2_0` values re-searched to expose the degenerate direction.
pub const DEFAULT_SIGMA2_SCAN: [f64; 5] = [-0.3, 0.0, 0.5, 1.0, 2.0];

const GRADIENT_STEP: f64 = 1e-3;
const HESSIAN_STEP: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 30;
/// Scan entries need `D(C*)` at least this large.
const SCAN_MARGIN: f64 = 1e-6;
/// Largest factor by which one Newton step may change `C`.
const MAX_DURATION_FACTOR: f64 = 2.0;

type Point = SVector<f64, 5>;
type Hessian = SMatrix<f64, 5, 5>;

/// `[b - a D] / (2C)` with `D = 1 + 2 sigma2_0 C`.
pub fn optimal_sigma1(
    sigma2_0: f64,
    a: &FourVector,
    b: &FourVector,
    duration: f64,
) -> Result<FourVector> {
    if duration == 0.0 {
        return Err(Error::ZeroDuration);
    }
    let init = FlowInitialData::new(FourVector::ZERO, sigma2_0);
    init.check_admissible(duration)?;
    let d = init.denominator(duration);
    Ok((*b - *a * d) / (2.0 * duration))
}

fn timelike_interval(a: &FourVector, b: &FourVector) -> Result<f64> {
    let d2 = interval_sq(a, b);
    match IntervalClass::of(d2) {
        IntervalClass::Timelike => Ok(d2),
        IntervalClass::Null => Err(Error::NullSeparation),
        IntervalClass::Spacelike => Err(Error::SpacelikeSeparation(d2)),
    }
}

/// `±sqrt((b - a)^2) / (2m)`.
pub fn optimal_c(a: &FourVector, b: &FourVector, m: f64, branch: Branch) -> Result<f64> {
    let d2 = timelike_interval(a, b)?;
    if !(m > 0.0) {
        return Err(Error::ZeroMass);
    }
    Ok(branch.sign() * d2.sqrt() / (2.0 * m))
}

/// `±m sqrt((b - a)^2)`.
pub fn stationary_lambda(a: &FourVector, b: &FourVector, m: f64, branch: Branch) -> Result<f64> {
    let d2 = timelike_interval(a, b)?;
    if !(m > 0.0) {
        return Err(Error::ZeroMass);
    }
    Ok(branch.sign() * m * d2.sqrt())
}

/// `(b - a)^2 / (4C) + m^2 C`.
pub fn reduced_lambda(duration: f64, a: &FourVector, b: &FourVector, m: f64) -> Result<f64> {
    if duration == 0.0 {
        return Err(Error::ZeroDuration);
    }
    Ok(interval_sq(a, b) / (4.0 * duration) + m * m * duration)
}

/// Largest `|lambda(sigma2_0) - lambda(0)|` over `grid` after substituting the
/// stationary `sigma1_0` at fixed `duration`.
pub fn degeneracy_spread(
    a: &FourVector,
    b: &FourVector,
    m: f64,
    duration: f64,
    grid: &[f64],
) -> Result<f64> {
    let lambda_at = |s2: f64| -> Result<f64> {
        let s1 = optimal_sigma1(s2, a, b, duration)?;
        lambda_closed_form(&FlowInitialData::new(s1, s2), a, b, m, duration)
    };
    let reference = lambda_at(0.0)?;
    grid.iter().try_fold(0.0f64, |worst, &s2| {
        Ok(worst.max((lambda_at(s2)? - reference).abs()))
    })
}

/// One entry of the degeneracy scan.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sigma2Sample {
    pub sigma2_0: f64,
    pub lambda: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    pub sigma1_star: FourVector,
    #[serde(rename = "C_star")]
    pub c_star: f64,
    pub branch: Branch,
    pub lambda_star: f64,
    pub gradient_norm: f64,
    pub sigma2_0: f64,
    pub sigma2_scan: Vec<Sigma2Sample>,
    pub iterations: usize,
    pub converged: bool,
    pub tolerance: f64,
}

impl StationarityReport {
    /// Largest deviation of the scanned eigenvalues from `lambda_star`.
    pub fn scan_spread(&self) -> f64 {
        self.sigma2_scan
            .iter()
            .map(|s| (s.lambda - self.lambda_star).abs())
            .fold(0.0, f64::max)
    }

    /// CSV with header `sigma2_0,lambda`.
    pub fn scan_csv(&self) -> String {
        let mut out = String::from("sigma2_0,lambda\n");
        for s in &self.sigma2_scan {
            let _ = writeln!(out, "{:.16e},{:.16e}", s.sigma2_0, s.lambda);
        }
        out
    }
}

/// The closed-form eigenvalue as a function of `(sigma1_0, C)` at fixed
/// endpoints, mass and `sigma2_0`.
#[derive(Clone, Copy, Debug)]
pub struct LambdaSurface {
    pub a: FourVector,
    pub b: FourVector,
    pub m: f64,
    pub sigma2_0: f64,
}

impl LambdaSurface {
    fn split(x: &Point) -> (FourVector, f64) {
        (FourVector([x[0], x[1], x[2], x[3]]), x[4])
    }

    pub fn value(&self, sigma1_0: &FourVector, duration: f64) -> Result<f64> {
        lambda_closed_form(
            &FlowInitialData::new(*sigma1_0, self.sigma2_0),
            &self.a,
            &self.b,
            self.m,
            duration,
        )
    }

    fn eval(&self, x: &Point) -> Result<f64> {
        let (s1, c) = Self::split(x);
        self.value(&s1, c)
    }

    fn hessian_steps(&self, x: &Point) -> Point {
        let mut h = x.map(|v| HESSIAN_STEP * (1.0 + v.abs()));
        h[4] = h[4].min(HESSIAN_STEP * self.duration_scale(x[4]));
        h
    }

    /// Distance from `C` to the nearer of `C = 0` and the pole `D = 0`.
    fn duration_scale(&self, duration: f64) -> f64 {
        let d = 1.0 + 2.0 * self.sigma2_0 * duration;
        if self.sigma2_0 == 0.0 {
            duration.abs()
        } else {
            duration.abs().min((d / (2.0 * self.sigma2_0)).abs())
        }
    }

    /// Five-point central differences. Along the duration the step is
    /// relative to [`Self::duration_scale`].
    fn gradient(&self, x: &Point) -> Result<Point> {
        let mut g = Point::zeros();
        for k in 0..5 {
            let h = if k == 4 {
                GRADIENT_STEP * self.duration_scale(x[4])
            } else {
                GRADIENT_STEP * (1.0 + x[k].abs())
            };
            let at = |s: f64| -> Result<f64> {
                let mut p = *x;
                p[k] += s * h;
                self.eval(&p)
            };
            g[k] = (8.0 * (at(1.0)? - at(-1.0)?) - (at(2.0)? - at(-2.0)?)) / (12.0 * h);
        }
        Ok(g)
    }

    fn hessian(&self, x: &Point) -> Result<Hessian> {
        let h = self.hessian_steps(x);
        let f0 = self.eval(x)?;
        let mut hess = Hessian::zeros();
        let shifted = |i: usize, si: f64, j: usize, sj: f64| -> Result<f64> {
            let mut p = *x;
            p[i] += si * h[i];
            p[j] += sj * h[j];
            self.eval(&p)
        };
        for i in 0..5 {
            let mut up = *x;
            let mut down = *x;
            up[i] += h[i];
            down[i] -= h[i];
            hess[(i, i)] = (self.eval(&up)? - 2.0 * f0 + self.eval(&down)?) / (h[i] * h[i]);
            for j in (i + 1)..5 {
                let v = (shifted(i, 1.0, j, 1.0)?
                    - shifted(i, 1.0, j, -1.0)?
                    - shifted(i, -1.0, j, 1.0)?
                    + shifted(i, -1.0, j, -1.0)?)
                    / (4.0 * h[i] * h[j]);
                hess[(i, j)] = v;
                hess[(j, i)] = v;
            }
        }
        Ok(hess)
    }

    /// Central-difference gradient in `(sigma1_0, C)`.
    pub fn gradient_at(&self, sigma1_0: &FourVector, duration: f64) -> Result<[f64; 5]> {
        let g = self.gradient(&pack(sigma1_0, duration))?;
        Ok(std::array::from_fn(|k| g[k]))
    }

    /// Central-difference Hessian in `(sigma1_0, C)`.
    pub fn hessian_at(&self, sigma1_0: &FourVector, duration: f64) -> Result<[[f64; 5]; 5]> {
        let h = self.hessian(&pack(sigma1_0, duration))?;
        Ok(std::array::from_fn(|i| std::array::from_fn(|j| h[(i, j)])))
    }
}

fn pack(sigma1_0: &FourVector, duration: f64) -> Point {
    let [t, x, y, z] = sigma1_0.0;
    Point::new(t, x, y, z, duration)
}

/// Newton search for `grad lambda = 0` over `(sigma1_0, C)` at fixed
/// `sigma2_0`, followed by an optional re-search over other `sigma2_0`.
#[derive(Clone, Debug)]
pub struct StationarySearch {
    a: FourVector,
    b: FourVector,
    m: f64,
    tolerance: f64,
    max_iterations: usize,
    scan: Vec<f64>,
}

impl StationarySearch {
    pub fn new(a: FourVector, b: FourVector, m: f64) -> Self {
        StationarySearch {
            a,
            b,
            m,
            tolerance: 1e-10,
            max_iterations: 100,
            scan: Vec::new(),
        }
    }

    pub fn tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn max_iterations(mut self, max_iterations: usize) -> Self {
        self.max_iterations = max_iterations;
        self
    }

    pub fn scan(mut self, sigma2_values: Vec<f64>) -> Self {
        self.scan = sigma2_values;
        self
    }

    /// Runs the search from `C = guess_c`, starting `sigma1_0` at the
    /// maximizer along the `sigma1_0` block for that `C`. The sign of
    /// `guess_c` selects the branch and every iterate keeps that sign.
    pub fn run(&self, sigma2_0: f64, guess_c: f64) -> Result<StationarityReport> {
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tolerance must be > 0, got {}",
                self.tolerance
            )));
        }
        timelike_interval(&self.a, &self.b)?;
        let mut report = self.solve(sigma2_0, guess_c)?;

        for &s2 in &self.scan {
            let init = FlowInitialData::new(FourVector::ZERO, s2);
            // a stationary point on the pole is not a stationary point of this sigma2_0
            if init.check_admissible(report.c_star).is_err()
                || init.denominator(report.c_star) < SCAN_MARGIN
            {
                continue;
            }
            let start = if init.check_admissible(guess_c).is_ok() {
                guess_c
            } else {
                report.c_star
            };
            let rerun = self.solve(s2, start)?;
            report.sigma2_scan.push(Sigma2Sample {
                sigma2_0: s2,
                lambda: rerun.lambda_star,
            });
        }
        Ok(report)
    }

    fn solve(&self, sigma2_0: f64, guess_c: f64) -> Result<StationarityReport> {
        if guess_c == 0.0 {
            return Err(Error::ZeroDuration);
        }
        let surface = LambdaSurface {
            a: self.a,
            b: self.b,
            m: self.m,
            sigma2_0,
        };
        let branch = Branch::of(guess_c);
        let init = FlowInitialData::new(FourVector::ZERO, sigma2_0);
        init.check_admissible(guess_c)?;
        let admissible = |x: &Point| x[4] * branch.sign() > 0.0 && init.denominator(x[4]) > 0.0;

        // lambda is quadratic in sigma1_0 at fixed C, so one Newton step on
        // that block alone gives a nondegenerate starting point
        let mut x = pack(&FourVector::ZERO, guess_c);
        let g0 = surface.gradient(&x)?;
        let h0 = surface.hessian(&x)?;
        let block = h0.fixed_view::<4, 4>(0, 0).into_owned();
        if let Some(d) = block.lu().solve(&(-g0.fixed_rows::<4>(0).into_owned())) {
            for k in 0..4 {
                x[k] += d[k];
            }
        }
        let mut grad = surface.gradient(&x)?;
        let mut iterations = 0;
        while grad.norm() > self.tolerance {
            if iterations == self.max_iterations {
                return Err(Error::NoConvergence {
                    iterations,
                    gradient_norm: grad.norm(),
                });
            }
            iterations += 1;
            let hess = surface.hessian(&x)?;
            let step = hess.lu().solve(&(-grad)).ok_or(Error::NoConvergence {
                iterations,
                gradient_norm: grad.norm(),
            })?;
            let ratio = 1.0 + step[4] / x[4];
            let capped = ratio.clamp(1.0 / MAX_DURATION_FACTOR, MAX_DURATION_FACTOR);
            let mut scale = if ratio == capped {
                1.0
            } else {
                (capped - 1.0) / (ratio - 1.0)
            };
            let mut candidate = x + step * scale;
            let mut backtracks = 0;
            while !admissible(&candidate) {
                if backtracks == MAX_BACKTRACKS {
                    return Err(Error::FlowSingularity {
                        c_star: -1.0 / (2.0 * sigma2_0),
                    });
                }
                backtracks += 1;
                scale *= 0.5;
                candidate = x + step * scale;
            }
            x = candidate;
            grad = surface.gradient(&x)?;
        }

        let (sigma1_star, c_star) = LambdaSurface::split(&x);
        Ok(StationarityReport {
            sigma1_star,
            c_star,
            branch,
            lambda_star: surface.eval(&x)?,
            gradient_norm: grad.norm(),
            sigma2_0,
            sigma2_scan: Vec::new(),
            iterations,
            converged: true,
            tolerance: self.tolerance,
        })
    }
}

/// Newton search with the default `sigma2_0` scan.
pub fn numeric_stationary_search(
    a: &FourVector,
    b: &FourVector,
    m: f64,
    sigma2_0: f64,
    guess_c: f64,
    tol: f64,
) -> Result<StationarityReport> {
    StationarySearch::new(*a, *b, m)
        .tolerance(tol)
        .scan(DEFAULT_SIGMA2_SCAN.to_vec())
        .run(sigma2_0, guess_c)
}
