//! The action eigenvalue `lambda` and the reality condition.
//!
//! Writing the wave functional as `Psi = exp((i / hbar) sigma + r)` and
//! applying the action operator
//!
//! ```text
//! I = int_0^C [ (hbar / i) xdot^mu delta/delta x^mu + hbar^2 (delta/delta x^mu)^2 ] dc + m^2 C
//! ```
//!
//! gives `I Psi / Psi = lambda - i hbar R` where
//!
//! ```text
//! lambda = int [ xdot . sigma' - sigma' . sigma' + hbar^2 (r' . r' + r'') ] dc + m^2 C
//! R      = int [ xdot . r' - 2 sigma' . r' - sigma'' ] dc
//! ```
//!
//! and primes are functional derivatives. For the quadratic phase
//! `sigma = int [sigma1 . x + sigma2 x^2 / 2] dc` integration by parts turns
//! the classical part of `lambda` into a boundary bracket minus
//! `int sigma1 . sigma1 dc`, and the flow of [`crate::phase_flow`] removes
//! every interior dependence. Three routes to `lambda` are provided:
//!
//! * [`lambda_closed_form`] in terms of the initial data,
//! * [`lambda_boundary_form`] from sampled coefficients by quadrature,
//! * [`lambda_lattice`] directly from the integrand on a world line.
//!
//! On the lattice a functional derivative at node `i` becomes
//! `(1 / dc) d/dx_i`, so coincident second derivatives pick up
//! `delta(0) = 1 / dc` and `sigma'' = 4 sigma2 / dc` (trace over the four
//! components).

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::minkowski::FourVector;
use crate::phase_flow::{check_same_grid, FlowCoefficients, FlowInitialData};
use crate::quadrature::{self, CompensatedSum};
use crate::worldline::{check_grid, Worldline};

/// Default probe step of the finite-difference operator oracle.
pub const DEFAULT_PROBE_STEP: f64 = 1e-4;

/// Below this modulus the wave functional is treated as underflowed.
pub const UNDERFLOW_MODULUS: f64 = 1e-300;

const METRIC: [f64; 4] = [1.0, -1.0, -1.0, -1.0];

/// Everything that defines the wave functional.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveParameters {
    pub flow_init: FlowInitialData,
    /// Linear coefficient of the real part `r`, held constant along `c`.
    pub r1_0: FourVector,
    /// Quadratic coefficient of the real part `r`, held constant along `c`.
    pub r2_0: f64,
    pub m: f64,
    pub hbar_tilde: f64,
    pub duration: f64,
}

impl WaveParameters {
    /// Phase-only parameters (`r = 0`).
    pub fn phase_only(flow_init: FlowInitialData, m: f64, hbar_tilde: f64, duration: f64) -> Self {
        WaveParameters {
            flow_init,
            r1_0: FourVector::ZERO,
            r2_0: 0.0,
            m,
            hbar_tilde,
            duration,
        }
    }

    pub fn with_real_part(mut self, r1_0: FourVector, r2_0: f64) -> Self {
        self.r1_0 = r1_0;
        self.r2_0 = r2_0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "mass must be >= 0, got {}",
                self.m
            )));
        }
        if !(self.hbar_tilde > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "hbar_tilde must be > 0, got {}",
                self.hbar_tilde
            )));
        }
        if !(self.duration > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "duration must be > 0, got {}",
                self.duration
            )));
        }
        Ok(())
    }
}

/// Samples of the quadratic real-part coefficients `r1(c)`, `r2(c)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealPartCoefficients {
    pub duration: f64,
    pub r1: Vec<FourVector>,
    pub r2: Vec<f64>,
}

impl RealPartCoefficients {
    pub fn constant(r1_0: FourVector, r2_0: f64, duration: f64, intervals: usize) -> Result<Self> {
        check_grid(duration, intervals)?;
        Ok(RealPartCoefficients {
            duration,
            r1: vec![r1_0; intervals + 1],
            r2: vec![r2_0; intervals + 1],
        })
    }

    pub fn zero(duration: f64, intervals: usize) -> Result<Self> {
        RealPartCoefficients::constant(FourVector::ZERO, 0.0, duration, intervals)
    }

    pub fn intervals(&self) -> usize {
        self.r2.len() - 1
    }
}

/// Boundary bracket, quadrature term and mass term of `lambda`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaBreakdown {
    pub boundary_term: f64,
    pub quadrature_term: f64,
    pub mass_term: f64,
    pub total: f64,
}

impl LambdaBreakdown {
    pub fn new(boundary_term: f64, quadrature_term: f64, mass_term: f64) -> Self {
        LambdaBreakdown {
            boundary_term,
            quadrature_term,
            mass_term,
            total: boundary_term + quadrature_term + mass_term,
        }
    }

    /// Sum of the magnitudes of the three terms; the natural scale for
    /// relative comparisons when the terms cancel.
    pub fn magnitude(&self) -> f64 {
        self.boundary_term.abs() + self.quadrature_term.abs() + self.mass_term.abs()
    }
}

/// Closed form of `lambda` in the initial data, split into its terms.
///
/// `duration` may be negative; only `D = 1 + 2 sigma2_0 C > 0` is required.
pub fn closed_form_breakdown(
    init: &FlowInitialData,
    a: &FourVector,
    b: &FourVector,
    m: f64,
    duration: f64,
) -> Result<LambdaBreakdown> {
    init.check_admissible(duration)?;
    let d = init.denominator(duration);
    let s1 = &init.sigma1_0;
    let boundary = s1.dot(&(*b / d - *a)) + 0.5 * init.sigma2_0 * (b.square() / d - a.square());
    let quadrature = -s1.square() * duration / d;
    Ok(LambdaBreakdown::new(boundary, quadrature, m * m * duration))
}

/// `sigma1_0 . (b/D - a) + (sigma2_0/2)(b^2/D - a^2) - sigma1_0^2 C / D + m^2 C`.
pub fn lambda_closed_form(
    init: &FlowInitialData,
    a: &FourVector,
    b: &FourVector,
    m: f64,
    duration: f64,
) -> Result<f64> {
    closed_form_breakdown(init, a, b, m, duration).map(|l| l.total)
}

/// Boundary bracket `[sigma1 . x + sigma2 x^2 / 2]` from `x(0) = a` to
/// `x(C) = b`, minus the trapezoid integral of `sigma1 . sigma1`, plus `m^2 C`.
pub fn lambda_boundary_form(
    flow: &FlowCoefficients,
    a: &FourVector,
    b: &FourVector,
    m: f64,
) -> LambdaBreakdown {
    let n = flow.intervals();
    let bracket = |s1: &FourVector, s2: f64, x: &FourVector| s1.dot(x) + 0.5 * s2 * x.square();
    let boundary =
        bracket(&flow.sigma1[n], flow.sigma2[n], b) - bracket(&flow.sigma1[0], flow.sigma2[0], a);
    let squares: Vec<f64> = flow.sigma1.iter().map(|s| s.square()).collect();
    let quadrature = -quadrature::trapezoid(&squares, flow.step());
    LambdaBreakdown::new(boundary, quadrature, m * m * flow.duration)
}

/// `delta sigma / delta x` at every node: `sigma1 + sigma2 x`.
fn phase_gradient(flow: &FlowCoefficients, w: &Worldline) -> Vec<FourVector> {
    flow.sigma1
        .iter()
        .zip(&flow.sigma2)
        .zip(w.points())
        .map(|((s1, s2), x)| *s1 + *x * *s2)
        .collect()
}

fn real_gradient(rflow: &RealPartCoefficients, w: &Worldline) -> Vec<FourVector> {
    rflow
        .r1
        .iter()
        .zip(&rflow.r2)
        .zip(w.points())
        .map(|((r1, r2), x)| *r1 + *x * *r2)
        .collect()
}

fn check_real_grid(rflow: &RealPartCoefficients, w: &Worldline) -> Result<()> {
    check_same_grid(rflow.duration, rflow.intervals(), w)
}

/// Trapezoid quadrature of `xdot . sigma' - sigma' . sigma'` along `w`, plus `m^2 C`.
pub fn lambda_lattice(w: &Worldline, flow: &FlowCoefficients, m: f64) -> Result<f64> {
    flow.check_matches(w)?;
    let grad = phase_gradient(flow, w);
    let integrand: Vec<f64> = w
        .velocities()
        .iter()
        .zip(&grad)
        .map(|(v, s)| v.dot(s) - s.square())
        .collect();
    Ok(quadrature::trapezoid(&integrand, w.step()) + m * m * w.duration())
}

/// `hbar^2 int [r' . r' + r''] dc` with the lattice rule `r'' = 4 r2 / dc`.
pub fn real_part_term(w: &Worldline, rflow: &RealPartCoefficients, hbar_tilde: f64) -> Result<f64> {
    check_real_grid(rflow, w)?;
    let h = w.step();
    let integrand: Vec<f64> = real_gradient(rflow, w)
        .iter()
        .zip(&rflow.r2)
        .map(|(rp, r2)| rp.square() + 4.0 * r2 / h)
        .collect();
    Ok(hbar_tilde * hbar_tilde * quadrature::trapezoid(&integrand, h))
}

/// The full real part of `I Psi / Psi`, including the `r` contributions.
pub fn lambda_lattice_with_real_part(
    w: &Worldline,
    flow: &FlowCoefficients,
    rflow: &RealPartCoefficients,
    m: f64,
    hbar_tilde: f64,
) -> Result<f64> {
    Ok(lambda_lattice(w, flow, m)? + real_part_term(w, rflow, hbar_tilde)?)
}

/// Reality integral `int [xdot . r' - 2 sigma' . r' - sigma''] dc` with
/// `sigma'' = 4 sigma2 / dc`. Zero means `lambda` is real.
pub fn reality_residual(
    flow: &FlowCoefficients,
    rflow: &RealPartCoefficients,
    w: &Worldline,
) -> Result<f64> {
    flow.check_matches(w)?;
    check_real_grid(rflow, w)?;
    let h = w.step();
    let sg = phase_gradient(flow, w);
    let rg = real_gradient(rflow, w);
    let integrand: Vec<f64> = w
        .velocities()
        .iter()
        .zip(&sg)
        .zip(&rg)
        .zip(&flow.sigma2)
        .map(|(((v, s), r), s2)| v.dot(r) - 2.0 * s.dot(r) - 4.0 * s2 / h)
        .collect();
    Ok(quadrature::trapezoid(&integrand, h))
}

/// Result of applying the lattice action operator to the wave functional.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorProbe {
    /// `(I Psi) / Psi` from finite differences of `Psi`.
    pub operator_value: Complex64,
    /// `lambda - i hbar R` from the quadrature formulas.
    pub predicted: Complex64,
    pub residual: Complex64,
}

impl OperatorProbe {
    pub fn relative_residual(&self) -> f64 {
        self.residual.norm() / self.predicted.norm().max(f64::MIN_POSITIVE)
    }
}

/// `exp(z) - 1` without cancellation for small `|z|`.
fn expm1(z: Complex64) -> Complex64 {
    let em1 = z.re.exp_m1();
    let (sin, cos) = z.im.sin_cos();
    let half = (0.5 * z.im).sin();
    Complex64::new(em1 * cos - 2.0 * half * half, (em1 + 1.0) * sin)
}

/// Lattice wave functional `log Psi = sum_i dc [ (i/hbar) sigma_i(x_i) + r_i(x_i) ]`
/// with one cell of width `dc` per node.
struct LatticeWave<'a> {
    flow: &'a FlowCoefficients,
    rflow: &'a RealPartCoefficients,
    hbar: f64,
    step: f64,
}

impl LatticeWave<'_> {
    fn node_exponent(&self, i: usize, x: &FourVector) -> Complex64 {
        let sigma = self.flow.sigma1[i].dot(x) + 0.5 * self.flow.sigma2[i] * x.square();
        let r = self.rflow.r1[i].dot(x) + 0.5 * self.rflow.r2[i] * x.square();
        Complex64::new(r, sigma / self.hbar) * self.step
    }

    fn log_modulus(&self, points: &[FourVector]) -> f64 {
        points
            .iter()
            .enumerate()
            .map(|(i, x)| self.node_exponent(i, x).re)
            .collect::<CompensatedSum>()
            .value()
    }
}

/// Applies the lattice action operator to `Psi` by central finite differences
/// with step `probe_step` in every coordinate of every node, and compares with
/// `lambda - i hbar R` from the quadrature formulas.
pub fn operator_probe(
    params: &WaveParameters,
    w: &Worldline,
    probe_step: f64,
) -> Result<OperatorProbe> {
    params.validate()?;
    if !(probe_step > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "probe step must be > 0, got {probe_step}"
        )));
    }
    check_same_grid(params.duration, w.intervals(), w)?;
    let n = w.intervals();
    let flow = FlowCoefficients::closed_form(params.flow_init, params.duration, n)?;
    let rflow = RealPartCoefficients::constant(params.r1_0, params.r2_0, params.duration, n)?;
    let step = w.step();
    let hbar = params.hbar_tilde;
    let wave = LatticeWave {
        flow: &flow,
        rflow: &rflow,
        hbar,
        step,
    };

    let log_modulus = wave.log_modulus(w.points());
    if log_modulus < UNDERFLOW_MODULUS.ln() {
        return Err(Error::NumericalUnderflow { log_modulus });
    }

    let velocities = w.velocities();
    let h = probe_step;
    let node_terms: Vec<Complex64> = (0..=n)
        .into_par_iter()
        .map(|i| {
            let x = w.points()[i];
            let base = wave.node_exponent(i, &x);
            let mut transport = Complex64::new(0.0, 0.0);
            let mut laplacian = Complex64::new(0.0, 0.0);
            for mu in 0..4 {
                let e = FourVector::basis(mu) * h;
                let up = expm1(wave.node_exponent(i, &(x + e)) - base);
                let down = expm1(wave.node_exponent(i, &(x - e)) - base);
                // (1/Psi) dPsi/dx^mu and (1/Psi) d^2Psi/(dx^mu)^2
                let first = (up - down) / (2.0 * h);
                let second = (up + down) / (h * h);
                transport += first * velocities[i][mu];
                laplacian += second * METRIC[mu];
            }
            // (hbar / i) = -i hbar
            let term = Complex64::new(0.0, -hbar) * transport / step
                + laplacian * (hbar * hbar / (step * step));
            term * (quadrature::weight(i, n) * step)
        })
        .collect();

    let mut re = CompensatedSum::default();
    let mut im = CompensatedSum::default();
    for t in &node_terms {
        re.add(t.re);
        im.add(t.im);
    }
    let mass = params.m * params.m * params.duration;
    let operator_value = Complex64::new(re.value() + mass, im.value());

    let lambda = lambda_lattice_with_real_part(w, &flow, &rflow, params.m, hbar)?;
    let reality = reality_residual(&flow, &rflow, w)?;
    let predicted = Complex64::new(lambda, -hbar * reality);
    Ok(OperatorProbe {
        operator_value,
        predicted,
        residual: operator_value - predicted,
    })
}

/// `(I Psi) / Psi - (lambda - i hbar R)` at the default probe step.
pub fn operator_residual(params: &WaveParameters, w: &Worldline) -> Result<Complex64> {
    operator_probe(params, w, DEFAULT_PROBE_STEP).map(|p| p.residual)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_flow::integrate_flow;

    fn t(x: f64) -> FourVector {
        FourVector::new(x, 0.0, 0.0, 0.0)
    }

    #[test]
    fn closed_form_examples() {
        let init = FlowInitialData::new(FourVector::ZERO, 0.0);
        let l = lambda_closed_form(
            &init,
            &FourVector::new(0.3, 1.0, 0.0, 2.0),
            &t(4.0),
            1.0,
            2.0,
        )
        .unwrap();
        assert_eq!(l, 2.0);
        let init = FlowInitialData::new(t(1.0), 0.0);
        let l = lambda_closed_form(&init, &FourVector::ZERO, &t(1.0), 1.0, 0.5).unwrap();
        assert!((l - 1.0).abs() < 1e-15);
        let err = lambda_closed_form(
            &FlowInitialData::new(t(1.0), -0.5),
            &FourVector::ZERO,
            &t(1.0),
            1.0,
            1.0,
        );
        assert!(matches!(err, Err(Error::FlowSingularity { .. })));
    }

    #[test]
    fn closed_form_generic_against_antiderivative() {
        // int_0^C sigma1^2 dc = sigma1_0^2 C / D, assembled by hand
        let s1 = FourVector::new(0.3, 0.1, 0.0, 0.0);
        let s2 = 0.4;
        let b = FourVector::new(2.0, 0.5, 0.0, 0.0);
        let d: f64 = 1.8;
        let expected =
            (0.3 * 2.0 - 0.1 * 0.5) / d + 0.5 * s2 * (4.0 - 0.25) / d - (0.09 - 0.01) / d + 1.0;
        let got = lambda_closed_form(
            &FlowInitialData::new(s1, s2),
            &FourVector::ZERO,
            &b,
            1.0,
            1.0,
        )
        .unwrap();
        assert!((got - expected).abs() < 1e-14, "{got} vs {expected}");
    }

    #[test]
    fn boundary_form_examples() {
        let a = FourVector::new(0.2, 0.1, 0.0, 0.3);
        let b = FourVector::new(1.5, 0.4, -0.2, 0.0);
        let flow =
            FlowCoefficients::closed_form(FlowInitialData::new(FourVector::ZERO, 0.3), 1.0, 100)
                .unwrap();
        let l = lambda_boundary_form(&flow, &a, &b, 2.0);
        assert_eq!(l.quadrature_term, 0.0);
        let expected_bracket = 0.5 * (0.3 / 1.6) * b.square() - 0.5 * 0.3 * a.square();
        assert!((l.boundary_term - expected_bracket).abs() < 1e-15);
        assert_eq!(l.mass_term, 4.0);

        let flow =
            FlowCoefficients::closed_form(FlowInitialData::new(t(1.0), 0.0), 1.0, 10).unwrap();
        let l = lambda_boundary_form(&flow, &a, &b, 1.0);
        assert!((l.quadrature_term + 1.0).abs() < 1e-15);
    }

    #[test]
    fn boundary_form_generic_matches_closed_form() {
        let init = FlowInitialData::new(FourVector::new(0.3, 0.1, 0.0, 0.0), 0.4);
        let b = FourVector::new(2.0, 0.5, 0.0, 0.0);
        let exact = lambda_closed_form(&init, &FourVector::ZERO, &b, 1.0, 1.0).unwrap();
        let flow = FlowCoefficients::closed_form(init, 1.0, 10_000).unwrap();
        let l = lambda_boundary_form(&flow, &FourVector::ZERO, &b, 1.0);
        assert!((l.total - exact).abs() < 1e-8);
        let flow = FlowCoefficients::closed_form(init, 1.0, 1_000_000).unwrap();
        let l = lambda_boundary_form(&flow, &FourVector::ZERO, &b, 1.0);
        assert!((l.total - exact).abs() < 1e-12, "{}", l.total - exact);
    }

    #[test]
    fn breakdown_is_additive() {
        let l = LambdaBreakdown::new(0.1, -0.7, 3.3);
        assert_eq!(l.total, 0.1 + -0.7 + 3.3);
        let json = serde_json::to_value(l).unwrap();
        for key in ["boundary_term", "quadrature_term", "mass_term", "total"] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
    }

    #[test]
    fn lattice_examples() {
        let w = Worldline::straight_line(FourVector::ZERO, t(1.0), 0.5, 100).unwrap();
        let zero = FlowCoefficients::closed_form(FlowInitialData::default(), 0.5, 100).unwrap();
        assert_eq!(lambda_lattice(&w, &zero, 1.0).unwrap(), 0.5);

        let w = Worldline::straight_line(FourVector::ZERO, t(1.0), 0.5, 10_000).unwrap();
        let flow =
            FlowCoefficients::closed_form(FlowInitialData::new(t(1.0), 0.0), 0.5, 10_000).unwrap();
        let l = lambda_lattice(&w, &flow, 1.0).unwrap();
        assert!((l - 1.0).abs() < 1e-6);
        let perturbed = w.perturb_interior(0.3, 11);
        let lp = lambda_lattice(&perturbed, &flow, 1.0).unwrap();
        assert!((lp - l).abs() < 1e-6, "{lp} vs {l}");
    }

    #[test]
    fn lattice_rejects_mismatched_grids() {
        let w = Worldline::straight_line(FourVector::ZERO, t(1.0), 1.0, 10).unwrap();
        let flow = FlowCoefficients::closed_form(FlowInitialData::default(), 1.0, 12).unwrap();
        assert!(matches!(
            lambda_lattice(&w, &flow, 1.0),
            Err(Error::GridMismatch(_))
        ));
        let flow = FlowCoefficients::closed_form(FlowInitialData::default(), 2.0, 10).unwrap();
        assert!(matches!(
            lambda_lattice(&w, &flow, 1.0),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn lattice_agrees_with_rk4_flow() {
        let init = FlowInitialData::new(FourVector::new(0.4, -0.1, 0.2, 0.0), 0.7);
        let a = FourVector::new(0.0, 0.1, 0.0, 0.0);
        let b = FourVector::new(1.5, 0.3, 0.2, -0.1);
        let flow = integrate_flow(init, 0.8, 4000).unwrap();
        let w = Worldline::straight_line(a, b, 0.8, 4000).unwrap();
        let exact = lambda_closed_form(&init, &a, &b, 1.3, 0.8).unwrap();
        assert!((lambda_lattice(&w, &flow, 1.3).unwrap() - exact).abs() < 1e-6);
    }

    #[test]
    fn reality_residual_examples() {
        let w = Worldline::straight_line(FourVector::ZERO, t(1.0), 1.0, 100).unwrap();
        let r0 = RealPartCoefficients::zero(1.0, 100).unwrap();
        let zero =
            FlowCoefficients::closed_form(FlowInitialData::new(t(0.7), 0.0), 1.0, 100).unwrap();
        assert_eq!(reality_residual(&zero, &r0, &w).unwrap(), 0.0);

        let flow =
            FlowCoefficients::closed_form(FlowInitialData::new(FourVector::ZERO, 0.5), 1.0, 100)
                .unwrap();
        let res = reality_residual(&flow, &r0, &w).unwrap();
        let expected = -(4.0 / 0.01) * 0.5 * 2f64.ln();
        assert!((res - expected).abs() < 1e-2, "{res} vs {expected}");

        let b = FourVector::new(1.2, 0.3, 0.0, 0.0);
        let w = Worldline::straight_line(FourVector::ZERO, b, 1.0, 100).unwrap();
        let r1 = RealPartCoefficients::constant(t(0.1), 0.0, 1.0, 100).unwrap();
        let none = FlowCoefficients::closed_form(FlowInitialData::default(), 1.0, 100).unwrap();
        let res = reality_residual(&none, &r1, &w).unwrap();
        assert!((res - t(0.1).dot(&b)).abs() < 1e-14);
    }

    #[test]
    fn operator_constant_wave_is_exact() {
        let w = Worldline::straight_line(FourVector::ZERO, t(1.0), 1.0, 16).unwrap();
        let params = WaveParameters::phase_only(FlowInitialData::default(), 1.3, 1.0, 1.0);
        let probe = operator_probe(&params, &w, DEFAULT_PROBE_STEP).unwrap();
        assert_eq!(probe.operator_value, Complex64::new(1.3 * 1.3, 0.0));
        assert_eq!(probe.residual, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn operator_matches_prediction() {
        let w = Worldline::straight_line(
            FourVector::ZERO,
            FourVector::new(1.0, 0.2, 0.0, 0.0),
            1.0,
            16,
        )
        .unwrap();
        let init = FlowInitialData::new(t(0.3), 0.2);
        let params = WaveParameters::phase_only(init, 1.0, 1.0, 1.0);
        let res = operator_residual(&params, &w).unwrap();
        assert!(res.norm() <= 1e-4, "{res}");
        let params = params.with_real_part(FourVector::ZERO, 0.1);
        let res = operator_residual(&params, &w).unwrap();
        assert!(res.norm() <= 1e-4, "{res}");
    }

    #[test]
    fn operator_reports_underflow() {
        let w = Worldline::straight_line(
            FourVector::ZERO,
            FourVector::new(1.0, 0.0, 0.0, 0.0),
            1.0,
            8,
        )
        .unwrap();
        let params = WaveParameters::phase_only(FlowInitialData::default(), 1.0, 1.0, 1.0)
            .with_real_part(t(-1e4), 0.0);
        assert!(matches!(
            operator_residual(&params, &w),
            Err(Error::NumericalUnderflow { .. })
        ));
    }

    #[test]
    fn operator_rejects_bad_parameters() {
        let w = Worldline::straight_line(FourVector::ZERO, t(1.0), 1.0, 8).unwrap();
        let params = WaveParameters::phase_only(FlowInitialData::default(), 1.0, 0.0, 1.0);
        assert!(matches!(
            operator_residual(&params, &w),
            Err(Error::InvalidParameter(_))
        ));
        let params = WaveParameters::phase_only(FlowInitialData::default(), 1.0, 1.0, 2.0);
        assert!(matches!(
            operator_residual(&params, &w),
            Err(Error::GridMismatch(_))
        ));
        let params = WaveParameters::phase_only(FlowInitialData::new(t(1.0), -0.5), 1.0, 1.0, 1.0);
        assert!(matches!(
            operator_residual(&params, &w),
            Err(Error::FlowSingularity { .. })
        ));
    }

    #[test]
    fn complex_expm1_is_accurate() {
        for z in [
            Complex64::new(1e-9, 2e-9),
            Complex64::new(-0.3, 0.7),
            Complex64::new(0.0, 0.0),
            Complex64::new(2.0, -1.0),
        ] {
            let direct = z.exp() - 1.0;
            let got = expm1(z);
            assert!((got - direct).norm() <= 1e-15 * (1.0 + direct.norm()) + 1e-17);
        }
    }
}
