//! Shared fixtures for the benchmarks.

use qaction::stationarity::optimal_sigma1;
use qaction::{FlowCoefficients, FlowInitialData, FourVector, Worldline};

pub const A: FourVector = FourVector([0.5, 0.2, -0.1, 0.3]);
pub const B: FourVector = FourVector([2.5, 1.2, 0.9, 1.3]);
pub const MASS: f64 = 0.5;
pub const SIGMA2: f64 = 0.4;

/// Stationary initial data for `SIGMA2` over unit duration.
pub fn initial_data() -> FlowInitialData {
    FlowInitialData::new(optimal_sigma1(SIGMA2, &A, &B, 1.0).unwrap(), SIGMA2)
}

/// A perturbed world line from `A` to `B` and the matching flow on `n` intervals.
pub fn lattice(n: usize) -> (Worldline, FlowCoefficients) {
    let w = Worldline::straight_line(A, B, 1.0, n)
        .unwrap()
        .perturb_interior(0.3, 1);
    let flow = FlowCoefficients::closed_form(initial_data(), 1.0, n).unwrap();
    (w, flow)
}
