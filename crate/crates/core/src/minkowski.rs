//! Flat Minkowski geometry with signature (+,-,-,-).
//!
//! Components of a [`FourVector`] are stored with the index raised; index 0
//! is time and the velocity of light is 1. Covectors such as the canonical
//! momentum are produced explicitly through [`FourVector::lower`].

use std::fmt;
use std::ops::{Add, AddAssign, Div, Index, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on the squared interval below which a separation is null.
pub const NULL_TOLERANCE: f64 = 1e-12;

const METRIC: [f64; 4] = [1.0, -1.0, -1.0, -1.0];

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FourVector(pub [f64; 4]);

impl FourVector {
    pub const ZERO: FourVector = FourVector([0.0; 4]);

    pub const fn new(t: f64, x: f64, y: f64, z: f64) -> Self {
        FourVector([t, x, y, z])
    }

    /// Unit vector along axis `mu`.
    pub fn basis(mu: usize) -> Self {
        let mut v = [0.0; 4];
        v[mu] = 1.0;
        FourVector(v)
    }

    pub fn components(&self) -> [f64; 4] {
        self.0
    }

    /// Minkowski inner product `u^0 v^0 - u^1 v^1 - u^2 v^2 - u^3 v^3`.
    pub fn dot(&self, other: &FourVector) -> f64 {
        dot(self, other)
    }

    /// Minkowski square `x . x`.
    pub fn square(&self) -> f64 {
        dot(self, self)
    }

    /// Flips the sign of the spatial components (metric contraction).
    pub fn lower(&self) -> FourVector {
        let [t, x, y, z] = self.0;
        FourVector([t, -x, -y, -z])
    }

    /// Euclidean length of the component array. Used for error measures only.
    pub fn euclidean_norm(&self) -> f64 {
        self.0.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> FourVector {
        FourVector(self.0.map(f))
    }
}

impl fmt::Display for FourVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [t, x, y, z] = self.0;
        write!(f, "({t}, {x}, {y}, {z})")
    }
}

impl Index<usize> for FourVector {
    type Output = f64;

    fn index(&self, mu: usize) -> &f64 {
        &self.0[mu]
    }
}

impl Add for FourVector {
    type Output = FourVector;

    fn add(self, rhs: FourVector) -> FourVector {
        FourVector(std::array::from_fn(|mu| self.0[mu] + rhs.0[mu]))
    }
}

impl AddAssign for FourVector {
    fn add_assign(&mut self, rhs: FourVector) {
        for mu in 0..4 {
            self.0[mu] += rhs.0[mu];
        }
    }
}

impl Sub for FourVector {
    type Output = FourVector;

    fn sub(self, rhs: FourVector) -> FourVector {
        FourVector(std::array::from_fn(|mu| self.0[mu] - rhs.0[mu]))
    }
}

impl Neg for FourVector {
    type Output = FourVector;

    fn neg(self) -> FourVector {
        self.map(|c| -c)
    }
}

impl Mul<f64> for FourVector {
    type Output = FourVector;

    fn mul(self, k: f64) -> FourVector {
        self.map(|c| c * k)
    }
}

impl Mul<FourVector> for f64 {
    type Output = FourVector;

    fn mul(self, v: FourVector) -> FourVector {
        v * self
    }
}

impl Div<f64> for FourVector {
    type Output = FourVector;

    fn div(self, k: f64) -> FourVector {
        self.map(|c| c / k)
    }
}

/// Sign class of a squared interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum IntervalClass {
    Timelike,
    Null,
    Spacelike,
}

impl IntervalClass {
    pub fn of(interval_sq: f64) -> IntervalClass {
        if interval_sq.abs() <= NULL_TOLERANCE {
            IntervalClass::Null
        } else if interval_sq > 0.0 {
            IntervalClass::Timelike
        } else {
            IntervalClass::Spacelike
        }
    }
}

/// Sign branch of the stationary duration and action.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl Branch {
    pub fn sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }

    pub fn of(x: f64) -> Branch {
        if x < 0.0 {
            Branch::Minus
        } else {
            Branch::Plus
        }
    }

    pub fn flip(self) -> Branch {
        match self {
            Branch::Plus => Branch::Minus,
            Branch::Minus => Branch::Plus,
        }
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Branch::Plus => "+",
            Branch::Minus => "-",
        })
    }
}

impl std::str::FromStr for Branch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Branch> {
        match s.trim() {
            "+" | "plus" => Ok(Branch::Plus),
            "-" | "minus" => Ok(Branch::Minus),
            other => Err(Error::InvalidParameter(format!(
                "branch must be '+' or '-', got {other:?}"
            ))),
        }
    }
}

pub fn dot(u: &FourVector, v: &FourVector) -> f64 {
    (0..4).map(|mu| METRIC[mu] * u.0[mu] * v.0[mu]).sum()
}

/// Squared interval `(b - a) . (b - a)`.
pub fn interval_sq(a: &FourVector, b: &FourVector) -> f64 {
    (*b - *a).square()
}

/// Canonical momentum `p_mu = -m xdot_mu / sqrt(xdot^2)`, returned with the
/// index lowered.
pub fn canonical_momentum(xdot: &FourVector, m: f64) -> Result<FourVector> {
    let norm_sq = xdot.square();
    if !(norm_sq > 0.0) {
        return Err(Error::NonTimelikeVelocity(norm_sq));
    }
    if m < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "mass must be >= 0, got {m}"
        )));
    }
    Ok(xdot.lower() * (-m / norm_sq.sqrt()))
}

/// Mass-shell constraint `p^2 - m^2`. The square is index-placement invariant.
pub fn hamiltonian(p: &FourVector, m: f64) -> f64 {
    p.square() - m * m
}

/// `±m sqrt((b - a)^2)`, the free-particle action on the straight world line.
pub fn classical_action(a: &FourVector, b: &FourVector, m: f64, branch: Branch) -> Result<f64> {
    let d2 = interval_sq(a, b);
    if d2 < 0.0 {
        return Err(Error::SpacelikeSeparation(d2));
    }
    Ok(branch.sign() * m * d2.sqrt())
}
