use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

/// Scalar objective `Phi` evaluated along orbits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Observable {
    /// `sin(2 pi (x_0 + ... + x_{M-1}))`.
    SinSum,
    /// A single state coordinate.
    Coordinate(usize),
}

impl Observable {
    pub fn value(&self, x: &DVector<f64>) -> f64 {
        match *self {
            Observable::SinSum => (2.0 * std::f64::consts::PI * x.sum()).sin(),
            Observable::Coordinate(i) => x[i],
        }
    }

    /// The differential `dPhi` as a covector (Euclidean components).
    pub fn differential(&self, x: &DVector<f64>) -> DVector<f64> {
        match *self {
            Observable::SinSum => {
                let tau = 2.0 * std::f64::consts::PI;
                let c = tau * (tau * x.sum()).cos();
                DVector::from_element(x.len(), c)
            }
            Observable::Coordinate(i) => {
                let mut d = DVector::zeros(x.len());
                d[i] = 1.0;
                d
            }
        }
    }

    /// Whether the observable is defined for states of dimension `m`.
    pub fn fits(&self, m: usize) -> bool {
        match *self {
            Observable::SinSum => true,
            Observable::Coordinate(i) => i < m,
        }
    }
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Observable::SinSum => f.write_str("sin-sum"),
            Observable::Coordinate(0) => f.write_str("x"),
            Observable::Coordinate(1) => f.write_str("y"),
            Observable::Coordinate(2) => f.write_str("z"),
            Observable::Coordinate(i) => write!(f, "coord:{i}"),
        }
    }
}

impl FromStr for Observable {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sin-sum" => Ok(Observable::SinSum),
            "x" => Ok(Observable::Coordinate(0)),
            "y" => Ok(Observable::Coordinate(1)),
            "z" => Ok(Observable::Coordinate(2)),
            other => other
                .strip_prefix("coord:")
                .and_then(|i| i.parse().ok())
                .map(Observable::Coordinate)
                .ok_or_else(|| {
                    format!("unknown observable `{other}` (expected sin-sum, x, y, z or coord:N)")
                }),
        }
    }
}

impl TryFrom<String> for Observable {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Observable> for String {
    fn from(o: Observable) -> String {
        o.to_string()
    }
}
