//! Scalar activation functions and their analytic derivatives.
//!
//! All four kinds are total on the finite reals. Non-finite inputs are not
//! checked; NaN propagates through every kind so divergence surfaces in the
//! caller.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Hidden-unit nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    /// Sigmoid-weighted linear unit, `z * sigmoid(z)`.
    Silu,
    /// Derivative of the SiLU used as an activation.
    Dsilu,
    Relu,
    Sigmoid,
}

impl ActivationKind {
    pub const ALL: [ActivationKind; 4] = [
        ActivationKind::Silu,
        ActivationKind::Dsilu,
        ActivationKind::Relu,
        ActivationKind::Sigmoid,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Silu => "silu",
            ActivationKind::Dsilu => "dsilu",
            ActivationKind::Relu => "relu",
            ActivationKind::Sigmoid => "sigmoid",
        }
    }

    #[inline]
    pub fn activate(self, z: f64) -> f64 {
        activate(self, z)
    }

    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        activate_derivative(self, z)
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown activation `{0}` (expected silu, dsilu, relu or sigmoid)")]
pub struct ParseActivationError(pub String);

impl FromStr for ActivationKind {
    type Err = ParseActivationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "silu" => Ok(ActivationKind::Silu),
            "dsilu" => Ok(ActivationKind::Dsilu),
            "relu" => Ok(ActivationKind::Relu),
            "sigmoid" => Ok(ActivationKind::Sigmoid),
            _ => Err(ParseActivationError(s.to_string())),
        }
    }
}

/// Logistic function, branch-stable for large |z|.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn activate(kind: ActivationKind, z: f64) -> f64 {
    match kind {
        ActivationKind::Silu => z * sigmoid(z),
        ActivationKind::Dsilu => {
            let s = sigmoid(z);
            s * (1.0 + z * (1.0 - s))
        }
        ActivationKind::Relu => {
            if z.is_nan() {
                z
            } else {
                z.max(0.0)
            }
        }
        ActivationKind::Sigmoid => sigmoid(z),
    }
}

/// Derivative of [`activate`] with respect to `z`. The ReLU derivative at
/// exactly zero is 0.
#[inline]
pub fn activate_derivative(kind: ActivationKind, z: f64) -> f64 {
    match kind {
        ActivationKind::Silu => {
            let s = sigmoid(z);
            s * (1.0 + z * (1.0 - s))
        }
        ActivationKind::Dsilu => {
            let s = sigmoid(z);
            s * (1.0 - s) * (2.0 + z * (1.0 - s) - z * s)
        }
        ActivationKind::Relu => {
            if z > 0.0 {
                1.0
            } else if z.is_nan() {
                z
            } else {
                0.0
            }
        }
        ActivationKind::Sigmoid => {
            let s = sigmoid(z);
            s * (1.0 - s)
        }
    }
}
