//! SELU.

use serde::{Deserialize, Serialize};

/// Rounded constants, as commonly quoted.
pub const SELU_ALPHA: f64 = 1.673;
pub const SELU_LAMBDA: f64 = 1.050;
/// Full-precision fixed-point constants for unit-variance inputs.
pub const SELU_ALPHA_PRECISE: f64 = 1.673_263_242_354_377_3;
pub const SELU_LAMBDA_PRECISE: f64 = 1.050_700_987_355_480_5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Selu {
    pub alpha: f64,
    pub lambda: f64,
}

impl Default for Selu {
    fn default() -> Self {
        Self { alpha: SELU_ALPHA, lambda: SELU_LAMBDA }
    }
}

impl Selu {
    pub fn precise() -> Self {
        Self { alpha: SELU_ALPHA_PRECISE, lambda: SELU_LAMBDA_PRECISE }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        if x > 0.0 {
            self.lambda * x
        } else {
            self.lambda * self.alpha * x.exp_m1()
        }
    }

    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        if x > 0.0 {
            self.lambda
        } else {
            self.lambda * self.alpha * x.exp()
        }
    }
}

/// SELU with the default constants.
pub fn selu(x: f64) -> f64 {
    Selu::default().eval(x)
}
