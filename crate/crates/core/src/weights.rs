use std::fmt;

use crate::error::{Error, Result};

/// Log-linear interpolation weights for the external acoustic model, the
/// external language model and the (negated) internal language model.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FusionWeights {
    lambda_am: f64,
    lambda_lm: f64,
    lambda_ilm: f64,
}

impl FusionWeights {
    pub fn new(lambda_am: f64, lambda_lm: f64, lambda_ilm: f64) -> Result<Self> {
        for (name, v) in [("lambda_am", lambda_am), ("lambda_lm", lambda_lm), ("lambda_ilm", lambda_ilm)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Weights(format!("{name} = {v} must be finite and >= 0")));
            }
        }
        Ok(Self {
            lambda_am,
            lambda_lm,
            lambda_ilm,
        })
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn am(&self) -> f64 {
        self.lambda_am
    }

    pub fn lm(&self) -> f64 {
        self.lambda_lm
    }

    pub fn ilm(&self) -> f64 {
        self.lambda_ilm
    }

    /// Same weights with the acoustic-model term switched off (first pass).
    pub fn without_am(&self) -> Self {
        Self {
            lambda_am: 0.0,
            ..*self
        }
    }

    pub fn with_am(&self, lambda_am: f64) -> Result<Self> {
        Self::new(lambda_am, self.lambda_lm, self.lambda_ilm)
    }

    pub fn as_tuple(&self) -> (f64, f64, f64) {
        (self.lambda_am, self.lambda_lm, self.lambda_ilm)
    }
}

impl fmt::Display for FusionWeights {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "lambda_am={} lambda_lm={} lambda_ilm={}",
            self.lambda_am, self.lambda_lm, self.lambda_ilm
        )
    }
}
