//! Smooth ReLU-like activations with derivatives up to third order.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Softplus,
    Silu,
    Gelu,
}

fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    pub const ALL: [Activation; 3] = [Activation::Softplus, Activation::Silu, Activation::Gelu];

    pub fn name(self) -> &'static str {
        match self {
            Activation::Softplus => "softplus",
            Activation::Silu => "silu",
            Activation::Gelu => "gelu",
        }
    }

    pub fn eval(self, t: f64) -> f64 {
        self.derivatives(t)[0]
    }

    pub fn first(self, t: f64) -> f64 {
        self.derivatives(t)[1]
    }

    /// `[psi, psi', psi'', psi''']` at `t`.
    pub fn derivatives(self, t: f64) -> [f64; 4] {
        match self {
            Activation::Softplus => {
                let s = logistic(t);
                let s1 = s * (1.0 - s);
                let value = t.max(0.0) + (-t.abs()).exp().ln_1p();
                [value, s, s1, s1 * (1.0 - 2.0 * s)]
            }
            Activation::Silu => {
                let s = logistic(t);
                let s1 = s * (1.0 - s);
                let s2 = s1 * (1.0 - 2.0 * s);
                let s3 = s1 * (1.0 - 6.0 * s + 6.0 * s * s);
                [t * s, s + t * s1, 2.0 * s1 + t * s2, 3.0 * s2 + t * s3]
            }
            Activation::Gelu => {
                let cdf = 0.5 * erfc(-t / std::f64::consts::SQRT_2);
                let pdf = (-0.5 * t * t).exp() / (2.0 * PI).sqrt();
                [t * cdf, cdf + t * pdf, pdf * (2.0 - t * t), pdf * (t * t * t - 4.0 * t)]
            }
        }
    }

    /// `(psi', psi'')`, the pair needed by training.
    pub fn first_two(self, t: f64) -> (f64, f64) {
        let d = self.derivatives(t);
        (d[1], d[2])
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Activation::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown activation '{s}'")))
    }
}

/// Single-layer approximation of the identity,
/// `Id_h(t) = (psi(t0 + h t) - psi(t0 - h t)) / (2 h psi'(t0))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityLayer {
    activation: Activation,
    h: f64,
    t0: f64,
    slope: f64,
}

impl IdentityLayer {
    pub fn new(activation: Activation, h: f64, t0: f64) -> Result<Self> {
        if !(h > 0.0 && h <= 1.0) {
            return Err(Error::invalid(format!("identity layer needs h in (0, 1], got {h}")));
        }
        let slope = activation.first(t0);
        if slope == 0.0 || !slope.is_finite() {
            return Err(Error::invalid(format!("{activation} has zero slope at t0 = {t0}")));
        }
        Ok(Self { activation, h, t0, slope })
    }

    pub fn eval(&self, t: f64) -> f64 {
        let (a, h, t0) = (self.activation, self.h, self.t0);
        (a.eval(t0 + h * t) - a.eval(t0 - h * t)) / (2.0 * h * self.slope)
    }

    /// `k`-th derivative for `k` in `1..=3`:
    /// `h^(k-1) (psi^(k)(t0 + h t) + (-1)^(k-1) psi^(k)(t0 - h t)) / (2 psi'(t0))`.
    pub fn derivative(&self, k: usize, t: f64) -> Result<f64> {
        if !(1..=3).contains(&k) {
            return Err(Error::invalid("identity layer derivatives are available for orders 1 to 3"));
        }
        let plus = self.activation.derivatives(self.t0 + self.h * t)[k];
        let minus = self.activation.derivatives(self.t0 - self.h * t)[k];
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        Ok(self.h.powi(k as i32 - 1) * (plus + sign * minus) / (2.0 * self.slope))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivatives_match_finite_differences() {
        let eps = 1e-5;
        for act in Activation::ALL {
            for &t in &[-4.0, -1.3, -0.2, 0.0, 0.4, 2.2, 7.0] {
                let d = act.derivatives(t);
                let p = act.derivatives(t + eps);
                let m = act.derivatives(t - eps);
                for k in 0..3 {
                    let fd = (p[k] - m[k]) / (2.0 * eps);
                    assert!((fd - d[k + 1]).abs() < 1e-8, "{act} order {} at {t}: {fd} vs {}", k + 1, d[k + 1]);
                }
            }
        }
    }

    #[test]
    fn softplus_slope_at_zero_is_one_half() {
        assert_eq!(Activation::Softplus.first(0.0), 0.5);
        assert!((Activation::Softplus.eval(0.0) - 2f64.ln()).abs() < 1e-15);
        assert!((Activation::Softplus.eval(800.0) - 800.0).abs() < 1e-12);
        assert!(Activation::Softplus.eval(-800.0) >= 0.0);
    }

    #[test]
    fn identity_layer_is_exact_at_origin() {
        for act in Activation::ALL {
            let id = IdentityLayer::new(act, 0.1, 1.0).unwrap();
            assert_eq!(id.eval(0.0), 0.0);
            assert!((id.derivative(1, 0.0).unwrap() - 1.0).abs() < 1e-15);
        }
        assert!(IdentityLayer::new(Activation::Softplus, 0.0, 1.0).is_err());
        assert!(IdentityLayer::new(Activation::Softplus, 1.5, 1.0).is_err());
    }

    #[test]
    fn parse_names() {
        for act in Activation::ALL {
            assert_eq!(act.name().parse::<Activation>().unwrap(), act);
        }
        assert!("relu".parse::<Activation>().is_err());
    }
}
