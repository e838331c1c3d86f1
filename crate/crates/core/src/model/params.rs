use std::fmt;

use thiserror::Error;

/// Multiplier of the drift constraint. `Infinite` is the deterministic
/// (Bohmian) limit and is kept distinct from any large float so that the
/// osmotic term is exactly zero rather than a cancellation residue.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaPrime {
    Finite(f64),
    Infinite,
}

impl AlphaPrime {
    pub fn is_infinite(self) -> bool {
        matches!(self, AlphaPrime::Infinite)
    }

    /// `1/α′`, zero in the infinite limit.
    pub fn reciprocal(self) -> f64 {
        match self {
            AlphaPrime::Finite(a) => 1.0 / a,
            AlphaPrime::Infinite => 0.0,
        }
    }
}

impl fmt::Display for AlphaPrime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AlphaPrime::Finite(a) => write!(f, "{a}"),
            AlphaPrime::Infinite => f.write_str("infinite"),
        }
    }
}

/// Raw, unvalidated model constants.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParameters {
    pub hbar: f64,
    /// `η̃ = η α′`, held fixed across α′ sweeps.
    pub eta_tilde: f64,
    pub alpha_prime: AlphaPrime,
    /// Quantum-potential coefficient; `ħ²/8` for standard quantum mechanics.
    pub xi: f64,
    /// Declared quantization integer. When absent it is derived from `η̃/ħ`.
    pub quantization_n: Option<u32>,
    pub dt_field: f64,
    pub dt_particle: f64,
}

impl ModelParameters {
    /// Standard quantum mechanics in `ħ = 1` units with `η̃ = ħ`.
    pub fn standard(alpha_prime: AlphaPrime, dt: f64) -> Self {
        Self {
            hbar: 1.0,
            eta_tilde: 1.0,
            alpha_prime,
            xi: 0.125,
            quantization_n: None,
            dt_field: dt,
            dt_particle: dt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParameterError {
    #[error("{field} must be positive and finite, got {value}")]
    NonPositive { field: &'static str, value: f64 },
    #[error("eta_tilde/hbar = {ratio} is not an integer (quantization condition)")]
    NonIntegerQuantization { ratio: f64 },
    #[error("declared quantization_n = {declared} but eta_tilde/hbar = {ratio}")]
    QuantizationMismatch { declared: u32, ratio: f64 },
    #[error("dt_particle = {dt_particle} exceeds dt_field = {dt_field}")]
    StepOrdering { dt_particle: f64, dt_field: f64 },
}

const QUANTIZATION_TOL: f64 = 1e-9;

/// Parameters that passed [`validate_parameters`]; immutable afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedParameters {
    raw: ModelParameters,
    n: u32,
}

impl ValidatedParameters {
    pub fn hbar(&self) -> f64 {
        self.raw.hbar
    }
    pub fn eta_tilde(&self) -> f64 {
        self.raw.eta_tilde
    }
    pub fn alpha_prime(&self) -> AlphaPrime {
        self.raw.alpha_prime
    }
    pub fn xi(&self) -> f64 {
        self.raw.xi
    }
    pub fn quantization_n(&self) -> u32 {
        self.n
    }
    pub fn dt_field(&self) -> f64 {
        self.raw.dt_field
    }
    pub fn dt_particle(&self) -> f64 {
        self.raw.dt_particle
    }
    pub fn raw(&self) -> &ModelParameters {
        &self.raw
    }

    /// Fluctuation strength `η = η̃/α′`; zero when α′ is infinite.
    pub fn eta(&self) -> f64 {
        match self.raw.alpha_prime {
            AlphaPrime::Finite(a) => self.raw.eta_tilde / a,
            AlphaPrime::Infinite => 0.0,
        }
    }

    /// Planck constant of the linear equation generated by `ξ`: `√(8ξ)`.
    pub fn hbar_eff(&self) -> f64 {
        (8.0 * self.raw.xi).sqrt()
    }

    /// Same model at another α′ (η̃ unchanged).
    pub fn with_alpha_prime(&self, alpha_prime: AlphaPrime) -> Result<Self, ParameterError> {
        let mut raw = self.raw.clone();
        raw.alpha_prime = alpha_prime;
        validate_parameters(&raw)
    }
}

fn positive(field: &'static str, value: f64) -> Result<(), ParameterError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(ParameterError::NonPositive { field, value })
    }
}

/// Check every parameter invariant, including `η̃ = N ħ` for integer `N ≥ 1`.
pub fn validate_parameters(p: &ModelParameters) -> Result<ValidatedParameters, ParameterError> {
    positive("hbar", p.hbar)?;
    positive("eta_tilde", p.eta_tilde)?;
    positive("dt_field", p.dt_field)?;
    positive("dt_particle", p.dt_particle)?;
    if let AlphaPrime::Finite(a) = p.alpha_prime {
        positive("alpha_prime", a)?;
    }
    if !(p.xi.is_finite() && p.xi >= 0.0) {
        return Err(ParameterError::NonPositive {
            field: "xi",
            value: p.xi,
        });
    }
    let ratio = p.eta_tilde / p.hbar;
    let nearest = ratio.round();
    if (ratio - nearest).abs() > QUANTIZATION_TOL {
        return Err(ParameterError::NonIntegerQuantization { ratio });
    }
    if nearest < 1.0 || nearest > u32::MAX as f64 {
        return Err(ParameterError::NonPositive {
            field: "quantization_n",
            value: nearest,
        });
    }
    let n = nearest as u32;
    if let Some(declared) = p.quantization_n {
        if declared != n {
            return Err(ParameterError::QuantizationMismatch { declared, ratio });
        }
    }
    if p.dt_particle > p.dt_field * (1.0 + 1e-12) {
        return Err(ParameterError::StepOrdering {
            dt_particle: p.dt_particle,
            dt_field: p.dt_field,
        });
    }
    Ok(ValidatedParameters { raw: p.clone(), n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(hbar: f64, eta_tilde: f64, alpha: f64) -> ModelParameters {
        ModelParameters {
            hbar,
            eta_tilde,
            alpha_prime: AlphaPrime::Finite(alpha),
            xi: hbar * hbar / 8.0,
            quantization_n: None,
            dt_field: 1e-3,
            dt_particle: 1e-3,
        }
    }

    #[test]
    fn identity_case() {
        let v = validate_parameters(&params(1.0, 1.0, 1.0)).unwrap();
        assert_eq!(v.quantization_n(), 1);
        assert_eq!(v.eta(), 1.0);
    }

    #[test]
    fn derived_eta() {
        let v = validate_parameters(&params(2.0, 2.0, 4.0)).unwrap();
        assert_eq!(v.quantization_n(), 1);
        assert_eq!(v.eta(), 0.5);
    }

    #[test]
    fn half_integer_rejected() {
        let err = validate_parameters(&params(1.0, 1.5, 1.0)).unwrap_err();
        assert!(matches!(err, ParameterError::NonIntegerQuantization { .. }));
    }

    #[test]
    fn infinite_alpha_has_zero_eta() {
        let mut p = params(1.0, 3.0, 1.0);
        p.alpha_prime = AlphaPrime::Infinite;
        let v = validate_parameters(&p).unwrap();
        assert_eq!(v.eta(), 0.0);
        assert_eq!(v.quantization_n(), 3);
    }

    #[test]
    fn rejects_nonpositive_and_misordered_steps() {
        let mut p = params(1.0, 1.0, 1.0);
        p.hbar = 0.0;
        assert!(matches!(
            validate_parameters(&p),
            Err(ParameterError::NonPositive { field: "hbar", .. })
        ));
        let mut p = params(1.0, 1.0, -1.0);
        p.xi = 0.1;
        assert!(validate_parameters(&p).is_err());
        let mut p = params(1.0, 1.0, 1.0);
        p.xi = -0.1;
        assert!(validate_parameters(&p).is_err());
        let mut p = params(1.0, 1.0, 1.0);
        p.dt_particle = 2e-3;
        assert!(matches!(
            validate_parameters(&p),
            Err(ParameterError::StepOrdering { .. })
        ));
    }

    #[test]
    fn declared_n_must_match() {
        let mut p = params(1.0, 2.0, 1.0);
        p.quantization_n = Some(2);
        assert!(validate_parameters(&p).is_ok());
        p.quantization_n = Some(3);
        assert!(matches!(
            validate_parameters(&p),
            Err(ParameterError::QuantizationMismatch { .. })
        ));
    }

    #[test]
    fn hbar_eff_from_xi() {
        let mut p = params(1.0, 1.0, 1.0);
        p.xi = 0.5;
        assert_eq!(validate_parameters(&p).unwrap().hbar_eff(), 2.0);
    }

    proptest! {
        #[test]
        fn quantization_gate_over_rationals(num in 1u32..400, den in 1u32..12, hbar in 0.1f64..5.0) {
            let ratio = num as f64 / den as f64;
            let p = params(hbar, ratio * hbar, 1.0);
            let integer = num % den == 0;
            match validate_parameters(&p) {
                Ok(v) => {
                    prop_assert!(integer);
                    prop_assert_eq!(v.quantization_n(), num / den);
                }
                Err(ParameterError::NonIntegerQuantization { .. }) => prop_assert!(!integer),
                Err(e) => prop_assert!(false, "unexpected {e}"),
            }
        }
    }
}
