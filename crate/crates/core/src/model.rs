//! Scalar model functions and the shared parameter record.
//!
//! Everything is nondimensional. The tumbling kernel is `K = 1 - F` with the
//! saturating response `F(X) = chi * tanh(X / delta)`, and the growth law is
//! logistic, `P(rho) = 1 - rho`.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

/// Nondimensional physical parameters of the kinetic model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Inverse tumbling-frequency scale, `k > 0`.
    pub k: f64,
    /// Chemoattractant diffusion coefficient, `d >= 0`.
    pub d: f64,
    /// Modulation amplitude, `0 <= chi < 1`.
    pub chi: f64,
    /// Response width, `delta > 0`.
    pub delta: f64,
}

impl ModelParams {
    pub fn new(k: f64, d: f64, chi: f64, delta: f64) -> Result<Self> {
        let p = Self { k, d, chi, delta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.k.is_finite() && self.k > 0.0, || {
            format!("k must be > 0, got {}", self.k)
        })?;
        ensure(self.d.is_finite() && self.d >= 0.0, || {
            format!("d must be >= 0, got {}", self.d)
        })?;
        ensure((0.0..1.0).contains(&self.chi), || {
            format!("chi must lie in [0, 1), got {}", self.chi)
        })?;
        ensure(self.delta.is_finite() && self.delta > 0.0, || {
            format!("delta must be > 0, got {}", self.delta)
        })
    }

    pub fn response(&self) -> ResponseFunction {
        ResponseFunction {
            chi: self.chi,
            delta: self.delta,
        }
    }

    /// `F'(0) = chi / delta`.
    pub fn stiffness(&self) -> f64 {
        self.chi / self.delta
    }

    /// Control parameter of the kinetic instability criterion, `F'(0) / k`.
    pub fn stiffness_ratio(&self) -> f64 {
        stiffness_ratio(self)
    }
}

/// Parameter triple `(d/k, chi/sqrt(k), sqrt(k)*delta)` in which the
/// reference parameter sets A-D are tabulated. For the tanh response the
/// stiffness ratio `F'(0)/k` equals `chi_over_sqrt_k / sqrt_k_delta`
/// independently of `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledParams {
    pub d_over_k: f64,
    pub chi_over_sqrt_k: f64,
    pub sqrt_k_delta: f64,
}

impl ScaledParams {
    pub const fn new(d_over_k: f64, chi_over_sqrt_k: f64, sqrt_k_delta: f64) -> Self {
        Self {
            d_over_k,
            chi_over_sqrt_k,
            sqrt_k_delta,
        }
    }

    pub fn to_model(&self, k: f64) -> Result<ModelParams> {
        ensure(k.is_finite() && k > 0.0, || {
            format!("k must be > 0, got {k}")
        })?;
        let sk = k.sqrt();
        ModelParams::new(
            k,
            self.d_over_k * k,
            self.chi_over_sqrt_k * sk,
            self.sqrt_k_delta / sk,
        )
    }

    pub fn from_model(p: &ModelParams) -> Self {
        let sk = p.k.sqrt();
        Self {
            d_over_k: p.d / p.k,
            chi_over_sqrt_k: p.chi / sk,
            sqrt_k_delta: p.delta * sk,
        }
    }

    pub fn stiffness_ratio(&self) -> f64 {
        self.chi_over_sqrt_k / self.sqrt_k_delta
    }
}

/// Reference parameter sets, keyed by their one-letter label.
pub const SET_A: ScaledParams = ScaledParams::new(1.0, 0.5, 0.05);
pub const SET_B: ScaledParams = ScaledParams::new(1.0, 0.5, 0.0625);
pub const SET_C: ScaledParams = ScaledParams::new(0.7, 0.5, 0.0625);
pub const SET_D: ScaledParams = ScaledParams::new(1.0, 0.5, 0.1);

pub fn named_set(name: &str) -> Option<ScaledParams> {
    match name.to_ascii_uppercase().as_str() {
        "A" => Some(SET_A),
        "B" => Some(SET_B),
        "C" => Some(SET_C),
        "D" => Some(SET_D),
        _ => None,
    }
}

/// One tabulated simulation case: set label, `k`, and whether the kinetic
/// criterion predicts instability.
#[derive(Debug, Clone, Copy)]
pub struct TableCase {
    pub set: &'static str,
    pub k: f64,
    pub unstable: bool,
}

pub const TABLE_CASES: [TableCase; 7] = [
    TableCase {
        set: "A",
        k: 1.0,
        unstable: true,
    },
    TableCase {
        set: "A",
        k: 2.0,
        unstable: false,
    },
    TableCase {
        set: "B",
        k: 0.1,
        unstable: true,
    },
    TableCase {
        set: "B",
        k: 1.0,
        unstable: false,
    },
    TableCase {
        set: "C",
        k: 1.0,
        unstable: true,
    },
    TableCase {
        set: "C",
        k: 2.0,
        unstable: false,
    },
    TableCase {
        set: "D",
        k: 1.0,
        unstable: false,
    },
];

/// Saturating chemotactic response `F(X) = chi * tanh(X / delta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseFunction {
    pub chi: f64,
    pub delta: f64,
}

impl ResponseFunction {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        response_f(x, self)
    }

    #[inline]
    pub fn kernel(&self, x: f64) -> f64 {
        tumbling_kernel_k(x, self)
    }

    pub fn slope_at_zero(&self) -> f64 {
        self.chi / self.delta
    }
}

/// Population growth law. `Disabled` switches division/death off entirely.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GrowthModel {
    #[default]
    Logistic,
    Disabled,
}

impl GrowthModel {
    #[inline]
    pub fn rate(&self, rho: f64) -> f64 {
        match self {
            GrowthModel::Logistic => growth_p(rho),
            GrowthModel::Disabled => 0.0,
        }
    }
}

#[inline]
pub fn response_f(x: f64, rf: &ResponseFunction) -> f64 {
    rf.chi * (x / rf.delta).tanh()
}

#[inline]
pub fn tumbling_kernel_k(x: f64, rf: &ResponseFunction) -> f64 {
    1.0 - response_f(x, rf)
}

#[inline]
pub fn growth_p(rho: f64) -> f64 {
    1.0 - rho
}

pub fn stiffness_ratio(p: &ModelParams) -> f64 {
    p.chi / (p.delta * p.k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const RF: ResponseFunction = ResponseFunction {
        chi: 0.5,
        delta: 0.05,
    };

    #[test]
    fn response_values() {
        assert_eq!(response_f(0.0, &RF), 0.0);
        assert!((response_f(1e6, &RF) - 0.5).abs() < 1e-15);
        // 0.5 * tanh(1), 40-digit reference
        assert!((response_f(0.05, &RF) - 0.380_797_077_977_882_4).abs() < 1e-15);
    }

    #[test]
    fn kernel_values() {
        assert_eq!(tumbling_kernel_k(0.0, &RF), 1.0);
        assert!((tumbling_kernel_k(-1e6, &RF) - 1.5).abs() < 1e-15);
        assert!((tumbling_kernel_k(0.05, &RF) - 0.619_202_922_022_117_6).abs() < 1e-15);
    }

    #[test]
    fn growth_values() {
        assert_eq!(growth_p(1.0), 0.0);
        assert_eq!(growth_p(0.5), 0.5);
        assert_eq!(growth_p(2.0), -1.0);
        assert_eq!(GrowthModel::Disabled.rate(0.1), 0.0);
    }

    #[test]
    fn stiffness_ratios() {
        let a = SET_A.to_model(1.0).unwrap();
        assert!((stiffness_ratio(&a) - 10.0).abs() < 1e-12);
        let b = SET_B.to_model(0.1).unwrap();
        assert!((b.chi - 0.5 * 0.1f64.sqrt()).abs() < 1e-15);
        assert!((b.delta - 0.0625 / 0.1f64.sqrt()).abs() < 1e-15);
        assert!((stiffness_ratio(&b) - 8.0).abs() < 1e-12);
        let zero = ModelParams::new(0.3, 0.2, 0.0, 0.1).unwrap();
        assert_eq!(stiffness_ratio(&zero), 0.0);
    }

    #[test]
    fn scaled_round_trip() {
        let p = SET_C.to_model(2.0).unwrap();
        let s = ScaledParams::from_model(&p);
        assert!((s.d_over_k - 0.7).abs() < 1e-14);
        assert!((s.chi_over_sqrt_k - 0.5).abs() < 1e-14);
        assert!((s.sqrt_k_delta - 0.0625).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(ModelParams::new(0.0, 1.0, 0.5, 0.1).is_err());
        assert!(ModelParams::new(1.0, -1.0, 0.5, 0.1).is_err());
        assert!(ModelParams::new(1.0, 1.0, 1.0, 0.1).is_err());
        assert!(ModelParams::new(1.0, 1.0, 0.5, 0.0).is_err());
        // chi/sqrt(k) = 2.06 at k = 1 would need chi >= 1
        assert!(ScaledParams::new(1.0, 2.06, 0.0625).to_model(1.0).is_err());
        assert!(ScaledParams::new(1.0, 2.06, 0.0625).to_model(0.1).is_ok());
    }

    proptest! {
        #[test]
        fn response_is_odd_bounded_and_monotone(
            chi in 0.01f64..0.99, delta in 1e-3f64..10.0,
            x1 in -50.0f64..50.0, x2 in -50.0f64..50.0,
        ) {
            let rf = ResponseFunction { chi, delta };
            let f1 = response_f(x1, &rf);
            prop_assert!(f1.abs() <= chi);
            prop_assert_eq!(response_f(-x1, &rf), -f1);
            prop_assert!((tumbling_kernel_k(x1, &rf) + f1 - 1.0).abs() <= f64::EPSILON);
            if x1 < x2 {
                prop_assert!(f1 <= response_f(x2, &rf));
            }
        }

        #[test]
        fn response_strictly_below_chi_in_resolvable_range(
            chi in 0.01f64..0.99, x in -5.0f64..5.0,
        ) {
            let rf = ResponseFunction { chi, delta: 1.0 };
            prop_assert!(response_f(x, &rf).abs() < chi);
        }
    }
}
