//! Device constants and the charge-dispersion response of the qubit.
//!
//! Offset charge is carried internally as `ng` in units of 2e, which keeps the
//! cosine spectrum `ω̄₁₀ + Δω₁₀·cos(2π·ng)` in its textbook form. Everything
//! user-facing (traces, histograms, spectra) is reported in units of e.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Static device and protocol constants.
///
/// Angular quantities are in rad/s, `ej_over_h`/`ec_over_h` in GHz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceParams {
    pub ej_over_h: f64,
    pub ec_over_h: f64,
    /// Charge-averaged transition frequency ω̄₁₀.
    pub omega_bar: f64,
    /// Full cosine amplitude Δω₁₀ of the charge dispersion.
    pub dispersion: f64,
    pub visibility_nu: f64,
    pub decay_d: f64,
    /// Γ: the parity PSD knee sits at Γ/2π.
    pub parity_rate_gamma: f64,
    /// Fast-protocol duty cycle in Hz.
    pub shot_rate: f64,
    /// Slow charge-scan cadence in seconds.
    pub scan_period: f64,
    /// Recalibration interval of the fast protocol in seconds.
    pub recal_period: f64,
    pub scan_points: usize,
    pub shots_per_point: usize,
}

impl DeviceParams {
    /// Qubit A: E_J/h = 10.8 GHz, E_C/h = 390 MHz, Δω₁₀/2π = 600 kHz,
    /// Γ/2π = 255 Hz, 10 kHz fast protocol, 20 s scans, 15 s recalibration.
    pub fn qubit_a() -> Self {
        Self {
            ej_over_h: 10.8,
            ec_over_h: 0.39,
            omega_bar: TAU * 5.38e9,
            dispersion: TAU * 600e3,
            visibility_nu: 0.7,
            decay_d: 0.8,
            parity_rate_gamma: TAU * 255.0,
            shot_rate: 10e3,
            scan_period: 20.0,
            recal_period: 15.0,
            scan_points: 25,
            shots_per_point: 6,
        }
    }

    /// Qubit B: reduced E_J/h = 9.9 GHz and a 30 s measurement cycle with a
    /// four-times larger scan budget (0.01e fit width).
    ///
    /// The dispersion is the qubit-A value scaled by the asymptotic transmon
    /// ratio between E_J/E_C = 25.4 and 27.7 (≈1.69).
    pub fn qubit_b() -> Self {
        Self {
            ej_over_h: 9.9,
            omega_bar: TAU * 5.17e9,
            dispersion: TAU * 1.0e6,
            scan_period: 30.0,
            shots_per_point: 24,
            ..Self::qubit_a()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "qubitA" => Ok(Self::qubit_a()),
            "qubitB" => Ok(Self::qubit_b()),
            other => Err(invalid(format!(
                "unknown device preset `{other}` (expected qubitA or qubitB)"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dispersion > 0.0) {
            return Err(invalid("dispersion must be positive"));
        }
        if !(self.visibility_nu > 0.0 && self.visibility_nu <= 1.0) {
            return Err(invalid("visibility ν must lie in (0, 1]"));
        }
        if !(self.decay_d > 0.0 && self.decay_d < 2.0) {
            return Err(invalid("decay d must lie in (0, 2)"));
        }
        // P₁ = ½[d ± ν] must stay a probability.
        if self.decay_d - self.visibility_nu < 0.0 || self.decay_d + self.visibility_nu > 2.0 {
            return Err(invalid("d ± ν must stay within [0, 2] so that P₁ ∈ [0, 1]"));
        }
        if !(self.parity_rate_gamma >= 0.0) {
            return Err(invalid("parity rate Γ must be non-negative"));
        }
        for (name, v) in [
            ("shot_rate", self.shot_rate),
            ("scan_period", self.scan_period),
            ("recal_period", self.recal_period),
        ] {
            if !(v > 0.0) {
                return Err(invalid(format!("{name} must be positive")));
            }
        }
        if self.scan_points < 2 || self.shots_per_point == 0 {
            return Err(invalid(
                "scan budget needs ≥ 2 points and ≥ 1 shot per point",
            ));
        }
        Ok(())
    }

    /// Scan idle time t_i = π/Δω₁₀.
    pub fn scan_idle(&self) -> f64 {
        PI / self.dispersion
    }

    pub fn ej_over_ec(&self) -> f64 {
        self.ej_over_h / self.ec_over_h
    }
}

/// Offset charge in units of 2e.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct OffsetCharge(pub f64);

impl OffsetCharge {
    pub fn from_e(value_e: f64) -> Self {
        Self(value_e / 2.0)
    }

    pub fn ng(self) -> f64 {
        self.0
    }

    pub fn value_e(self) -> f64 {
        2.0 * self.0
    }
}

impl std::ops::Add for OffsetCharge {
    type Output = OffsetCharge;
    fn add(self, rhs: Self) -> Self {
        OffsetCharge(self.0 + rhs.0)
    }
}

/// Quasiparticle parity of the island. A flip moves the spectrum onto the
/// other band, equivalent to shifting n_g by 0.5 (one electron).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParityState {
    Even,
    Odd,
}

impl ParityState {
    pub fn sign(self) -> f64 {
        match self {
            ParityState::Even => 1.0,
            ParityState::Odd => -1.0,
        }
    }

    pub fn from_sign(s: i8) -> Self {
        if s >= 0 {
            ParityState::Even
        } else {
            ParityState::Odd
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            ParityState::Even => ParityState::Odd,
            ParityState::Odd => ParityState::Even,
        }
    }
}

/// Detuning of the transition from ω̄₁₀ on the band selected by `parity`.
pub fn charge_detuning(params: &DeviceParams, ng: OffsetCharge, parity: ParityState) -> f64 {
    parity.sign() * params.dispersion * (TAU * ng.0).cos()
}

pub fn transition_frequency(params: &DeviceParams, ng: OffsetCharge, parity: ParityState) -> f64 {
    params.omega_bar + charge_detuning(params, ng, parity)
}

/// Excited-state probability of the X/2 – idle(π/Δω₁₀) – X/2 scan sequence:
/// `½[d + ν·cos(π·cos(2π·ng))]`.
pub fn ramsey_population(params: &DeviceParams, ng_total: OffsetCharge) -> f64 {
    ramsey_population_dv(params.decay_d, params.visibility_nu, ng_total.0)
}

pub(crate) fn ramsey_population_dv(d: f64, nu: f64, ng: f64) -> f64 {
    0.5 * (d + nu * (PI * (TAU * ng).cos()).cos())
}

/// Wraps a charge difference (in e) into [−0.5, 0.5).
pub fn alias_charge_delta(delta_e: f64) -> f64 {
    let wrapped = delta_e - (delta_e + 0.5).floor();
    // floor can land exactly on 0.5 through rounding for tiny negative inputs
    if wrapped >= 0.5 {
        wrapped - 1.0
    } else {
        wrapped
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn unit_readout() -> DeviceParams {
        DeviceParams {
            decay_d: 1.0,
            visibility_nu: 1.0,
            ..DeviceParams::qubit_a()
        }
    }

    #[test]
    fn transition_frequency_bands() {
        let p = DeviceParams::qubit_a();
        let even = transition_frequency(&p, OffsetCharge(0.0), ParityState::Even);
        let odd = transition_frequency(&p, OffsetCharge(0.0), ParityState::Odd);
        assert_abs_diff_eq!(even, p.omega_bar + p.dispersion, epsilon = 1e-3);
        assert_abs_diff_eq!(odd, p.omega_bar - p.dispersion, epsilon = 1e-3);
        for parity in [ParityState::Even, ParityState::Odd] {
            let f = transition_frequency(&p, OffsetCharge(0.25), parity);
            assert_abs_diff_eq!(f, p.omega_bar, epsilon = 1e-3);
        }
    }

    #[test]
    fn parity_flip_equals_single_electron_shift() {
        let p = DeviceParams::qubit_a();
        for i in 0..50 {
            let ng = OffsetCharge(i as f64 / 50.0);
            let flipped = transition_frequency(&p, ng, ParityState::Odd);
            let shifted =
                transition_frequency(&p, ng + OffsetCharge::from_e(1.0), ParityState::Even);
            assert_abs_diff_eq!(flipped, shifted, epsilon = 1e-3);
        }
    }

    #[test]
    fn ramsey_population_reference_points() {
        let p = unit_readout();
        assert_abs_diff_eq!(
            ramsey_population(&p, OffsetCharge(0.0)),
            0.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            ramsey_population(&p, OffsetCharge(0.25)),
            1.0,
            epsilon = 1e-15
        );
        // ½[1 + cos(π·√2/2)] from a 30-digit mpmath evaluation
        let expected = 0.197_150_066_460_593_3;
        assert_abs_diff_eq!(
            ramsey_population(&p, OffsetCharge(0.125)),
            expected,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(expected, 0.197, epsilon = 5e-4);
    }

    #[test]
    fn alias_examples() {
        assert_abs_diff_eq!(alias_charge_delta(0.6), -0.4, epsilon = 1e-12);
        assert_abs_diff_eq!(alias_charge_delta(1.0), 0.0, epsilon = 1e-12);
        assert_eq!(alias_charge_delta(0.5), -0.5);
        assert_eq!(alias_charge_delta(-0.5), -0.5);
        assert_abs_diff_eq!(alias_charge_delta(-0.3), -0.3, epsilon = 1e-15);
    }

    #[test]
    fn presets_validate() {
        DeviceParams::qubit_a().validate().unwrap();
        DeviceParams::qubit_b().validate().unwrap();
        let ratio = DeviceParams::qubit_a().ej_over_ec();
        assert!((ratio - 27.7).abs() < 0.05 && (ratio - 28.0).abs() < 0.5);
        assert!(DeviceParams::preset("qubitC").is_err());
        let bad = DeviceParams {
            visibility_nu: 0.9,
            decay_d: 0.5,
            ..DeviceParams::qubit_a()
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn alias_is_idempotent_and_integer_periodic(a in -50.0f64..50.0, n in -20i32..20) {
            let once = alias_charge_delta(a);
            prop_assert!((-0.5..0.5).contains(&once));
            prop_assert_eq!(alias_charge_delta(once), once);
            let shifted = alias_charge_delta(a + n as f64);
            // |a| < 50 keeps the rounding error of a + n below 1e-13
            prop_assert!((shifted - once).abs() < 1e-12 || (shifted - once).abs() > 1.0 - 1e-12);
        }

        #[test]
        fn ramsey_population_has_one_e_period(ng in -2.0f64..2.0) {
            let p = DeviceParams::qubit_a();
            let a = ramsey_population(&p, OffsetCharge(ng));
            let b = ramsey_population(&p, OffsetCharge(ng + 0.5));
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
