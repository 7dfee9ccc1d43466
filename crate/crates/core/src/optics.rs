//! Kerr-effect polarization switch.
//!
//! A strong pump co-propagates with the signal in single-mode fiber and
//! rotates the polarization of whatever part of the signal it overlaps. The
//! group-velocity mismatch makes the pump slide across the signal by
//! `walkoff_ps`, so a signal bin that the pump passes over completely picks
//! up the full peak phase and a bin outside the sweep is left untouched.
//!
//! Mode order for [`SwitchedState`] is `(t0,H), (t0,V), (t1,H), (t1,V)`;
//! `H` is the unswitched input polarization and `V` the switched one.

use core::f64::consts::{FRAC_PI_4, LN_2, PI};

use num_complex::Complex64;

use crate::qubit::TimeBinQubit;
use crate::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
pub const SIGNAL_WAVELENGTH_M: f64 = 720.8e-9;
pub const SIGNAL_BANDWIDTH_M: f64 = 1.7e-9;
pub const PUMP_WAVELENGTH_M: f64 = 800e-9;
pub const PUMP_BANDWIDTH_M: f64 = 2.1e-9;
/// Delay between orthogonal polarizations after a 10 mm α-BBO crystal.
pub const BIN_SEPARATION_PS: f64 = 4.5;

/// Time-bandwidth product of a transform-limited Gaussian pulse.
const GAUSSIAN_TBP: f64 = 2.0 * LN_2 / PI;
/// FWHM / σ for a Gaussian.
const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949;

/// Simpson intervals across ±`SIGNAL_SPAN_SIGMAS` of the signal pulse.
const OVERLAP_INTERVALS: usize = 1024;
const SIGNAL_SPAN_SIGMAS: f64 = 9.0;

/// Intensity FWHM in ps of a transform-limited Gaussian pulse with the given
/// center wavelength and spectral FWHM (both in meters).
pub fn transform_limited_fwhm_ps(center_wavelength_m: f64, bandwidth_m: f64) -> f64 {
    GAUSSIAN_TBP * center_wavelength_m * center_wavelength_m / (SPEED_OF_LIGHT * bandwidth_m)
        * 1e12
}

/// Cross-phase-modulation phase `Δφ = 8π n₂ L_eff I_pump / (3 λ_signal)`.
pub fn nonlinear_phase(
    n2_m2_per_w: f64,
    l_eff_m: f64,
    pump_peak_intensity_w_per_m2: f64,
    lambda_signal_m: f64,
) -> Result<f64> {
    let positive = |v: f64| v.is_finite() && v > 0.0;
    if !positive(n2_m2_per_w) {
        return Err(Error::input("n2", "must be > 0"));
    }
    if !positive(l_eff_m) {
        return Err(Error::input("l_eff", "must be > 0"));
    }
    if !positive(lambda_signal_m) {
        return Err(Error::input("lambda_signal", "must be > 0"));
    }
    if !(pump_peak_intensity_w_per_m2.is_finite() && pump_peak_intensity_w_per_m2 >= 0.0) {
        return Err(Error::input("pump_peak_intensity", "must be >= 0"));
    }
    Ok(8.0 * PI * n2_m2_per_w * l_eff_m * pump_peak_intensity_w_per_m2 / (3.0 * lambda_signal_m))
}

/// `η = sin²(2θ) sin²(Δφ/2)`.
pub fn switching_efficiency(theta: f64, delta_phi: f64) -> f64 {
    let a = libm::sin(2.0 * theta);
    let b = libm::sin(0.5 * delta_phi);
    (a * a * b * b).clamp(0.0, 1.0)
}

/// Parameters of the pump-driven switch.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SwitchModel {
    /// Angle between signal and pump polarizations.
    pub theta_rad: f64,
    /// Phase a signal slice picks up when the pump sweeps fully across it.
    pub delta_phi_peak_rad: f64,
    pub pump_fwhm_ps: f64,
    pub signal_fwhm_ps: f64,
    /// Total pump/signal slip accumulated over the fiber.
    pub walkoff_ps: f64,
    /// Center of the pump sweep relative to the early bin.
    pub pump_delay_ps: f64,
    /// Constant phase imprinted on the switched component.
    pub bin_phase_offset_rad: f64,
    /// Separation between `|t0⟩` and `|t1⟩`.
    pub bin_separation_ps: f64,
}

impl Default for SwitchModel {
    fn default() -> Self {
        SwitchModel {
            theta_rad: FRAC_PI_4,
            delta_phi_peak_rad: PI,
            pump_fwhm_ps: transform_limited_fwhm_ps(PUMP_WAVELENGTH_M, PUMP_BANDWIDTH_M),
            signal_fwhm_ps: transform_limited_fwhm_ps(SIGNAL_WAVELENGTH_M, SIGNAL_BANDWIDTH_M),
            walkoff_ps: 6.0,
            pump_delay_ps: 0.0,
            bin_phase_offset_rad: 0.0,
            bin_separation_ps: BIN_SEPARATION_PS,
        }
    }
}

impl SwitchModel {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.theta_rad,
            self.delta_phi_peak_rad,
            self.pump_fwhm_ps,
            self.signal_fwhm_ps,
            self.walkoff_ps,
            self.pump_delay_ps,
            self.bin_phase_offset_rad,
            self.bin_separation_ps,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("switch", "all parameters must be finite"));
        }
        if !(0.0..=core::f64::consts::FRAC_PI_2).contains(&self.theta_rad) {
            return Err(Error::input("switch.theta_rad", "must lie in [0, π/2]"));
        }
        if self.delta_phi_peak_rad < 0.0 {
            return Err(Error::input("switch.delta_phi_peak_rad", "must be >= 0"));
        }
        if self.pump_fwhm_ps <= 0.0 || self.signal_fwhm_ps <= 0.0 || self.walkoff_ps <= 0.0 {
            return Err(Error::input("switch", "pulse durations and walkoff must be > 0"));
        }
        if self.bin_separation_ps <= 0.0 {
            return Err(Error::input("switch.bin_separation_ps", "must be > 0"));
        }
        Ok(())
    }

    /// Switching efficiency of a bin whose center sits `offset_ps` behind the
    /// pump-sweep center.
    pub fn efficiency_at(&self, offset_ps: f64) -> f64 {
        let w = overlap_weight(self, offset_ps);
        switching_efficiency(self.theta_rad, self.delta_phi_peak_rad * w)
    }

    /// Per-bin efficiencies at the configured pump delay.
    pub fn response(&self) -> SwitchResponse {
        SwitchResponse {
            eta_t0: self.efficiency_at(self.pump_delay_ps),
            eta_t1: self.efficiency_at(self.pump_delay_ps - self.bin_separation_ps),
            phase: self.bin_phase_offset_rad,
        }
    }
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * core::f64::consts::FRAC_1_SQRT_2)
}

/// Fraction of the peak cross-phase accumulated by the signal pulse when the
/// pump sweep is centered `offset_ps` from the signal center.
///
/// A signal slice at local time `τ` accumulates the pump intensity
/// integrated over the sweep, `A(τ) = Φ((τ-d+W/2)/σp) - Φ((τ-d-W/2)/σp)`;
/// the result is `A` averaged over the signal intensity profile.
fn overlap_weight(model: &SwitchModel, offset_ps: f64) -> f64 {
    let sigma_p = model.pump_fwhm_ps / FWHM_PER_SIGMA;
    let sigma_s = model.signal_fwhm_ps / FWHM_PER_SIGMA;
    let half = 0.5 * model.walkoff_ps;
    let sweep = |tau: f64| {
        std_normal_cdf((tau - offset_ps + half) / sigma_p)
            - std_normal_cdf((tau - offset_ps - half) / sigma_p)
    };
    let span = SIGNAL_SPAN_SIGMAS * sigma_s;
    let h = 2.0 * span / OVERLAP_INTERVALS as f64;
    let norm = 1.0 / (sigma_s * libm::sqrt(2.0 * PI));
    let f = |k: usize| {
        let tau = -span + h * k as f64;
        let z = tau / sigma_s;
        norm * libm::exp(-0.5 * z * z) * sweep(tau)
    };
    let mut acc = f(0) + f(OVERLAP_INTERVALS);
    for k in 1..OVERLAP_INTERVALS {
        acc += if k % 2 == 1 { 4.0 } else { 2.0 } * f(k);
    }
    (acc * h / 3.0).clamp(0.0, 1.0)
}

/// Effective interaction weight `w ∈ [0, 1]` at the model's pump delay.
pub fn pump_overlap_fraction(model: &SwitchModel) -> f64 {
    overlap_weight(model, model.pump_delay_ps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bin {
    T0,
    T1,
}

/// Index into [`SwitchedState::amplitudes`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    T0H = 0,
    T0V = 1,
    T1H = 2,
    T1V = 3,
}

/// Signal after the switch, on the bin ⊗ polarization space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchedState {
    amplitudes: [Complex64; 4],
}

impl SwitchedState {
    pub fn new(amplitudes: [Complex64; 4]) -> Self {
        SwitchedState { amplitudes }
    }

    pub fn amplitudes(&self) -> &[Complex64; 4] {
        &self.amplitudes
    }

    pub fn amp(&self, mode: Mode) -> Complex64 {
        self.amplitudes[mode as usize]
    }

    pub fn population(&self, mode: Mode) -> f64 {
        self.amp(mode).norm_sqr()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }
}

/// Switching efficiency seen by each bin plus the imprinted phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchResponse {
    pub eta_t0: f64,
    pub eta_t1: f64,
    pub phase: f64,
}

impl SwitchResponse {
    pub fn apply(&self, q: &TimeBinQubit) -> Result<SwitchedState> {
        q.check_normalized()?;
        let rot = Complex64::new(libm::cos(self.phase), libm::sin(self.phase));
        let split = |a: Complex64, eta: f64| {
            let eta = eta.clamp(0.0, 1.0);
            (a * libm::sqrt(1.0 - eta), a * rot * libm::sqrt(eta))
        };
        let (t0h, t0v) = split(q.amp_t0(), self.eta_t0);
        let (t1h, t1v) = split(q.amp_t1(), self.eta_t1);
        Ok(SwitchedState::new([t0h, t0v, t1h, t1v]))
    }
}

/// Switches only `target`, using the pump delay relative to that bin.
pub fn apply_switch(q: &TimeBinQubit, model: &SwitchModel, target: Bin) -> Result<SwitchedState> {
    let eta = model.efficiency_at(model.pump_delay_ps);
    let (eta_t0, eta_t1) = match target {
        Bin::T0 => (eta, 0.0),
        Bin::T1 => (0.0, eta),
    };
    SwitchResponse {
        eta_t0,
        eta_t1,
        phase: model.bin_phase_offset_rad,
    }
    .apply(q)
}

/// Switch acting on both bins: the pump delay is referenced to `|t0⟩` and
/// `|t1⟩` sits `bin_separation_ps` later.
pub fn apply_pump(q: &TimeBinQubit, model: &SwitchModel) -> Result<SwitchedState> {
    model.response().apply(q)
}
