//! Weak-coherent-pulse source, loss budget and slow pump drift.

use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_2;

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::optics::SwitchModel;
use crate::stream;
use crate::{Error, Result};

/// Intensity class of a pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum IntensityClass {
    Signal = 0,
    Decoy = 1,
    Vacuum = 2,
}

impl IntensityClass {
    pub const ALL: [IntensityClass; 3] = [
        IntensityClass::Signal,
        IntensityClass::Decoy,
        IntensityClass::Vacuum,
    ];

    pub const fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub const fn name(self) -> &'static str {
        match self {
            IntensityClass::Signal => "signal",
            IntensityClass::Decoy => "decoy",
            IntensityClass::Vacuum => "vacuum",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SourceConfig {
    pub rep_rate_hz: f64,
    /// Mean photon number of signal pulses.
    pub mu: f64,
    /// Mean photon number of decoy pulses.
    pub nu: f64,
    pub vacuum_included: bool,
    /// Selection probabilities in [`IntensityClass`] order.
    pub class_probabilities: [f64; 3],
}

impl Default for SourceConfig {
    fn default() -> Self {
        SourceConfig {
            rep_rate_hz: 80e6,
            mu: 0.8,
            nu: 0.1,
            vacuum_included: true,
            class_probabilities: [0.7, 0.2, 0.1],
        }
    }
}

impl SourceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rep_rate_hz.is_finite() && self.rep_rate_hz > 0.0) {
            return Err(Error::input("source.rep_rate_hz", "must be > 0"));
        }
        if !(self.nu.is_finite() && self.mu.is_finite() && 0.0 <= self.nu && self.nu < self.mu) {
            return Err(Error::input("source.nu", "must satisfy 0 <= nu < mu"));
        }
        let p = &self.class_probabilities;
        if p.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::input("source.class_probabilities", "must be >= 0"));
        }
        if (p.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::input("source.class_probabilities", "must sum to 1"));
        }
        if !self.vacuum_included && p[IntensityClass::Vacuum.index()] != 0.0 {
            return Err(Error::input(
                "source.class_probabilities",
                "vacuum probability must be 0 when vacuum_included = false",
            ));
        }
        Ok(())
    }

    pub fn mean_photon_number(&self, class: IntensityClass) -> f64 {
        match class {
            IntensityClass::Signal => self.mu,
            IntensityClass::Decoy => self.nu,
            IntensityClass::Vacuum => 0.0,
        }
    }

    pub fn period_ps(&self) -> f64 {
        1e12 / self.rep_rate_hz
    }

    /// Draws an intensity class from one uniform variate.
    pub fn sample_class<R: Rng + ?Sized>(&self, rng: &mut R) -> IntensityClass {
        let u: f64 = rng.random();
        let p = &self.class_probabilities;
        if u < p[0] {
            IntensityClass::Signal
        } else if u < p[0] + p[1] || p[2] == 0.0 {
            IntensityClass::Decoy
        } else {
            IntensityClass::Vacuum
        }
    }
}

/// Poisson photon-number draw.
pub fn sample_photon_number<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> Result<u32> {
    Ok(PhotonNumber::new(mean)?.sample(rng))
}

/// Reusable Poisson sampler for one mean photon number.
#[derive(Debug, Clone, Copy)]
pub struct PhotonNumber(Option<Poisson<f64>>);

impl PhotonNumber {
    pub fn new(mean: f64) -> Result<Self> {
        if !(mean.is_finite() && mean >= 0.0) {
            return Err(Error::input("mean", "must be finite and >= 0"));
        }
        if mean == 0.0 {
            return Ok(PhotonNumber(None));
        }
        Poisson::new(mean)
            .map(|p| PhotonNumber(Some(p)))
            .map_err(|_| Error::input("mean", "rejected by Poisson sampler"))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        match &self.0 {
            None => 0,
            Some(p) => p.sample(rng) as u32,
        }
    }
}

/// `10^(-loss_db/10)`.
pub fn transmittance(loss_db: f64) -> Result<f64> {
    if !(loss_db.is_finite() && loss_db >= 0.0) {
        return Err(Error::input("loss_db", "must be finite and >= 0"));
    }
    Ok(libm::pow(10.0, -loss_db / 10.0))
}

/// Loss contributions in dB between Alice's attenuator and a click.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct LossBudget {
    pub channel_db: f64,
    pub coupling_db: f64,
    pub detector_db: f64,
    pub receiver_optics_db: f64,
}

impl Default for LossBudget {
    fn default() -> Self {
        LossBudget {
            channel_db: 0.45,
            coupling_db: 3.0,
            detector_db: 2.2,
            receiver_optics_db: 8.9,
        }
    }
}

impl LossBudget {
    pub fn validate(&self) -> Result<()> {
        let parts = [
            self.channel_db,
            self.coupling_db,
            self.detector_db,
            self.receiver_optics_db,
        ];
        if parts.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::input("budget", "every loss must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn total_db(&self) -> f64 {
        self.channel_db + self.coupling_db + self.detector_db + self.receiver_optics_db
    }

    /// Loss up to, but excluding, the detector.
    pub fn pre_detector_db(&self) -> f64 {
        self.channel_db + self.coupling_db + self.receiver_optics_db
    }
}

pub fn total_loss(budget: &LossBudget) -> f64 {
    budget.total_db()
}

/// Hourly random walk of the pump power and polarization.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct DriftModel {
    /// Relative pump-power step per hour.
    pub pump_power_rel_sigma: f64,
    /// Pump-polarization step per hour.
    pub pump_polarization_sigma_rad: f64,
    pub seed: u64,
}

impl Default for DriftModel {
    fn default() -> Self {
        DriftModel {
            pump_power_rel_sigma: 0.006,
            pump_polarization_sigma_rad: 0.006,
            seed: 1,
        }
    }
}

/// Walk excursions are reflected at this many per-hour steps.
pub const DRIFT_BOUND_SIGMAS: f64 = 5.0;

const DRIFT_STREAM: u64 = 0x64_72_69_66_74;

impl DriftModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.pump_power_rel_sigma >= 0.0 && self.pump_power_rel_sigma.is_finite()) {
            return Err(Error::input("drift.pump_power_rel_sigma", "must be >= 0"));
        }
        if !(self.pump_polarization_sigma_rad >= 0.0 && self.pump_polarization_sigma_rad.is_finite())
        {
            return Err(Error::input("drift.pump_polarization_sigma_rad", "must be >= 0"));
        }
        Ok(())
    }
}

/// Perturbation of the pump at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DriftState {
    /// Relative change of pump power (and hence of the peak phase).
    pub power_rel: f64,
    /// Rotation of the pump polarization.
    pub theta_offset_rad: f64,
}

impl DriftState {
    /// The switch as seen through this perturbation.
    pub fn apply(&self, switch: &SwitchModel) -> SwitchModel {
        SwitchModel {
            delta_phi_peak_rad: (switch.delta_phi_peak_rad * (1.0 + self.power_rel)).max(0.0),
            theta_rad: (switch.theta_rad + self.theta_offset_rad).clamp(0.0, FRAC_PI_2),
            ..*switch
        }
    }
}

/// Drift values on the integer-hour grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftTrace {
    hourly: Vec<DriftState>,
}

fn reflect(mut x: f64, bound: f64) -> f64 {
    if bound == 0.0 {
        return 0.0;
    }
    loop {
        if x > bound {
            x = 2.0 * bound - x;
        } else if x < -bound {
            x = -2.0 * bound - x;
        } else {
            return x;
        }
    }
}

impl DriftTrace {
    /// Walk covering `[0, hours]`. The first `n` steps do not depend on how
    /// long the trace is.
    pub fn generate(model: &DriftModel, hours: f64) -> Result<Self> {
        model.validate()?;
        if !(hours.is_finite() && hours >= 0.0) {
            return Err(Error::input("t_hours", "must be finite and >= 0"));
        }
        let steps = libm::ceil(hours) as usize;
        let mut rng = stream::block_rng(model.seed, DRIFT_STREAM);
        let sp = model.pump_power_rel_sigma;
        let st = model.pump_polarization_sigma_rad;
        let mut hourly = Vec::with_capacity(steps + 1);
        let mut cur = DriftState::default();
        hourly.push(cur);
        for _ in 0..steps {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            cur = DriftState {
                power_rel: reflect(cur.power_rel + sp * a, DRIFT_BOUND_SIGMAS * sp),
                theta_offset_rad: reflect(cur.theta_offset_rad + st * b, DRIFT_BOUND_SIGMAS * st),
            };
            hourly.push(cur);
        }
        Ok(DriftTrace { hourly })
    }

    pub fn hours(&self) -> f64 {
        (self.hourly.len() - 1) as f64
    }

    /// Linear interpolation between hourly points; clamps past the end.
    pub fn at(&self, t_hours: f64) -> DriftState {
        let last = self.hourly.len() - 1;
        let t = t_hours.clamp(0.0, last as f64);
        let k = (libm::floor(t) as usize).min(last);
        if k == last {
            return self.hourly[last];
        }
        let f = t - k as f64;
        let (a, b) = (self.hourly[k], self.hourly[k + 1]);
        DriftState {
            power_rel: a.power_rel + f * (b.power_rel - a.power_rel),
            theta_offset_rad: a.theta_offset_rad + f * (b.theta_offset_rad - a.theta_offset_rad),
        }
    }
}

pub fn drift_state(model: &DriftModel, t_hours: f64) -> Result<DriftState> {
    Ok(DriftTrace::generate(model, t_hours)?.at(t_hours))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::block_rng;

    #[test]
    fn zero_mean_never_emits() {
        let mut rng = block_rng(1, 0);
        assert!((0..1000).all(|_| sample_photon_number(0.0, &mut rng).unwrap() == 0));
        assert!(sample_photon_number(-0.1, &mut rng).is_err());
    }

    #[test]
    fn transmittance_examples() {
        assert_eq!(transmittance(0.0).unwrap(), 1.0);
        assert!((transmittance(3.0).unwrap() - 0.501_187_233_627_272_2).abs() < 1e-12);
        assert!((transmittance(14.6).unwrap() - 0.034_673_685_045_253_17).abs() < 1e-12);
        assert!(transmittance(-1.0).is_err());
    }

    #[test]
    fn loss_budget_totals() {
        let b = LossBudget::default();
        assert!((total_loss(&b) - 14.55).abs() < 1e-12);
        let far = LossBudget {
            channel_db: 12.0,
            ..b
        };
        assert!((total_loss(&far) - 26.1).abs() < 1e-12);
        let zero = LossBudget {
            channel_db: 0.0,
            coupling_db: 0.0,
            detector_db: 0.0,
            receiver_optics_db: 0.0,
        };
        assert_eq!(total_loss(&zero), 0.0);
    }

    #[test]
    fn source_validation() {
        assert!(SourceConfig::default().validate().is_ok());
        let bad = SourceConfig {
            nu: 0.9,
            ..SourceConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SourceConfig {
            class_probabilities: [0.7, 0.2, 0.2],
            ..SourceConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SourceConfig {
            vacuum_included: false,
            ..SourceConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn drift_starts_at_zero_and_respects_zero_sigma() {
        let m = DriftModel::default();
        assert_eq!(drift_state(&m, 0.0).unwrap(), DriftState::default());
        let still = DriftModel {
            pump_power_rel_sigma: 0.0,
            pump_polarization_sigma_rad: 0.0,
            seed: 9,
        };
        for t in [0.0, 0.5, 3.0, 27.9] {
            assert_eq!(drift_state(&still, t).unwrap(), DriftState::default());
        }
    }

    #[test]
    fn drift_is_reproducible_and_bounded() {
        let m = DriftModel {
            pump_power_rel_sigma: 0.02,
            pump_polarization_sigma_rad: 0.01,
            seed: 42,
        };
        let a = DriftTrace::generate(&m, 500.0).unwrap();
        let b = DriftTrace::generate(&m, 500.0).unwrap();
        assert_eq!(a, b);
        let short = DriftTrace::generate(&m, 10.0).unwrap();
        assert_eq!(short.at(7.3), a.at(7.3));
        for k in 0..=500 {
            let s = a.at(k as f64);
            assert!(s.power_rel.abs() <= 5.0 * 0.02 + 1e-15);
            assert!(s.theta_offset_rad.abs() <= 5.0 * 0.01 + 1e-15);
        }
    }

    #[test]
    fn drift_interpolates_linearly() {
        let m = DriftModel::default();
        let tr = DriftTrace::generate(&m, 3.0).unwrap();
        let (a, b) = (tr.at(1.0), tr.at(2.0));
        let mid = tr.at(1.25);
        assert!((mid.power_rel - (0.75 * a.power_rel + 0.25 * b.power_rel)).abs() < 1e-15);
    }

    #[test]
    fn reflection_folds_back_inside() {
        assert_eq!(reflect(1.2, 1.0), 0.8);
        assert_eq!(reflect(-1.5, 1.0), -0.5);
        assert!((reflect(3.5, 1.0) - -0.5).abs() < 1e-15);
    }
}
