//! From click counts to fidelities, decoy-state bounds and key rate.
//!
//! The key rate is the asymptotic decoy-state BB84 bound
//!
//! ```text
//! R >= q * ( -Q_mu f(E_mu) H2(E_mu) + Q_1 [1 - H2(e_1)] )
//! ```
//!
//! with `Q_1` and `e_1` bounded from signal, weak-decoy and vacuum
//! statistics.

use alloc::vec::Vec;

use crate::detection::{ClassCounts, SessionCounts};
use crate::error::RowLabel;
use crate::qubit::BasisId;
use crate::source::{IntensityClass, SourceConfig};
use crate::{Error, Result};

/// Error rate assigned to background clicks.
pub const BACKGROUND_ERROR_RATE: f64 = 0.5;
pub const DEFAULT_SIFTING: f64 = 0.5;
pub const DEFAULT_EC_EFFICIENCY: f64 = 1.22;

/// `P_{i,j}^{(α,β)}`, rows normalized over `j`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProbabilityMatrix {
    /// `[α][i][β][j]`.
    pub p: [[[[f64; 2]; 2]; 2]; 2],
    /// The counts each row was built from.
    pub counts: ClassCounts,
}

impl ProbabilityMatrix {
    /// Exact row fraction `N_{i,j} / Σ_k N_{i,k}` as `(numerator, denominator)`.
    pub fn fraction(&self, alpha: usize, i: usize, beta: usize, j: usize) -> (u64, u64) {
        let row = self.counts[alpha][i][beta];
        (row[j], row[0] + row[1])
    }

    /// 4×4 view with rows and columns ordered φ0, φ1, t0, t1.
    pub fn as_table(&self) -> [[f64; 4]; 4] {
        let mut t = [[0.0; 4]; 4];
        for a in 0..2 {
            for i in 0..2 {
                for b in 0..2 {
                    for j in 0..2 {
                        t[2 * a + i][2 * b + j] = self.p[a][i][b][j];
                    }
                }
            }
        }
        t
    }
}

pub fn probability_matrix(counts: &ClassCounts) -> Result<ProbabilityMatrix> {
    let mut p = [[[[0.0; 2]; 2]; 2]; 2];
    for (a, by_i) in counts.iter().enumerate() {
        for (i, by_b) in by_i.iter().enumerate() {
            for (b, row) in by_b.iter().enumerate() {
                let total = row[0] + row[1];
                if total == 0 {
                    return Err(Error::NoData {
                        row: RowLabel {
                            prepared: BasisId::from_bb84_index(a).unwrap_or(BasisId::Phase),
                            bit: i as u8,
                            measured: BasisId::from_bb84_index(b).unwrap_or(BasisId::Phase),
                        },
                    });
                }
                let t = total as f64;
                p[a][i][b] = [row[0] as f64 / t, row[1] as f64 / t];
            }
        }
    }
    Ok(ProbabilityMatrix {
        p,
        counts: *counts,
    })
}

/// State fidelities `F_i^{(α)}`, indexed `[α][i]`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Fidelities(pub [[f64; 2]; 2]);

impl Fidelities {
    pub fn phi0(&self) -> f64 {
        self.0[0][0]
    }
    pub fn phi1(&self) -> f64 {
        self.0[0][1]
    }
    pub fn t0(&self) -> f64 {
        self.0[1][0]
    }
    pub fn t1(&self) -> f64 {
        self.0[1][1]
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().flatten().sum::<f64>() / 4.0
    }
}

pub fn fidelities(p: &ProbabilityMatrix) -> Fidelities {
    let mut f = [[0.0; 2]; 2];
    for (a, row) in f.iter_mut().enumerate() {
        for (i, v) in row.iter_mut().enumerate() {
            *v = p.p[a][i][a][i];
        }
    }
    Fidelities(f)
}

/// `E = 1 - mean(F)`.
pub fn qber(f: &Fidelities) -> Result<f64> {
    if f.0.iter().flatten().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(Error::input("fidelity", "must lie in [0, 1]"));
    }
    Ok((1.0 - f.mean()).max(0.0))
}

/// `H₂(x) = -x log₂ x - (1-x) log₂(1-x)`, with `H₂(0) = H₂(1) = 0`.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::input("x", "must lie in [0, 1]"));
    }
    let term = |p: f64| if p > 0.0 { -p * libm::log2(p) } else { 0.0 };
    Ok(term(x) + term(1.0 - x))
}

/// Measured quantities feeding the decoy bound.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DecoyInputs {
    #[cfg_attr(feature = "serde", serde(rename = "Q_mu"))]
    pub q_mu: f64,
    #[cfg_attr(feature = "serde", serde(rename = "E_mu"))]
    pub e_mu: f64,
    #[cfg_attr(feature = "serde", serde(rename = "Q_nu"))]
    pub q_nu: f64,
    #[cfg_attr(feature = "serde", serde(rename = "E_nu"))]
    pub e_nu: f64,
    #[cfg_attr(feature = "serde", serde(rename = "Y0"))]
    pub y0: f64,
    pub mu: f64,
    pub nu: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BoundFlags {
    pub y1_clamped: bool,
    pub e1_clamped: bool,
    /// The single-photon yield bound is zero; no key can be extracted.
    pub no_single_photon_signal: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DecoyEstimates {
    #[cfg_attr(feature = "serde", serde(flatten))]
    pub inputs: DecoyInputs,
    #[cfg_attr(feature = "serde", serde(rename = "Y1_L"))]
    pub y1_lower: f64,
    #[cfg_attr(feature = "serde", serde(rename = "Q_1"))]
    pub q1_lower: f64,
    #[cfg_attr(feature = "serde", serde(rename = "e_1"))]
    pub e1_upper: f64,
    pub flags: BoundFlags,
}

/// Vacuum + weak-decoy bounds on the single-photon yield, gain and error.
pub fn decoy_bounds(inputs: &DecoyInputs) -> Result<DecoyEstimates> {
    let DecoyInputs {
        q_mu,
        e_mu,
        q_nu,
        e_nu,
        y0,
        mu,
        nu,
    } = *inputs;
    if !(mu.is_finite() && nu.is_finite() && 0.0 < nu && nu < mu) {
        return Err(Error::input("nu", "the weak-decoy bound needs 0 < nu < mu"));
    }
    for (name, v) in [("Q_mu", q_mu), ("E_mu", e_mu), ("Q_nu", q_nu), ("E_nu", e_nu), ("Y0", y0)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::input(name, "must lie in [0, 1]"));
        }
    }
    let mut flags = BoundFlags::default();
    let (em, en) = (libm::exp(mu), libm::exp(nu));
    let raw_y1 = mu / (mu * nu - nu * nu)
        * (q_nu * en - q_mu * em * (nu * nu) / (mu * mu) - (mu * mu - nu * nu) / (mu * mu) * y0);
    let y1 = if raw_y1.is_nan() { 0.0 } else { raw_y1 };
    let y1_lower = y1.clamp(0.0, 1.0);
    flags.y1_clamped = y1_lower != y1;
    if y1_lower <= 0.0 {
        flags.no_single_photon_signal = true;
        return Ok(DecoyEstimates {
            inputs: *inputs,
            y1_lower: 0.0,
            q1_lower: 0.0,
            e1_upper: 0.5,
            flags,
        });
    }
    let q1_lower = y1_lower * mu * libm::exp(-mu);
    let raw_e1 = (e_nu * q_nu * en - BACKGROUND_ERROR_RATE * y0) / (y1_lower * nu);
    let e1_upper = raw_e1.clamp(0.0, 0.5);
    flags.e1_clamped = e1_upper != raw_e1;
    Ok(DecoyEstimates {
        inputs: *inputs,
        y1_lower,
        q1_lower,
        e1_upper,
        flags,
    })
}

/// Error-correction inefficiency `f(E)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(untagged))]
pub enum ErrorCorrection {
    Constant(f64),
    /// `(E, f)` knots, interpolated linearly and held flat outside.
    Table(Vec<(f64, f64)>),
}

impl Default for ErrorCorrection {
    fn default() -> Self {
        ErrorCorrection::Constant(DEFAULT_EC_EFFICIENCY)
    }
}

impl ErrorCorrection {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            ErrorCorrection::Constant(f) => *f >= 1.0,
            ErrorCorrection::Table(knots) => {
                !knots.is_empty()
                    && knots.iter().all(|&(e, f)| (0.0..=0.5).contains(&e) && f >= 1.0)
                    && knots.windows(2).all(|w| w[0].0 < w[1].0)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::input("f", "needs f >= 1 (tables: sorted E in [0, 0.5])"))
        }
    }

    pub fn at(&self, e: f64) -> f64 {
        match self {
            ErrorCorrection::Constant(f) => *f,
            ErrorCorrection::Table(knots) => {
                let first = knots[0];
                if e <= first.0 {
                    return first.1;
                }
                for w in knots.windows(2) {
                    let ((e0, f0), (e1, f1)) = (w[0], w[1]);
                    if e <= e1 {
                        return f0 + (f1 - f0) * (e - e0) / (e1 - e0);
                    }
                }
                knots[knots.len() - 1].1
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct KeyRateParams {
    /// Sifting efficiency `q`.
    pub sifting: f64,
    pub error_correction: ErrorCorrection,
    pub rep_rate_hz: f64,
}

impl Default for KeyRateParams {
    fn default() -> Self {
        KeyRateParams {
            sifting: DEFAULT_SIFTING,
            error_correction: ErrorCorrection::default(),
            rep_rate_hz: 80e6,
        }
    }
}

impl KeyRateParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sifting > 0.0 && self.sifting <= 1.0) {
            return Err(Error::input("q", "must lie in (0, 1]"));
        }
        if !(self.rep_rate_hz.is_finite() && self.rep_rate_hz > 0.0) {
            return Err(Error::input("rep_rate_hz", "must be > 0"));
        }
        self.error_correction.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RateFlags {
    /// The bound was negative and the rate was set to zero.
    pub clamped_to_zero: bool,
    pub no_single_photon_signal: bool,
}

/// Secret key rate with every intermediate quantity.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KeyRateReport {
    pub q: f64,
    pub f: f64,
    #[cfg_attr(feature = "serde", serde(rename = "Q_mu"))]
    pub q_mu: f64,
    #[cfg_attr(feature = "serde", serde(rename = "E_mu"))]
    pub e_mu: f64,
    #[cfg_attr(feature = "serde", serde(rename = "Q_1"))]
    pub q_1: f64,
    #[cfg_attr(feature = "serde", serde(rename = "e_1"))]
    pub e_1: f64,
    #[cfg_attr(feature = "serde", serde(rename = "H2_E_mu"))]
    pub h2_e_mu: f64,
    #[cfg_attr(feature = "serde", serde(rename = "H2_e_1"))]
    pub h2_e_1: f64,
    /// `Q_mu f H2(E_mu)`.
    pub error_correction_cost: f64,
    /// `Q_1 [1 - H2(e_1)]`.
    pub single_photon_term: f64,
    /// Unclamped right-hand side of the bound, per pulse.
    pub bound_per_pulse: f64,
    #[cfg_attr(feature = "serde", serde(rename = "R_per_pulse"))]
    pub rate_per_pulse: f64,
    #[cfg_attr(feature = "serde", serde(rename = "R_bps"))]
    pub rate_per_second: f64,
    pub rep_rate_hz: f64,
    pub flags: RateFlags,
}

pub fn secret_key_rate(params: &KeyRateParams, est: &DecoyEstimates) -> Result<KeyRateReport> {
    params.validate()?;
    let q_mu = est.inputs.q_mu;
    let e_mu = est.inputs.e_mu;
    let f = params.error_correction.at(e_mu);
    let h2_e_mu = binary_entropy(e_mu)?;
    let h2_e_1 = binary_entropy(est.e1_upper.clamp(0.0, 1.0))?;
    let error_correction_cost = q_mu * f * h2_e_mu;
    let single_photon_term = est.q1_lower * (1.0 - h2_e_1);
    let bound = params.sifting * (single_photon_term - error_correction_cost);
    let no_signal = est.flags.no_single_photon_signal || est.q1_lower <= 0.0;
    let rate_per_pulse = if no_signal { 0.0 } else { bound.max(0.0) };
    Ok(KeyRateReport {
        q: params.sifting,
        f,
        q_mu,
        e_mu,
        q_1: est.q1_lower,
        e_1: est.e1_upper,
        h2_e_mu,
        h2_e_1,
        error_correction_cost,
        single_photon_term,
        bound_per_pulse: bound,
        rate_per_pulse,
        rate_per_second: rate_per_pulse * params.rep_rate_hz,
        rep_rate_hz: params.rep_rate_hz,
        flags: RateFlags {
            clamped_to_zero: !no_signal && bound < 0.0,
            no_single_photon_signal: no_signal,
        },
    })
}

/// Decoy inputs measured in a session: gains per class, QBERs from the
/// matched-basis fidelities and `Y0` from vacuum pulses.
pub fn decoy_inputs_from_counts(counts: &SessionCounts, source: &SourceConfig) -> Result<DecoyInputs> {
    let gain = |c: IntensityClass| {
        counts
            .gain(c)
            .ok_or(Error::Config("no pulses of a required intensity class were sent"))
    };
    let e_of = |c: IntensityClass| -> Result<f64> {
        qber(&fidelities(&probability_matrix(counts.class(c))?))
    };
    Ok(DecoyInputs {
        q_mu: gain(IntensityClass::Signal)?,
        e_mu: e_of(IntensityClass::Signal)?,
        q_nu: gain(IntensityClass::Decoy)?,
        e_nu: e_of(IntensityClass::Decoy)?,
        y0: gain(IntensityClass::Vacuum)?,
        mu: source.mu,
        nu: source.nu,
    })
}

/// The whole analysis chain on one session's counts.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Analysis {
    pub probability_matrix: ProbabilityMatrix,
    pub fidelities: Fidelities,
    pub decoy: DecoyEstimates,
    pub key_rate: KeyRateReport,
}

pub fn analyze(counts: &SessionCounts, source: &SourceConfig, params: &KeyRateParams) -> Result<Analysis> {
    let probability_matrix = probability_matrix(counts.class(IntensityClass::Signal))?;
    let fidelities = fidelities(&probability_matrix);
    let decoy = decoy_bounds(&decoy_inputs_from_counts(counts, source)?)?;
    let key_rate = secret_key_rate(params, &decoy)?;
    Ok(Analysis {
        probability_matrix,
        fidelities,
        decoy,
        key_rate,
    })
}

/// Expected statistics of a channel with total transmittance `eta`,
/// background yield `y0` and photon-number-independent misalignment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelModel {
    pub eta: f64,
    pub y0: f64,
    pub misalignment: f64,
}

impl ChannelModel {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.eta) || !(0.0..=1.0).contains(&self.y0) {
            return Err(Error::input("channel", "eta and y0 must lie in [0, 1]"));
        }
        if !(0.0..=0.5).contains(&self.misalignment) {
            return Err(Error::input("channel.misalignment", "must lie in [0, 0.5]"));
        }
        Ok(())
    }

    /// `Y_n = 1 - (1 - Y0)(1 - η)^n`.
    pub fn yield_n(&self, n: u32) -> f64 {
        1.0 - (1.0 - self.y0) * libm::pow(1.0 - self.eta, n as f64)
    }

    /// `e_n = (e0 Y0 + e_d (Y_n - Y0)) / Y_n`.
    pub fn error_n(&self, n: u32) -> f64 {
        let y = self.yield_n(n);
        if y == 0.0 {
            return BACKGROUND_ERROR_RATE;
        }
        (BACKGROUND_ERROR_RATE * self.y0 + self.misalignment * (y - self.y0)) / y
    }

    /// `Q_λ = 1 - (1 - Y0) e^{-λη}`.
    pub fn gain(&self, mean: f64) -> f64 {
        1.0 - (1.0 - self.y0) * libm::exp(-mean * self.eta)
    }

    /// `E_λ` such that `E_λ Q_λ = e0 Y0 + e_d (Q_λ - Y0)`.
    pub fn qber(&self, mean: f64) -> f64 {
        let q = self.gain(mean);
        if q == 0.0 {
            return BACKGROUND_ERROR_RATE;
        }
        (BACKGROUND_ERROR_RATE * self.y0 + self.misalignment * (q - self.y0)) / q
    }

    pub fn decoy_inputs(&self, mu: f64, nu: f64) -> DecoyInputs {
        DecoyInputs {
            q_mu: self.gain(mu),
            e_mu: self.qber(mu),
            q_nu: self.gain(nu),
            e_nu: self.qber(nu),
            y0: self.y0,
            mu,
            nu,
        }
    }

    pub fn key_rate(&self, mu: f64, nu: f64, params: &KeyRateParams) -> Result<KeyRateReport> {
        secret_key_rate(params, &decoy_bounds(&self.decoy_inputs(mu, nu))?)
    }
}

const GRID_POINTS: usize = 50;
const NU_TOLERANCE: f64 = 1e-4;

/// Decoy intensity in `[nu_min, nu_max]` maximizing the key-rate bound:
/// a 50-point grid, then golden-section refinement around the best point.
pub fn optimize_decoy_intensity(
    channel: &ChannelModel,
    mu: f64,
    nu_min: f64,
    nu_max: f64,
    params: &KeyRateParams,
) -> Result<f64> {
    channel.validate()?;
    params.validate()?;
    if !(nu_min.is_finite() && nu_max.is_finite() && 0.0 < nu_min && nu_min <= nu_max && nu_max < mu) {
        return Err(Error::input("nu bounds", "need 0 < nu_min <= nu_max < mu"));
    }
    if nu_min == nu_max {
        return Ok(nu_min);
    }
    let objective = |nu: f64| -> Result<f64> { Ok(channel.key_rate(mu, nu, params)?.bound_per_pulse) };
    let step = (nu_max - nu_min) / (GRID_POINTS - 1) as f64;
    let grid = |k: usize| if k + 1 == GRID_POINTS { nu_max } else { nu_min + step * k as f64 };
    let mut best = (0, f64::NEG_INFINITY);
    for k in 0..GRID_POINTS {
        let r = objective(grid(k))?;
        if r > best.1 {
            best = (k, r);
        }
    }
    let (mut lo, mut hi) = (grid(best.0.saturating_sub(1)), grid((best.0 + 1).min(GRID_POINTS - 1)));
    let inv_phi = (libm::sqrt(5.0) - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (objective(x1)?, objective(x2)?);
    while hi - lo > NU_TOLERANCE {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = objective(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = objective(x2)?;
        }
    }
    let mut candidate = (grid(best.0), best.1);
    for x in [lo, hi, 0.5 * (lo + hi)] {
        let r = objective(x)?;
        if r > candidate.1 {
            candidate = (x, r);
        }
    }
    Ok(candidate.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Rows in `(α, i, β)` order.
    fn table(rows: [[u64; 2]; 8]) -> ClassCounts {
        let mut c = ClassCounts::default();
        for (k, r) in rows.iter().enumerate() {
            c[k / 4][(k / 2) % 2][k % 2] = *r;
        }
        c
    }

    #[test]
    fn matrix_identity_and_uniform() {
        let mut rows = [[50u64, 50]; 8];
        for a in 0..2 {
            for i in 0..2 {
                rows[a * 4 + i * 2 + a] = if i == 0 { [100, 0] } else { [0, 100] };
            }
        }
        let p = probability_matrix(&table(rows)).unwrap();
        let f = fidelities(&p);
        assert!(f.0.iter().flatten().all(|&x| x == 1.0));
        assert_eq!(qber(&f).unwrap(), 0.0);
        assert_eq!(p.p[0][0][1], [0.5, 0.5]);
        assert_eq!(p.fraction(1, 1, 1, 1), (100, 100));

        let uniform = probability_matrix(&table([[7, 7]; 8])).unwrap();
        assert!(fidelities(&uniform).0.iter().flatten().all(|&x| x == 0.5));
    }

    #[test]
    fn empty_row_is_named() {
        let mut rows = [[1u64, 1]; 8];
        rows[4] = [0, 0];
        match probability_matrix(&table(rows)) {
            Err(Error::NoData { row }) => {
                assert_eq!(row.prepared, BasisId::Time);
                assert_eq!(row.bit, 0);
                assert_eq!(row.measured, BasisId::Phase);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn qber_examples() {
        assert!((qber(&Fidelities([[0.992; 2]; 2])).unwrap() - 0.008).abs() < 1e-15);
        assert!((qber(&Fidelities([[0.98, 0.98], [1.0, 1.0]])).unwrap() - 0.01).abs() < 1e-15);
        assert!(qber(&Fidelities([[1.2, 1.0], [1.0, 1.0]])).is_err());
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(binary_entropy(0.5).unwrap(), 1.0);
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        // -0.008 log2 0.008 - 0.992 log2 0.992
        assert!((binary_entropy(0.008).unwrap() - 0.067_221_544_758_306_86).abs() < 1e-12);
        assert!(binary_entropy(-0.1).is_err());
        assert!(binary_entropy(1.5).is_err());
    }

    #[test]
    fn no_signal_flags_zero_rate() {
        let inputs = DecoyInputs {
            q_mu: 0.0,
            e_mu: 0.0,
            q_nu: 0.0,
            e_nu: 0.0,
            y0: 0.0,
            mu: 0.8,
            nu: 0.1,
        };
        let est = decoy_bounds(&inputs).unwrap();
        assert!(est.flags.no_single_photon_signal);
        let r = secret_key_rate(&KeyRateParams::default(), &est).unwrap();
        assert_eq!(r.rate_per_pulse, 0.0);
        assert!(r.flags.no_single_photon_signal);
    }

    #[test]
    fn decoy_bound_input_validation() {
        let ok = ChannelModel {
            eta: 0.03,
            y0: 1e-6,
            misalignment: 0.01,
        }
        .decoy_inputs(0.8, 0.1);
        assert!(decoy_bounds(&DecoyInputs { nu: 0.0, ..ok }).is_err());
        assert!(decoy_bounds(&DecoyInputs { nu: 0.9, ..ok }).is_err());
        assert!(decoy_bounds(&DecoyInputs { q_mu: 1.5, ..ok }).is_err());
    }

    #[test]
    fn key_rate_hand_evaluation() {
        let est = DecoyEstimates {
            inputs: DecoyInputs {
                q_mu: 0.0274,
                e_mu: 0.008,
                q_nu: 0.0,
                e_nu: 0.0,
                y0: 0.0,
                mu: 0.8,
                nu: 0.1,
            },
            y1_lower: 0.0,
            q1_lower: 0.01247,
            e1_upper: 0.012,
            flags: BoundFlags::default(),
        };
        let r = secret_key_rate(&KeyRateParams::default(), &est).unwrap();
        // 0.5 * (0.01247 (1 - 0.0937779) - 0.0274 * 1.22 * 0.0672215)
        assert!((r.rate_per_pulse - 4.526_753_833e-3).abs() < 1e-12);
        assert!((r.rate_per_second - 362_140.306_64).abs() < 1e-3);

        let bad = DecoyEstimates {
            inputs: DecoyInputs {
                e_mu: 0.5,
                ..est.inputs
            },
            ..est
        };
        let r = secret_key_rate(&KeyRateParams::default(), &bad).unwrap();
        assert_eq!(r.rate_per_pulse, 0.0);
        assert!(r.flags.clamped_to_zero);
    }

    #[test]
    fn error_correction_table() {
        let t = ErrorCorrection::Table(alloc::vec![(0.01, 1.1), (0.05, 1.3)]);
        assert!(t.validate().is_ok());
        assert_eq!(t.at(0.0), 1.1);
        assert!((t.at(0.03) - 1.2).abs() < 1e-12);
        assert_eq!(t.at(0.2), 1.3);
        assert!(ErrorCorrection::Constant(0.9).validate().is_err());
    }

    #[test]
    fn degenerate_and_empty_decoy_intervals() {
        let ch = ChannelModel {
            eta: 0.035,
            y0: 1.6e-7,
            misalignment: 0.008,
        };
        let p = KeyRateParams::default();
        assert_eq!(optimize_decoy_intensity(&ch, 0.8, 0.2, 0.2, &p).unwrap(), 0.2);
        assert!(optimize_decoy_intensity(&ch, 0.8, 0.3, 0.2, &p).is_err());
        assert!(optimize_decoy_intensity(&ch, 0.8, 0.1, 0.9, &p).is_err());
    }
}
