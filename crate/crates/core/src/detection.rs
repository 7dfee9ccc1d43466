//! Bob's receiver and the per-block Monte Carlo driver.
//!
//! A photon that survives the channel meets a 50:50 beam splitter choosing
//! the basis. In the time basis the switched (`V`) and unswitched (`H`)
//! polarizations are read out directly. In the phase basis a second α-BBO
//! crystal delays the switched early bin onto the late bin and projects on
//! the diagonal polarizations; anything without an interference partner
//! exits either port with probability one half. A polarizing delayed
//! interferometer then turns polarization into one of two nanosecond slots
//! on the detector assigned to that basis.

use alloc::vec::Vec;
use core::ops::Range;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::optics::{Mode, SwitchModel, SwitchedState, SPEED_OF_LIGHT};
use crate::qubit::{BasisId, Bit, PreparationSetting};
use crate::source::{transmittance, IntensityClass, LossBudget, PhotonNumber, SourceConfig};
use crate::stream::mix64;
use crate::{Error, Result};

/// Path difference of the polarizing delayed interferometer.
pub const INTERFEROMETER_PATH_DIFFERENCE_M: f64 = 0.88;
/// Offset between the phase-basis and time-basis slot pairs.
pub const BASIS_SLOT_OFFSET_PS: f64 = 8000.0;

const DOUBLE_CLICK_KEY: u64 = 0xd0b1_e5c1_1c4b_0001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum DoubleClickPolicy {
    /// Keep the event with a uniformly random bit.
    #[default]
    RandomBit,
    Discard,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct DetectorModel {
    pub efficiency_db: f64,
    /// Per detector.
    pub dark_count_rate_hz: f64,
    pub jitter_sigma_ps: f64,
    pub window_ns: f64,
    pub dead_time_ns: f64,
    /// Probability that a detected signal photon is registered in the
    /// opposite window of its basis (polarization and recombination errors).
    pub misalignment: f64,
    /// Phase between the delayed early bin and the late bin at the
    /// phase-basis recombination crystal.
    pub recombination_phase_rad: f64,
    pub double_click: DoubleClickPolicy,
}

impl Default for DetectorModel {
    fn default() -> Self {
        DetectorModel {
            efficiency_db: 2.2,
            dark_count_rate_hz: 100.0,
            jitter_sigma_ps: 150.0,
            window_ns: 0.8,
            dead_time_ns: 50.0,
            misalignment: 0.0075,
            recombination_phase_rad: 0.0,
            double_click: DoubleClickPolicy::RandomBit,
        }
    }
}

impl DetectorModel {
    /// Lossless, noiseless, jitter-free detector.
    pub fn ideal() -> Self {
        DetectorModel {
            efficiency_db: 0.0,
            dark_count_rate_hz: 0.0,
            jitter_sigma_ps: 0.0,
            dead_time_ns: 0.0,
            misalignment: 0.0,
            ..DetectorModel::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.window_ns.is_finite() && self.window_ns > 0.0) {
            return Err(Error::input("detector.window_ns", "must be > 0"));
        }
        let non_negative = [
            ("detector.efficiency_db", self.efficiency_db),
            ("detector.dark_count_rate_hz", self.dark_count_rate_hz),
            ("detector.jitter_sigma_ps", self.jitter_sigma_ps),
            ("detector.dead_time_ns", self.dead_time_ns),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::input(name, "must be finite and >= 0"));
            }
        }
        if !(0.0..=0.5).contains(&self.misalignment) {
            return Err(Error::input("detector.misalignment", "must lie in [0, 0.5]"));
        }
        if !self.recombination_phase_rad.is_finite() {
            return Err(Error::input("detector.recombination_phase_rad", "must be finite"));
        }
        Ok(())
    }

    pub fn detection_probability(&self) -> Result<f64> {
        transmittance(self.efficiency_db)
    }

    /// Probability of at least one dark count inside one window.
    pub fn dark_probability_per_window(&self) -> f64 {
        -libm::expm1(-self.dark_count_rate_hz * self.window_ns * 1e-9)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum DetectorId {
    D0 = 0,
    D1 = 1,
}

impl DetectorId {
    pub fn for_basis(basis: BasisId) -> Result<Self> {
        match basis {
            BasisId::Time => Ok(DetectorId::D0),
            BasisId::Phase => Ok(DetectorId::D1),
            BasisId::Circular => Err(Error::input("basis", "the receiver has no circular-basis port")),
        }
    }

    pub const fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        match index {
            0 => Some(DetectorId::D0),
            1 => Some(DetectorId::D1),
            _ => None,
        }
    }
}

/// Slot centers within one repetition frame, indexed `[β][bit]`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SlotLayout {
    pub slot_ps: [[f64; 2]; 2],
}

impl Default for SlotLayout {
    fn default() -> Self {
        let delay = INTERFEROMETER_PATH_DIFFERENCE_M / SPEED_OF_LIGHT * 1e12;
        SlotLayout {
            slot_ps: [
                [BASIS_SLOT_OFFSET_PS, BASIS_SLOT_OFFSET_PS + delay],
                [0.0, delay],
            ],
        }
    }
}

impl SlotLayout {
    pub fn center(&self, basis: BasisId, bit: Bit) -> Result<f64> {
        DetectorId::for_basis(basis)?;
        Ok(self.slot_ps[basis.index()][bit.index()])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub detector: DetectorId,
    pub start_ps: f64,
    pub end_ps: f64,
    pub basis: BasisId,
    pub bit: Bit,
}

impl Window {
    pub fn contains(&self, detector: DetectorId, t_ps: f64) -> bool {
        self.detector == detector && self.start_ps <= t_ps && t_ps < self.end_ps
    }
}

/// Non-overlapping acceptance windows, one per `(basis, bit)` slot.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSet {
    windows: Vec<Window>,
}

impl WindowSet {
    pub fn new(windows: Vec<Window>) -> Result<Self> {
        for (k, a) in windows.iter().enumerate() {
            if !(a.start_ps.is_finite() && a.end_ps.is_finite() && a.start_ps < a.end_ps) {
                return Err(Error::Config("window bounds must be finite and increasing"));
            }
            for b in &windows[k + 1..] {
                if a.detector == b.detector && a.start_ps < b.end_ps && b.start_ps < a.end_ps {
                    return Err(Error::Config("acceptance windows overlap"));
                }
            }
        }
        Ok(WindowSet { windows })
    }

    /// Windows of width `window_ns` centered on every BB84 slot.
    pub fn from_layout(layout: &SlotLayout, window_ns: f64) -> Result<Self> {
        let half = 500.0 * window_ns;
        let mut windows = Vec::with_capacity(4);
        for basis in BasisId::BB84 {
            for bit in [Bit::Zero, Bit::One] {
                let c = layout.center(basis, bit)?;
                windows.push(Window {
                    detector: DetectorId::for_basis(basis)?,
                    start_ps: c - half,
                    end_ps: c + half,
                    basis,
                    bit,
                });
            }
        }
        Self::new(windows)
    }

    pub fn windows(&self) -> &[Window] {
        &self.windows
    }

    pub fn locate(&self, event: &ClickEvent) -> Option<&Window> {
        self.windows
            .iter()
            .find(|w| w.contains(event.detector, event.timestamp_ps))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Bit(Bit),
    NoClick,
    DoubleClick,
}

/// One time-to-digital-converter record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClickEvent {
    pub detector: DetectorId,
    /// Time since the start of the pulse's repetition frame.
    pub timestamp_ps: f64,
    pub pulse_index: u64,
}

/// Ideal single-photon probability of landing in the bit-0 window.
pub fn bit0_probability(state: &SwitchedState, basis: BasisId, recombination_phase: f64) -> Result<f64> {
    let norm = state.norm_sqr();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::InvalidState { norm_sqr: norm });
    }
    let p = match basis {
        BasisId::Time => state.population(Mode::T0V) + state.population(Mode::T1V),
        BasisId::Phase => {
            let rot = Complex64::new(libm::cos(recombination_phase), libm::sin(recombination_phase));
            let d = (state.amp(Mode::T0V) * rot + state.amp(Mode::T1H))
                * core::f64::consts::FRAC_1_SQRT_2;
            d.norm_sqr() + 0.5 * (state.population(Mode::T0H) + state.population(Mode::T1V))
        }
        BasisId::Circular => {
            return Err(Error::input("basis", "the receiver has no circular-basis port"))
        }
    };
    Ok((p / norm).clamp(0.0, 1.0))
}

/// Detector constants pre-evaluated for the per-pulse loop.
#[derive(Debug, Clone, Copy)]
pub struct Receiver {
    p_detect: f64,
    p_dark: f64,
    misalignment: f64,
}

impl Receiver {
    pub fn new(det: &DetectorModel) -> Result<Self> {
        det.validate()?;
        Ok(Receiver {
            p_detect: det.detection_probability()?,
            p_dark: det.dark_probability_per_window(),
            misalignment: det.misalignment,
        })
    }

    /// Outcome of `arrived` photons reaching the detectors of one basis,
    /// each landing in window 0 with ideal probability `p0`.
    pub fn register<R: Rng + ?Sized>(&self, arrived: u32, p0: f64, rng: &mut R) -> Outcome {
        let e = self.misalignment;
        let p0 = p0 * (1.0 - e) + (1.0 - p0) * e;
        let mut hits = [false; 2];
        for _ in 0..arrived {
            if rng.random::<f64>() < self.p_detect {
                let bit = if rng.random::<f64>() < p0 { 0 } else { 1 };
                hits[bit] = true;
            }
        }
        if self.p_dark > 0.0 {
            let pd = self.p_dark;
            let u: f64 = rng.random();
            let only = pd * (1.0 - pd);
            if u < only {
                hits[0] = true;
            } else if u < 2.0 * only {
                hits[1] = true;
            } else if u < 2.0 * only + pd * pd {
                hits = [true, true];
            }
        }
        match hits {
            [false, false] => Outcome::NoClick,
            [true, false] => Outcome::Bit(Bit::Zero),
            [false, true] => Outcome::Bit(Bit::One),
            [true, true] => Outcome::DoubleClick,
        }
    }
}

/// Measures one photon that reached Bob in `basis`.
pub fn measure<R: Rng + ?Sized>(
    state: &SwitchedState,
    basis: BasisId,
    det: &DetectorModel,
    rng: &mut R,
) -> Result<Outcome> {
    let p0 = bit0_probability(state, basis, det.recombination_phase_rad)?;
    Ok(Receiver::new(det)?.register(1, p0, rng))
}

/// Tags for `outcome`, sorted by timestamp.
pub fn to_time_tags<R: Rng + ?Sized>(
    outcome: Outcome,
    basis: BasisId,
    pulse_index: u64,
    det: &DetectorModel,
    layout: &SlotLayout,
    rng: &mut R,
) -> Result<Vec<ClickEvent>> {
    let detector = DetectorId::for_basis(basis)?;
    let bits: &[Bit] = match outcome {
        Outcome::NoClick => &[],
        Outcome::Bit(Bit::Zero) => &[Bit::Zero],
        Outcome::Bit(Bit::One) => &[Bit::One],
        Outcome::DoubleClick => &[Bit::Zero, Bit::One],
    };
    let jitter = if det.jitter_sigma_ps > 0.0 {
        Some(Normal::new(0.0, det.jitter_sigma_ps).map_err(|_| Error::input("detector.jitter_sigma_ps", "invalid"))?)
    } else {
        None
    };
    let mut tags = Vec::with_capacity(bits.len());
    for &bit in bits {
        let dt = jitter.map_or(0.0, |n| n.sample(rng));
        tags.push(ClickEvent {
            detector,
            timestamp_ps: layout.center(basis, bit)? + dt,
            pulse_index,
        });
    }
    tags.sort_by(|a, b| a.timestamp_ps.total_cmp(&b.timestamp_ps));
    Ok(tags)
}

/// Drops tags that arrive while their detector is still recovering.
#[derive(Debug, Clone)]
pub struct DeadTimeFilter {
    dead_ps: f64,
    period_ps: f64,
    last: [Option<f64>; 2],
}

impl DeadTimeFilter {
    pub fn new(dead_time_ns: f64, period_ps: f64) -> Self {
        DeadTimeFilter {
            dead_ps: dead_time_ns * 1e3,
            period_ps,
            last: [None; 2],
        }
    }

    /// Tags must be offered in time order per detector.
    pub fn admit(&mut self, event: &ClickEvent) -> bool {
        let t = event.pulse_index as f64 * self.period_ps + event.timestamp_ps;
        let slot = &mut self.last[event.detector.index()];
        match *slot {
            Some(prev) if t - prev < self.dead_ps => false,
            _ => {
                *slot = Some(t);
                true
            }
        }
    }
}

/// Count table for one intensity class, indexed `[α][i][β][j]`.
pub type ClassCounts = [[[[u64; 2]; 2]; 2]; 2];

/// Raw click statistics `N_{i,j}^{(α,β)}` per intensity class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SessionCounts {
    /// `[class][α][i][β][j]`.
    pub counts: [ClassCounts; 3],
    /// `[class][α][i]`.
    pub pulses_sent: [[[u64; 2]; 2]; 3],
    /// Pulses with both windows of one basis firing, before the
    /// double-click policy is applied.
    pub double_clicks: [u64; 3],
}

impl SessionCounts {
    pub fn merge(&mut self, other: &SessionCounts) {
        for c in 0..3 {
            for a in 0..2 {
                for i in 0..2 {
                    self.pulses_sent[c][a][i] += other.pulses_sent[c][a][i];
                    for b in 0..2 {
                        for j in 0..2 {
                            self.counts[c][a][i][b][j] += other.counts[c][a][i][b][j];
                        }
                    }
                }
            }
            self.double_clicks[c] += other.double_clicks[c];
        }
    }

    pub fn merged<'a>(parts: impl IntoIterator<Item = &'a SessionCounts>) -> SessionCounts {
        let mut total = SessionCounts::default();
        for p in parts {
            total.merge(p);
        }
        total
    }

    pub fn class(&self, class: IntensityClass) -> &ClassCounts {
        &self.counts[class.index()]
    }

    /// Sum over all intensity classes.
    pub fn all_classes(&self) -> ClassCounts {
        let mut out = ClassCounts::default();
        for c in &self.counts {
            for a in 0..2 {
                for i in 0..2 {
                    for b in 0..2 {
                        for j in 0..2 {
                            out[a][i][b][j] += c[a][i][b][j];
                        }
                    }
                }
            }
        }
        out
    }

    pub fn sent(&self, class: IntensityClass) -> u64 {
        self.pulses_sent[class.index()].iter().flatten().sum()
    }

    /// Registered clicks in either basis.
    pub fn clicks(&self, class: IntensityClass) -> u64 {
        self.class(class).iter().flatten().flatten().flatten().sum()
    }

    /// Fraction of pulses of `class` that produced a registered click.
    pub fn gain(&self, class: IntensityClass) -> Option<f64> {
        let n = self.sent(class);
        (n > 0).then(|| self.clicks(class) as f64 / n as f64)
    }

    /// Matched-basis clicks and how many of them disagree with Alice's bit.
    pub fn sifted(&self, class: IntensityClass) -> (u64, u64) {
        let c = self.class(class);
        let mut total = 0;
        let mut errors = 0;
        for a in 0..2 {
            for i in 0..2 {
                total += c[a][i][a][0] + c[a][i][a][1];
                errors += c[a][i][a][1 - i];
            }
        }
        (total, errors)
    }

    pub fn record_sent(&mut self, meta: &PulseMeta, n: u64) {
        self.pulses_sent[meta.class.index()][meta.basis.index()][meta.bit.index()] += n;
    }

    /// No row holds more clicks than pulses sent.
    pub fn is_consistent(&self) -> bool {
        (0..3).all(|c| {
            (0..2).all(|a| {
                (0..2).all(|i| {
                    let clicks: u64 = self.counts[c][a][i].iter().flatten().sum();
                    clicks <= self.pulses_sent[c][a][i]
                })
            })
        })
    }
}

/// What Alice knows about a pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PulseMeta {
    pub class: IntensityClass,
    pub basis: BasisId,
    pub bit: Bit,
}

/// Streaming window assignment. Tags of one pulse must arrive
/// contiguously; use [`accumulate`] for arbitrary order.
#[derive(Debug, Clone)]
pub struct Accumulator<'w> {
    windows: &'w WindowSet,
    policy: DoubleClickPolicy,
    counts: SessionCounts,
    pending: Option<Pending>,
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    pulse_index: u64,
    meta: PulseMeta,
    /// `[β][bit]`.
    hits: [[bool; 2]; 2],
}

impl<'w> Accumulator<'w> {
    pub fn new(windows: &'w WindowSet, policy: DoubleClickPolicy) -> Self {
        Accumulator {
            windows,
            policy,
            counts: SessionCounts::default(),
            pending: None,
        }
    }

    pub fn record_sent(&mut self, meta: &PulseMeta, n: u64) {
        self.counts.record_sent(meta, n);
    }

    pub fn push(&mut self, event: &ClickEvent, meta: PulseMeta) {
        let Some(w) = self.windows.locate(event) else {
            return;
        };
        let (b, j) = (w.basis.index(), w.bit.index());
        match &mut self.pending {
            Some(p) if p.pulse_index == event.pulse_index => p.hits[b][j] = true,
            _ => {
                self.flush();
                let mut hits = [[false; 2]; 2];
                hits[b][j] = true;
                self.pending = Some(Pending {
                    pulse_index: event.pulse_index,
                    meta,
                    hits,
                });
            }
        }
    }

    fn flush(&mut self) {
        let Some(p) = self.pending.take() else {
            return;
        };
        let fired: [bool; 2] = [p.hits[0][0] || p.hits[0][1], p.hits[1][0] || p.hits[1][1]];
        if fired[0] && fired[1] {
            // Basis ambiguous.
            return;
        }
        let beta = if fired[0] { 0 } else { 1 };
        let row = &mut self.counts.counts[p.meta.class.index()][p.meta.basis.index()]
            [p.meta.bit.index()][beta];
        match p.hits[beta] {
            [true, true] => {
                self.counts.double_clicks[p.meta.class.index()] += 1;
                if self.policy == DoubleClickPolicy::RandomBit {
                    let bit = (mix64(DOUBLE_CLICK_KEY ^ p.pulse_index) & 1) as usize;
                    row[bit] += 1;
                }
            }
            [true, false] => row[0] += 1,
            [false, true] => row[1] += 1,
            [false, false] => {}
        }
    }

    pub fn finish(mut self) -> SessionCounts {
        self.flush();
        self.counts
    }
}

/// Assigns an arbitrary-order tag stream to windows. Pulse counts are not
/// known from tags alone; `pulses_sent` stays zero.
pub fn accumulate<I>(tags: I, windows: &WindowSet, policy: DoubleClickPolicy) -> SessionCounts
where
    I: IntoIterator<Item = (ClickEvent, PulseMeta)>,
{
    let mut tags: Vec<_> = tags.into_iter().collect();
    tags.sort_by(|a, b| {
        a.0.pulse_index
            .cmp(&b.0.pulse_index)
            .then(a.0.timestamp_ps.total_cmp(&b.0.timestamp_ps))
    });
    let mut acc = Accumulator::new(windows, policy);
    for (ev, meta) in &tags {
        acc.push(ev, *meta);
    }
    acc.finish()
}

/// Everything between Alice's attenuator and the time tagger.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Apparatus {
    pub source: SourceConfig,
    pub budget: LossBudget,
    pub switch: SwitchModel,
    pub detector: DetectorModel,
    pub layout: SlotLayout,
}

impl Apparatus {
    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        self.budget.validate()?;
        self.switch.validate()?;
        self.detector.validate()?;
        self.windows().map(|_| ())
    }

    pub fn windows(&self) -> Result<WindowSet> {
        WindowSet::from_layout(&self.layout, self.detector.window_ns)
    }
}

/// Monte Carlo of pulses `pulses` for one preparation setting.
pub fn simulate_block<R: Rng + ?Sized>(
    prep: &PreparationSetting,
    pulses: Range<u64>,
    app: &Apparatus,
    rng: &mut R,
) -> Result<SessionCounts> {
    simulate_block_with(prep, pulses, app, rng, |_, _| {})
}

/// [`simulate_block`] that also reports every tag that survives dead time.
pub fn simulate_block_with<R, F>(
    prep: &PreparationSetting,
    pulses: Range<u64>,
    app: &Apparatus,
    rng: &mut R,
    mut on_tag: F,
) -> Result<SessionCounts>
where
    R: Rng + ?Sized,
    F: FnMut(&ClickEvent, &PulseMeta),
{
    app.validate()?;
    let windows = app.windows()?;
    let receiver = Receiver::new(&app.detector)?;
    let state = app.switch.response().apply(&prep.state()?)?;
    let psi = app.detector.recombination_phase_rad;
    let p0 = [
        bit0_probability(&state, BasisId::Phase, psi)?,
        bit0_probability(&state, BasisId::Time, psi)?,
    ];
    let t_pre = transmittance(app.budget.pre_detector_db())?;
    let photons = [
        PhotonNumber::new(app.source.mu)?,
        PhotonNumber::new(app.source.nu)?,
        PhotonNumber::new(0.0)?,
    ];
    let mut dead = DeadTimeFilter::new(app.detector.dead_time_ns, app.source.period_ps());
    let mut acc = Accumulator::new(&windows, app.detector.double_click);

    for index in pulses {
        let class = app.source.sample_class(rng);
        let meta = PulseMeta {
            class,
            basis: prep.basis,
            bit: prep.bit,
        };
        acc.record_sent(&meta, 1);
        let emitted = photons[class.index()].sample(rng);
        let mut arrived = 0;
        for _ in 0..emitted {
            if rng.random::<f64>() < t_pre {
                arrived += 1;
            }
        }
        let basis = if rng.random::<bool>() {
            BasisId::Time
        } else {
            BasisId::Phase
        };
        let outcome = receiver.register(arrived, p0[basis.index()], rng);
        if outcome == Outcome::NoClick {
            continue;
        }
        for tag in to_time_tags(outcome, basis, index, &app.detector, &app.layout, rng)? {
            if dead.admit(&tag) {
                on_tag(&tag, &meta);
                acc.push(&tag, meta);
            }
        }
    }
    Ok(acc.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::apply_pump;
    use crate::qubit::{basis_state, TimeBinQubit};
    use crate::stream::block_rng;

    fn ideal_state(q: &TimeBinQubit) -> SwitchedState {
        apply_pump(q, &SwitchModel::default()).unwrap()
    }

    #[test]
    fn matched_basis_is_deterministic_when_ideal() {
        let det = DetectorModel::ideal();
        let mut rng = block_rng(3, 0);
        for basis in BasisId::BB84 {
            for bit in [Bit::Zero, Bit::One] {
                let s = ideal_state(&basis_state(basis, bit));
                for _ in 0..1000 {
                    assert_eq!(measure(&s, basis, &det, &mut rng).unwrap(), Outcome::Bit(bit));
                }
            }
        }
    }

    #[test]
    fn circular_basis_has_no_port() {
        let s = ideal_state(&TimeBinQubit::T0);
        let mut rng = block_rng(3, 0);
        assert!(measure(&s, BasisId::Circular, &DetectorModel::ideal(), &mut rng).is_err());
    }

    #[test]
    fn recombination_phase_rotates_phase_readout() {
        let s = ideal_state(&basis_state(BasisId::Phase, Bit::Zero));
        assert!((bit0_probability(&s, BasisId::Phase, 0.0).unwrap() - 1.0).abs() < 1e-12);
        assert!(bit0_probability(&s, BasisId::Phase, core::f64::consts::PI).unwrap() < 1e-12);
        let half = bit0_probability(&s, BasisId::Phase, core::f64::consts::FRAC_PI_2).unwrap();
        assert!((half - 0.5).abs() < 1e-12);
    }

    #[test]
    fn unswitched_early_bin_is_uninformative_in_phase_basis() {
        let off = SwitchModel {
            pump_delay_ps: 100.0,
            ..SwitchModel::default()
        };
        for bit in [Bit::Zero, Bit::One] {
            let s = apply_pump(&basis_state(BasisId::Phase, bit), &off).unwrap();
            assert!((bit0_probability(&s, BasisId::Phase, 0.0).unwrap() - 0.5).abs() < 1e-12);
        }
        // In the time basis the unswitched early bin reads as the late bin.
        let s = apply_pump(&TimeBinQubit::T0, &off).unwrap();
        assert!(bit0_probability(&s, BasisId::Time, 0.0).unwrap() < 1e-12);
    }

    #[test]
    fn time_tags_at_slot_centers() {
        let det = DetectorModel {
            jitter_sigma_ps: 0.0,
            ..DetectorModel::default()
        };
        let layout = SlotLayout::default();
        let mut rng = block_rng(1, 1);
        let t = to_time_tags(Outcome::Bit(Bit::Zero), BasisId::Time, 5, &det, &layout, &mut rng).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].timestamp_ps, layout.center(BasisId::Time, Bit::Zero).unwrap());
        assert_eq!(t[0].detector, DetectorId::D0);
        let sep = layout.slot_ps[1][1] - layout.slot_ps[1][0];
        assert!((sep - 2_935.364_037_743_738).abs() < 1e-6);
        let t = to_time_tags(Outcome::DoubleClick, BasisId::Phase, 5, &det, &layout, &mut rng).unwrap();
        assert_eq!(t.len(), 2);
        assert!(to_time_tags(Outcome::NoClick, BasisId::Phase, 5, &det, &layout, &mut rng)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn overlapping_windows_rejected() {
        let w = |s: f64, e: f64| Window {
            detector: DetectorId::D0,
            start_ps: s,
            end_ps: e,
            basis: BasisId::Time,
            bit: Bit::Zero,
        };
        assert!(WindowSet::new(alloc::vec![w(0.0, 10.0), w(5.0, 20.0)]).is_err());
        assert!(WindowSet::new(alloc::vec![w(0.0, 10.0), w(10.0, 20.0)]).is_ok());
        assert!(WindowSet::from_layout(&SlotLayout::default(), 3.0).is_err());
    }

    #[test]
    fn accumulate_edge_cases() {
        let windows = WindowSet::from_layout(&SlotLayout::default(), 0.8).unwrap();
        let empty = accumulate(core::iter::empty(), &windows, DoubleClickPolicy::RandomBit);
        assert_eq!(empty, SessionCounts::default());

        let meta = PulseMeta {
            class: IntensityClass::Signal,
            basis: BasisId::Time,
            bit: Bit::One,
        };
        let tag = ClickEvent {
            detector: DetectorId::D0,
            timestamp_ps: 2935.0 + 100.0,
            pulse_index: 9,
        };
        let c = accumulate([(tag, meta)], &windows, DoubleClickPolicy::RandomBit);
        assert_eq!(c.counts[0][1][1][1][1], 1);
        assert_eq!(c.clicks(IntensityClass::Signal), 1);

        let outside = ClickEvent {
            timestamp_ps: 2935.0 + 500.0,
            ..tag
        };
        let c = accumulate([(outside, meta)], &windows, DoubleClickPolicy::RandomBit);
        assert_eq!(c.clicks(IntensityClass::Signal), 0);
    }

    #[test]
    fn double_click_policies() {
        let windows = WindowSet::from_layout(&SlotLayout::default(), 0.8).unwrap();
        let meta = PulseMeta {
            class: IntensityClass::Decoy,
            basis: BasisId::Phase,
            bit: Bit::Zero,
        };
        let tags = |p| {
            [
                (
                    ClickEvent {
                        detector: DetectorId::D1,
                        timestamp_ps: 8000.0,
                        pulse_index: p,
                    },
                    meta,
                ),
                (
                    ClickEvent {
                        detector: DetectorId::D1,
                        timestamp_ps: 10935.0,
                        pulse_index: p,
                    },
                    meta,
                ),
            ]
        };
        let all: Vec<_> = (0..2000).flat_map(tags).collect();
        let kept = accumulate(all.clone(), &windows, DoubleClickPolicy::RandomBit);
        assert_eq!(kept.double_clicks[1], 2000);
        let row = kept.counts[1][0][0][0];
        assert_eq!(row[0] + row[1], 2000);
        assert!(row[0] > 850 && row[1] > 850);
        let dropped = accumulate(all, &windows, DoubleClickPolicy::Discard);
        assert_eq!(dropped.clicks(IntensityClass::Decoy), 0);
        assert_eq!(dropped.double_clicks[1], 2000);
    }

    #[test]
    fn dead_time_blocks_following_pulses() {
        let mut f = DeadTimeFilter::new(50.0, 12_500.0);
        let ev = |p, t| ClickEvent {
            detector: DetectorId::D0,
            timestamp_ps: t,
            pulse_index: p,
        };
        assert!(f.admit(&ev(0, 0.0)));
        assert!(!f.admit(&ev(0, 2935.0)));
        assert!(!f.admit(&ev(3, 0.0)));
        assert!(f.admit(&ev(4, 0.0)));
        // The other detector is independent.
        assert!(f.admit(&ClickEvent {
            detector: DetectorId::D1,
            ..ev(4, 100.0)
        }));
    }

    #[test]
    fn zero_pulses_give_zero_counts() {
        let mut rng = block_rng(1, 2);
        let prep = PreparationSetting::BB84[0];
        let c = simulate_block(&prep, 0..0, &Apparatus::default(), &mut rng).unwrap();
        assert_eq!(c, SessionCounts::default());
    }

    #[test]
    fn block_is_deterministic_and_consistent() {
        let prep = PreparationSetting::BB84[3];
        let app = Apparatus::default();
        let a = simulate_block(&prep, 0..200_000, &app, &mut block_rng(5, 1)).unwrap();
        let b = simulate_block(&prep, 0..200_000, &app, &mut block_rng(5, 1)).unwrap();
        assert_eq!(a, b);
        assert!(a.is_consistent());
        assert_eq!(a.sent(IntensityClass::Signal) + a.sent(IntensityClass::Decoy) + a.sent(IntensityClass::Vacuum), 200_000);
    }

    #[test]
    fn dark_probability_matches_rate() {
        let d = DetectorModel::default();
        assert!((d.dark_probability_per_window() - 8.0e-8).abs() < 1e-13);
    }
}
