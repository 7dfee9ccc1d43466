//! Orchestration of the simulated measurements.
//!
//! Every run is split into blocks of at most `run.block_size` pulses per
//! preparation setting. A block's random stream is addressed by
//! `(experiment kind, point, setting, block)` and its pulses carry global
//! indices `setting · N + offset`, so results do not depend on how blocks
//! are scheduled across threads.

use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tbqkd_core::analysis::{
    analyze, decoy_bounds, fidelities, optimize_decoy_intensity, probability_matrix, qber, secret_key_rate,
    Analysis, ChannelModel, DecoyInputs, KeyRateParams,
};
use tbqkd_core::detection::{simulate_block_with, Apparatus, ClickEvent, PulseMeta, SessionCounts};
use tbqkd_core::qubit::{BasisId, Bit, PreparationSetting};
use tbqkd_core::source::{transmittance, DriftTrace, IntensityClass};
use tbqkd_core::stream::{block_rng, stream_id};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::report::SweepResult;

const KIND_LOSS: u64 = 1;
const KIND_SCAN: u64 = 2;
const KIND_STABILITY: u64 = 3;
const KIND_BOOTSTRAP: u64 = 4;

/// A registered click and what Alice sent.
pub type TaggedClick = (ClickEvent, PulseMeta);

/// Pulses of `settings`, `pulses` per setting, in parallel blocks.
pub fn simulate(
    app: &Apparatus,
    seed: u64,
    label: [u64; 2],
    settings: &[PreparationSetting],
    pulses: u64,
    block_size: u64,
) -> Result<SessionCounts> {
    Ok(run_blocks(app, seed, label, settings, pulses, block_size, false)?.0)
}

/// [`simulate`] that also returns every registered tag, ordered by pulse.
pub fn simulate_with_tags(
    app: &Apparatus,
    seed: u64,
    label: [u64; 2],
    settings: &[PreparationSetting],
    pulses: u64,
    block_size: u64,
) -> Result<(SessionCounts, Vec<TaggedClick>)> {
    run_blocks(app, seed, label, settings, pulses, block_size, true)
}

fn run_blocks(
    app: &Apparatus,
    seed: u64,
    label: [u64; 2],
    settings: &[PreparationSetting],
    pulses: u64,
    block_size: u64,
    keep_tags: bool,
) -> Result<(SessionCounts, Vec<TaggedClick>)> {
    if block_size == 0 {
        return Err(Error::config("run.block_size", "must be > 0"));
    }
    let mut jobs = Vec::new();
    for prep in settings {
        let s = prep.index() as u64;
        let base = s * pulses;
        let mut start = 0;
        let mut b = 0;
        while start < pulses {
            let end = pulses.min(start + block_size);
            jobs.push((prep, s, b, base + start..base + end));
            start = end;
            b += 1;
        }
    }
    let parts: Vec<(SessionCounts, Vec<TaggedClick>)> = jobs
        .into_par_iter()
        .map(|(prep, s, b, range)| {
            let mut rng = block_rng(seed, stream_id(&[label[0], label[1], s, b]));
            let mut tags = Vec::new();
            let counts = simulate_block_with(prep, range, app, &mut rng, |ev, meta| {
                if keep_tags {
                    tags.push((*ev, *meta));
                }
            })?;
            Ok((counts, tags))
        })
        .collect::<Result<_>>()?;
    let counts = SessionCounts::merged(parts.iter().map(|p| &p.0));
    let mut tags: Vec<TaggedClick> = parts.into_iter().flat_map(|p| p.1).collect();
    tags.sort_by_key(|t| t.0.pulse_index);
    Ok((counts, tags))
}

/// Expected statistics of the configured apparatus, used for the
/// analytic key-rate column and the decoy optimizer.
pub fn channel_model(cfg: &ExperimentConfig) -> Result<ChannelModel> {
    let det = &cfg.detector;
    let p_dark = det.dark_probability_per_window();
    Ok(ChannelModel {
        eta: transmittance(cfg.loss_budget().total_db())?,
        // Two windows per measurement basis.
        y0: 1.0 - (1.0 - p_dark) * (1.0 - p_dark),
        misalignment: det.misalignment,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub seed: u64,
    pub pulses_per_setting: u64,
    pub total_loss_db: f64,
    /// Matched-basis share of registered signal clicks.
    pub matched_basis_fraction: f64,
    pub counts: SessionCounts,
    pub analysis: Analysis,
}

pub struct Session {
    pub counts: SessionCounts,
    pub analysis: Analysis,
    pub row: SweepResult,
    pub tags: Vec<TaggedClick>,
}

impl Session {
    pub fn report(&self, cfg: &ExperimentConfig) -> SessionReport {
        let (sifted, _) = self.counts.sifted(IntensityClass::Signal);
        let clicks = self.counts.clicks(IntensityClass::Signal);
        SessionReport {
            seed: cfg.run.seed,
            pulses_per_setting: cfg.run.pulses_per_setting,
            total_loss_db: cfg.loss_budget().total_db(),
            matched_basis_fraction: if clicks == 0 { 0.0 } else { sifted as f64 / clicks as f64 },
            counts: self.counts,
            analysis: self.analysis.clone(),
        }
    }
}

/// All four preparation settings at the configured loss.
pub fn run_session(cfg: &ExperimentConfig) -> Result<Session> {
    session_at(cfg, 0, false)
}

/// [`run_session`] keeping the time tags for a dump.
pub fn run_session_with_tags(cfg: &ExperimentConfig) -> Result<Session> {
    session_at(cfg, 0, true)
}

fn session_at(cfg: &ExperimentConfig, point: u64, keep_tags: bool) -> Result<Session> {
    cfg.validate()?;
    let (counts, tags) = run_blocks(
        &cfg.apparatus(),
        cfg.run.seed,
        [KIND_LOSS, point],
        &PreparationSetting::BB84,
        cfg.run.pulses_per_setting,
        cfg.run.block_size,
        keep_tags,
    )?;
    let analysis = analyze(&counts, &cfg.source, &cfg.key_rate_params())?;
    let mut row = SweepResult::new(LOSS_COLUMNS[0], &LOSS_COLUMNS);
    row.push(loss_row(cfg, point, &counts, &analysis)?);
    Ok(Session {
        counts,
        analysis,
        row,
        tags,
    })
}

pub const LOSS_COLUMNS: [&str; 17] = [
    "channel_db",
    "total_db",
    "Q_mu",
    "E_mu",
    "Q_nu",
    "E_nu",
    "Y0",
    "Y1_L",
    "e_1",
    "Q_1",
    "H2_E_mu",
    "H2_e_1",
    "R_per_pulse",
    "R_bps",
    "R_bps_sigma",
    "R_bps_model",
    "nu_opt",
];

fn loss_row(cfg: &ExperimentConfig, point: u64, counts: &SessionCounts, a: &Analysis) -> Result<Vec<f64>> {
    let d = &a.decoy;
    let k = &a.key_rate;
    let params = cfg.key_rate_params();
    let model = channel_model(cfg)?;
    let model_rate = model.key_rate(cfg.source.mu, cfg.source.nu, &params)?.rate_per_second;
    let nu_opt = optimize_decoy_intensity(&model, cfg.source.mu, cfg.analysis.nu_min, cfg.analysis.nu_max, &params)?;
    let sigma = rate_sigma(cfg, point, counts, &d.inputs, &params);
    Ok(vec![
        cfg.budget.channel_db,
        cfg.loss_budget().total_db(),
        d.inputs.q_mu,
        d.inputs.e_mu,
        d.inputs.q_nu,
        d.inputs.e_nu,
        d.inputs.y0,
        d.y1_lower,
        d.e1_upper,
        d.q1_lower,
        k.h2_e_mu,
        k.h2_e_1,
        k.rate_per_pulse,
        k.rate_per_second,
        sigma,
        model_rate,
        nu_opt,
    ])
}

/// Standard deviation of the measured key rate under binomial resampling of
/// the gains, error rates and vacuum yield.
fn rate_sigma(
    cfg: &ExperimentConfig,
    point: u64,
    counts: &SessionCounts,
    inputs: &DecoyInputs,
    params: &KeyRateParams,
) -> f64 {
    let draws = cfg.analysis.bootstrap;
    if draws < 2 {
        return 0.0;
    }
    let mut rng = block_rng(cfg.run.seed, stream_id(&[KIND_BOOTSTRAP, point]));
    let mut resample = |n: u64, p: f64| -> f64 {
        if n == 0 {
            return p;
        }
        let p = p.clamp(0.0, 1.0);
        Binomial::new(n, p).map(|d| d.sample(&mut rng) as f64 / n as f64).unwrap_or(p)
    };
    let n_mu = counts.sent(IntensityClass::Signal);
    let n_nu = counts.sent(IntensityClass::Decoy);
    let n_vac = counts.sent(IntensityClass::Vacuum);
    let s_mu = counts.sifted(IntensityClass::Signal).0;
    let s_nu = counts.sifted(IntensityClass::Decoy).0;
    let rates: Vec<f64> = (0..draws)
        .map(|_| {
            let x = DecoyInputs {
                q_mu: resample(n_mu, inputs.q_mu),
                e_mu: resample(s_mu, inputs.e_mu),
                q_nu: resample(n_nu, inputs.q_nu),
                e_nu: resample(s_nu, inputs.e_nu),
                y0: resample(n_vac, inputs.y0),
                ..*inputs
            };
            decoy_bounds(&x)
                .and_then(|est| secret_key_rate(params, &est))
                .map(|r| r.rate_per_second)
                .unwrap_or(0.0)
        })
        .collect();
    let mean = rates.iter().sum::<f64>() / rates.len() as f64;
    let var = rates.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (rates.len() - 1) as f64;
    var.sqrt()
}

/// One full session per channel loss. Rows are sorted by loss; point `k` of
/// the sorted list uses the same random streams as a session at point `k`.
pub fn run_loss_sweep(cfg: &ExperimentConfig, channel_db: &[f64]) -> Result<SweepResult> {
    cfg.validate()?;
    if channel_db.is_empty() {
        return Err(Error::config("sweep.channel_db", "needs at least one loss"));
    }
    if channel_db.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::config("sweep.channel_db", "losses must be finite and >= 0"));
    }
    let mut losses = channel_db.to_vec();
    losses.sort_by(f64::total_cmp);
    let rows = losses
        .par_iter()
        .enumerate()
        .map(|(k, &db)| {
            let mut c = cfg.clone();
            c.budget.channel_db = db;
            let s = session_at(&c, k as u64, false)?;
            Ok(s.row.rows.into_iter().next().expect("one row"))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = SweepResult::new(LOSS_COLUMNS[0], &LOSS_COLUMNS);
    for r in rows {
        out.push(r);
    }
    if let Some(z) = zero_crossing(cfg)? {
        out.summary.insert("model_zero_rate_channel_db".into(), z);
    }
    Ok(out)
}

/// Channel loss at which the analytic key rate first vanishes, by bisection
/// between 0 and 100 dB.
pub fn zero_crossing(cfg: &ExperimentConfig) -> Result<Option<f64>> {
    let params = cfg.key_rate_params();
    let rate = |db: f64| -> Result<f64> {
        let mut c = cfg.clone();
        c.budget.channel_db = db;
        Ok(channel_model(&c)?.key_rate(cfg.source.mu, cfg.source.nu, &params)?.rate_per_pulse)
    };
    let (mut lo, mut hi) = (0.0, 100.0);
    if rate(lo)? <= 0.0 || rate(hi)? > 0.0 {
        return Ok(None);
    }
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        if rate(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

pub const SCAN_COLUMNS: [&str; 7] = ["delay_ps", "F_t0", "F_t1", "eta_t0", "eta_t1", "N_t0", "N_t1"];

/// Time-basis fidelities of `|t0⟩` and `|t1⟩` versus pump delay.
///
/// Summary entries: `center_t0_ps`, `center_t1_ps` and `separation_ps` from
/// the half-maximum edges of the switched-fraction curves `F_t0` and
/// `1 - F_t1`, the same from the analytic efficiencies (`*_model`), and the
/// plateau maxima.
pub fn run_pump_delay_scan(cfg: &ExperimentConfig, delays_ps: &[f64]) -> Result<SweepResult> {
    cfg.validate()?;
    if delays_ps.iter().any(|d| !d.is_finite()) {
        return Err(Error::config("scan", "delays must be finite"));
    }
    if delays_ps.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config("scan", "delays must be strictly increasing"));
    }
    let settings = [
        PreparationSetting::for_state(BasisId::Time, Bit::Zero)?,
        PreparationSetting::for_state(BasisId::Time, Bit::One)?,
    ];
    let rows = delays_ps
        .par_iter()
        .enumerate()
        .map(|(k, &d)| {
            let mut app = cfg.apparatus();
            app.switch.pump_delay_ps = d;
            let counts = simulate(
                &app,
                cfg.run.seed,
                [KIND_SCAN, k as u64],
                &settings,
                cfg.scan.pulses_per_setting,
                cfg.run.block_size,
            )?;
            let c = counts.all_classes();
            let t = BasisId::Time.index();
            let row0 = c[t][0][t];
            let row1 = c[t][1][t];
            let (n0, n1) = (row0[0] + row0[1], row1[0] + row1[1]);
            if n0 == 0 || n1 == 0 {
                return Err(Error::Model(tbqkd_core::Error::Config(
                    "no time-basis clicks at a scan point; raise scan.pulses_per_setting",
                )));
            }
            let r = app.switch.response();
            Ok(vec![
                d,
                row0[0] as f64 / n0 as f64,
                row1[1] as f64 / n1 as f64,
                r.eta_t0,
                r.eta_t1,
                n0 as f64,
                n1 as f64,
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = SweepResult::new(SCAN_COLUMNS[0], &SCAN_COLUMNS);
    for r in rows {
        out.push(r);
    }
    if out.rows.len() >= 3 {
        let x = out.column("delay_ps").expect("column");
        let f0 = out.column("F_t0").expect("column");
        let s1: Vec<f64> = out.column("F_t1").expect("column").iter().map(|f| 1.0 - f).collect();
        let e0 = out.column("eta_t0").expect("column");
        let e1 = out.column("eta_t1").expect("column");
        let mut put = |prefix: &str, a: &[f64], b: &[f64]| {
            if let (Some(c0), Some(c1)) = (plateau_center(&x, a), plateau_center(&x, b)) {
                out.summary.insert(format!("center_t0_ps{prefix}"), c0);
                out.summary.insert(format!("center_t1_ps{prefix}"), c1);
                out.summary.insert(format!("separation_ps{prefix}"), c1 - c0);
            }
        };
        put("", &f0, &s1);
        put("_model", &e0, &e1);
        let max = |v: &[f64]| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        out.summary.insert("plateau_F_t0".into(), max(&f0));
        out.summary.insert("plateau_switched_t1".into(), max(&s1));
    }
    Ok(out)
}

/// Midpoint of the outermost half-maximum crossings of a single-plateau
/// curve, with linear interpolation between samples. `None` when the
/// plateau touches either end of the grid or the curve is flat.
pub fn plateau_center(x: &[f64], y: &[f64]) -> Option<f64> {
    let hi = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = y.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(hi > lo) || y.len() != x.len() {
        return None;
    }
    let half = 0.5 * (hi + lo);
    let first = y.iter().position(|&v| v >= half)?;
    let last = y.iter().rposition(|&v| v >= half)?;
    if first == 0 || last + 1 == y.len() {
        return None;
    }
    let cross = |i: usize, j: usize| x[i] + (half - y[i]) * (x[j] - x[i]) / (y[j] - y[i]);
    Some(0.5 * (cross(first - 1, first) + cross(last, last + 1)))
}

pub const STABILITY_COLUMNS: [&str; 8] = [
    "t_hours",
    "F_phi0",
    "F_phi1",
    "F_t0",
    "F_t1",
    "E_mu",
    "pump_power_rel",
    "theta_offset_rad",
];

/// Repeated short sessions under a slowly drifting pump.
///
/// Each sample runs `stability.pulses_per_sample` pulses per setting with the
/// switch perturbed by the drift state at that time. Per-sample fidelities
/// use signal pulses. Summary entries give the aggregate matrix fidelities
/// and QBER (`*_aggregate`), the sample means and the sample variances of
/// the time-basis fidelities.
pub fn run_stability(cfg: &ExperimentConfig, hours: f64, samples_per_hour: u32) -> Result<SweepResult> {
    cfg.validate()?;
    if !(hours.is_finite() && hours > 0.0) || samples_per_hour == 0 {
        return Err(Error::config("stability", "need hours > 0 and samples_per_hour > 0"));
    }
    let trace = DriftTrace::generate(&cfg.drift, hours)?;
    let n = (hours * samples_per_hour as f64).round().max(1.0) as u64;
    let base = cfg.apparatus();
    let samples = (0..n)
        .into_par_iter()
        .map(|k| {
            let t = k as f64 / samples_per_hour as f64;
            let drift = trace.at(t);
            let mut app = base;
            app.switch = drift.apply(&base.switch);
            let counts = simulate(
                &app,
                cfg.run.seed,
                [KIND_STABILITY, k],
                &PreparationSetting::BB84,
                cfg.stability.pulses_per_sample,
                cfg.run.block_size,
            )?;
            let f = fidelities(&probability_matrix(counts.class(IntensityClass::Signal))?);
            let e = qber(&f)?;
            let row = vec![t, f.phi0(), f.phi1(), f.t0(), f.t1(), e, drift.power_rel, drift.theta_offset_rad];
            Ok((row, counts))
        })
        .collect::<Result<Vec<_>>>()?;
    let total = SessionCounts::merged(samples.iter().map(|s| &s.1));
    let mut out = SweepResult::new(STABILITY_COLUMNS[0], &STABILITY_COLUMNS);
    for (row, _) in samples {
        out.push(row);
    }
    let agg = fidelities(&probability_matrix(total.class(IntensityClass::Signal))?);
    out.summary.insert("E_mu_aggregate".into(), qber(&agg)?);
    for (name, v) in [("phi0", agg.phi0()), ("phi1", agg.phi1()), ("t0", agg.t0()), ("t1", agg.t1())] {
        out.summary.insert(format!("F_{name}_aggregate"), v);
    }
    for name in ["F_phi0", "F_phi1", "F_t0", "F_t1", "E_mu"] {
        let col = out.column(name).expect("column");
        let (mean, var) = mean_var(&col);
        out.summary.insert(format!("{name}_mean"), mean);
        if name == "F_t0" || name == "F_t1" || name == "E_mu" {
            out.summary.insert(format!("{name}_var"), var);
        }
    }
    let e = out.column("E_mu").expect("column");
    out.summary.insert("E_mu_max".into(), e.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    Ok(out)
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

/// Analysis chain on externally supplied counts.
pub fn analyze_counts(cfg: &ExperimentConfig, counts: &SessionCounts) -> Result<Analysis> {
    if !counts.is_consistent() {
        return Err(Error::Model(tbqkd_core::Error::Config(
            "counts hold more clicks than pulses sent in some row",
        )));
    }
    Ok(analyze(counts, &cfg.source, &cfg.key_rate_params())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.run.pulses_per_setting = 20_000;
        c.run.block_size = 3_000;
        c.analysis.bootstrap = 20;
        c
    }

    #[test]
    fn block_size_does_not_change_the_sum_of_pulses() {
        let cfg = small();
        let c = simulate(&cfg.apparatus(), 1, [0, 0], &PreparationSetting::BB84, 10_001, 997).unwrap();
        for class in IntensityClass::ALL {
            assert!(c.sent(class) > 0);
        }
        let total: u64 = IntensityClass::ALL.iter().map(|&k| c.sent(k)).sum();
        assert_eq!(total, 4 * 10_001);
    }

    #[test]
    fn tags_reproduce_counts() {
        let cfg = small();
        let (counts, tags) =
            simulate_with_tags(&cfg.apparatus(), 5, [0, 0], &PreparationSetting::BB84, 20_000, 4_096).unwrap();
        let again = tbqkd_core::detection::accumulate(
            tags.iter().copied(),
            &cfg.apparatus().windows().unwrap(),
            cfg.detector.double_click,
        );
        assert_eq!(again.counts, counts.counts);
        assert!(tags.windows(2).all(|w| w[0].0.pulse_index <= w[1].0.pulse_index));
    }

    #[test]
    fn plateau_center_interpolates() {
        let x: Vec<f64> = (0..11).map(f64::from).collect();
        let y = [0.0, 0.0, 0.0, 0.5, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0];
        // Crossings at 3 and 7.5.
        assert!((plateau_center(&x, &y).unwrap() - 5.25).abs() < 1e-12);
        assert_eq!(plateau_center(&x, &[1.0; 11]), None);
        let edge = [1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(plateau_center(&x, &edge), None);
    }

    #[test]
    fn zero_crossing_exists_beyond_the_measured_range() {
        let z = zero_crossing(&ExperimentConfig::default()).unwrap().unwrap();
        assert!(z > 12.0 && z < 60.0, "{z}");
    }
}
