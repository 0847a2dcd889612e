//! Seeded Monte-Carlo experiments on top of the two optimization stages.
//!
//! Channels are deterministic line-of-sight responses, so the only thing that
//! varies between trials is the random initialization of both stages. Trial
//! `t` draws from a ChaCha8 generator seeded with `seed_from_u64(seed)` and
//! switched to stream `t`; each trial is therefore independent of how many
//! others run or in which order they finish. Trials and sweep points run on
//! the rayon pool and are aggregated in index order.

mod config;
pub mod output;

pub use config::{dbm_to_watts, AoStopRule, SystemConfig};

use std::str::FromStr;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channel::{build_channel, ArrayGeometry, ChannelModel, PolarLocation};
use crate::error::{Error, Result};
use crate::metrics::{power_spectrum, IterationCounts, SecrecyReport, SpectrumPoint};
use crate::numerics::ComplexMatrix;
use crate::stage1::{bcd_optimize, random_initial_beamformer, FdState};
use crate::stage2::{ao_project, matched_phase_init, AoStop, HybridResult};

/// Random generator for trial `trial` under master seed `seed`.
pub fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

/// Channels of one configuration, built once and shared by all trials.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: SystemConfig,
    pub tx: ArrayGeometry,
    /// Raw (not noise-normalized) channels.
    pub h_u: ComplexMatrix,
    pub h_e: ComplexMatrix,
}

/// Everything one trial produced.
#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub trial: usize,
    pub fd: FdState,
    pub ao: HybridResult,
    pub fully_digital: SecrecyReport,
    pub hybrid: SecrecyReport,
}

/// Statistics of one design variant across trials, in bits/s/Hz and watts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariantSummary {
    pub mean_c_s: f64,
    /// Sample standard deviation; zero for a single trial.
    pub std_c_s: f64,
    pub mean_c_u: f64,
    pub mean_c_e: f64,
    pub max_power: f64,
    /// Trials whose loop hit its iteration cap.
    pub nonconverged: usize,
}

impl VariantSummary {
    fn from_reports<'a>(reports: impl Iterator<Item = (&'a SecrecyReport, bool)> + Clone) -> Self {
        let n = reports.clone().count() as f64;
        let mean = |f: &dyn Fn(&SecrecyReport) -> f64| reports.clone().map(|(r, _)| f(r)).sum::<f64>() / n;
        let mean_c_s = mean(&|r| r.c_s);
        let var = if n > 1.0 {
            reports.clone().map(|(r, _)| (r.c_s - mean_c_s).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self {
            mean_c_s,
            std_c_s: var.sqrt(),
            mean_c_u: mean(&|r| r.c_u),
            mean_c_e: mean(&|r| r.c_e),
            max_power: reports.clone().map(|(r, _)| r.transmit_power).fold(0.0, f64::max),
            nonconverged: reports.filter(|(_, converged)| !converged).count(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioReport {
    pub fully_digital: VariantSummary,
    pub hybrid: VariantSummary,
    /// Ordered by trial index.
    pub trials: Vec<TrialOutcome>,
}

impl Scenario {
    pub fn new(config: SystemConfig) -> Result<Self> {
        config.validate()?;
        let tx = config.base_station()?;
        let spacing = config.spacing();
        let u = ArrayGeometry::receiver(config.m_u, spacing, config.u_location()?)?;
        let e = ArrayGeometry::receiver(config.m_e, spacing, config.e_location()?)?;
        let h_u = build_channel(config.channel_model, &tx, &u, config.f_hz)?.matrix;
        let h_e = build_channel(config.channel_model, &tx, &e, config.f_hz)?.matrix;
        Ok(Self { config, tx, h_u, h_e })
    }

    fn normalized(&self) -> (ComplexMatrix, ComplexMatrix) {
        let scale = num_complex::Complex64::new(self.config.noise_watts().sqrt().recip(), 0.0);
        (&self.h_u * scale, &self.h_e * scale)
    }

    /// Runs both stages for trial `trial`.
    pub fn run_trial(&self, trial: usize) -> Result<TrialOutcome> {
        let c = &self.config;
        let (h_u, h_e) = self.normalized();
        let mut rng = trial_rng(c.seed, trial);
        let w0 = random_initial_beamformer(&mut rng, c.m_tx, c.k_streams, c.p_max_watts());
        let fd = bcd_optimize(&h_u, &h_e, &w0, &c.bcd_settings())?;
        if !fd.converged {
            log::warn!("trial {trial}: BCD stopped at the iteration cap ({})", c.max_bcd_iters);
        }
        let p0 = matched_phase_init(&fd.w_fd, c.m_rf, &mut rng);
        let stop = match c.ao_stop {
            AoStopRule::Secrecy => AoStop::Secrecy { h_u: &h_u, h_e: &h_e },
            AoStopRule::Residual => AoStop::Residual,
        };
        let ao = ao_project(&fd.w_fd, &p0, &c.ao_settings(), stop)?;
        if !ao.converged {
            log::warn!("trial {trial}: AO stopped at the iteration cap ({})", c.max_ao_iters);
        }
        let noise = c.noise_watts();
        let fully_digital = SecrecyReport::evaluate(
            &self.h_u,
            &self.h_e,
            &fd.w_fd,
            noise,
            IterationCounts {
                bcd: fd.iterations(),
                bisection: fd.bisection_steps.clone(),
                ao: 0,
            },
        )?;
        let hybrid = SecrecyReport::evaluate(
            &self.h_u,
            &self.h_e,
            &ao.beamformer.effective(),
            noise,
            IterationCounts {
                bcd: fd.iterations(),
                bisection: fd.bisection_steps.clone(),
                ao: ao.iterations(),
            },
        )?;
        Ok(TrialOutcome {
            trial,
            fd,
            ao,
            fully_digital,
            hybrid,
        })
    }

    pub fn run(&self) -> Result<ScenarioReport> {
        let trials = (0..self.config.trials)
            .into_par_iter()
            .map(|t| self.run_trial(t))
            .collect::<Result<Vec<_>>>()?;
        Ok(ScenarioReport {
            fully_digital: VariantSummary::from_reports(trials.iter().map(|t| (&t.fully_digital, t.fd.converged))),
            hybrid: VariantSummary::from_reports(
                trials.iter().map(|t| (&t.hybrid, t.fd.converged && t.ao.converged)),
            ),
            trials,
        })
    }
}

/// Builds the channels and runs every trial of `config`.
pub fn run_scenario(config: &SystemConfig) -> Result<ScenarioReport> {
    Scenario::new(config.clone())?.run()
}

#[derive(Debug, Clone)]
pub struct PmaxSweepPoint {
    pub p_max_dbm: f64,
    pub report: ScenarioReport,
}

/// One scenario per transmit-power budget.
pub fn sweep_pmax(config: &SystemConfig, p_max_dbm: &[f64]) -> Result<Vec<PmaxSweepPoint>> {
    if p_max_dbm.is_empty() {
        return Err(Error::Argument("power sweep needs at least one value".into()));
    }
    p_max_dbm
        .par_iter()
        .map(|&p| {
            let report = run_scenario(&SystemConfig {
                p_max_dbm: p,
                ..config.clone()
            })?;
            Ok(PmaxSweepPoint { p_max_dbm: p, report })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct EveSweepPoint {
    pub model: ChannelModel,
    pub location: PolarLocation,
    pub report: ScenarioReport,
}

/// One scenario per eavesdropper location under channel model `model`.
pub fn sweep_eve_location(
    config: &SystemConfig,
    e_grid: &[PolarLocation],
    model: ChannelModel,
) -> Result<Vec<EveSweepPoint>> {
    if e_grid.is_empty() {
        return Err(Error::Argument("eavesdropper grid is empty".into()));
    }
    e_grid
        .par_iter()
        .map(|&location| {
            let report = run_scenario(&SystemConfig {
                e_distance_m: location.distance,
                e_angle_deg: location.azimuth.to_degrees(),
                channel_model: model,
                ..config.clone()
            })?;
            Ok(EveSweepPoint {
                model,
                location,
                report,
            })
        })
        .collect()
}

/// `count` evenly spaced values from `start` to `stop` inclusive, written
/// `start:stop:count` on the command line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linspace {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl Linspace {
    pub fn new(start: f64, stop: f64, count: usize) -> Result<Self> {
        if count == 0 || !start.is_finite() || !stop.is_finite() || (count == 1 && start != stop) {
            return Err(Error::Argument(format!("bad range {start}:{stop}:{count}")));
        }
        Ok(Self { start, stop, count })
    }

    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.start];
        }
        let step = (self.stop - self.start) / (self.count - 1) as f64;
        (0..self.count).map(|i| self.start + step * i as f64).collect()
    }
}

impl FromStr for Linspace {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::Argument(format!("expected start:stop:count, got '{s}'"));
        match parts.as_slice() {
            [a] => {
                let v: f64 = a.trim().parse().map_err(|_| bad())?;
                Self::new(v, v, 1)
            }
            [a, b, n] => Self::new(
                a.trim().parse().map_err(|_| bad())?,
                b.trim().parse().map_err(|_| bad())?,
                n.trim().parse().map_err(|_| bad())?,
            ),
            _ => Err(bad()),
        }
    }
}

/// Distance × angle evaluation grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumGrid {
    /// Meters.
    pub distance: Linspace,
    /// Degrees.
    pub angle_deg: Linspace,
}

#[derive(Debug, Clone)]
pub struct SpectrumMap {
    pub distances: Vec<f64>,
    pub angles_deg: Vec<f64>,
    /// Distance-major: index `d * angles_deg.len() + a`.
    pub points: Vec<SpectrumPoint>,
    /// The design whose spectrum this is.
    pub trial: TrialOutcome,
}

impl SpectrumMap {
    pub fn peak_index(&self) -> usize {
        self.points
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.power.total_cmp(&b.1.power))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

    /// Index of the grid cell whose center is nearest `location` in
    /// (distance, angle) coordinates.
    pub fn cell_of(&self, location: PolarLocation) -> usize {
        let nearest = |grid: &[f64], v: f64| {
            grid.iter()
                .enumerate()
                .min_by(|a, b| (a.1 - v).abs().total_cmp(&(b.1 - v).abs()))
                .map(|(i, _)| i)
                .unwrap_or(0)
        };
        let d = nearest(&self.distances, location.distance);
        let a = nearest(&self.angles_deg, location.azimuth.to_degrees());
        d * self.angles_deg.len() + a
    }
}

/// Optimizes the hybrid design for trial 0 and maps its received power over
/// `grid`.
pub fn spectrum_map(config: &SystemConfig, grid: &SpectrumGrid) -> Result<SpectrumMap> {
    if grid.distance.start <= 0.0 || grid.distance.stop <= 0.0 {
        return Err(Error::Argument("spectrum distances must be positive".into()));
    }
    let scenario = Scenario::new(config.clone())?;
    let trial = scenario.run_trial(0)?;
    let distances = grid.distance.values();
    let angles_deg = grid.angle_deg.values();
    let locations = distances
        .iter()
        .flat_map(|&d| angles_deg.iter().map(move |&a| PolarLocation::from_degrees(d, a)))
        .collect::<Result<Vec<_>>>()?;
    let design = &trial.ao.beamformer;
    let points = power_spectrum(&design.p, &design.w, &scenario.tx, config.f_hz, &locations)?;
    Ok(SpectrumMap {
        distances,
        angles_deg,
        points,
        trial,
    })
}

/// Both convergence traces of trial 0.
#[derive(Debug, Clone)]
pub struct ConvergenceTrace {
    pub fd: FdState,
    pub ao: HybridResult,
}

pub fn convergence_trace(config: &SystemConfig) -> Result<ConvergenceTrace> {
    let trial = Scenario::new(config.clone())?.run_trial(0)?;
    Ok(ConvergenceTrace {
        fd: trial.fd,
        ao: trial.ao,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn small() -> SystemConfig {
        SystemConfig {
            m_tx: 16,
            m_u: 4,
            m_e: 4,
            trials: 4,
            ..SystemConfig::desk()
        }
    }

    #[test]
    fn trial_streams_are_distinct_and_repeatable() {
        let a: u64 = trial_rng(7, 3).random();
        assert_eq!(a, trial_rng(7, 3).random::<u64>());
        assert_ne!(a, trial_rng(7, 4).random::<u64>());
        assert_ne!(a, trial_rng(8, 3).random::<u64>());
    }

    #[test]
    fn linspace_parsing() {
        let l: Linspace = "1:3:5".parse().unwrap();
        assert_eq!(l.values(), vec![1.0, 1.5, 2.0, 2.5, 3.0]);
        let one: Linspace = "45".parse().unwrap();
        assert_eq!(one.values(), vec![45.0]);
        assert!("1:2".parse::<Linspace>().is_err());
        assert!("1:2:0".parse::<Linspace>().is_err());
        assert!("1:2:1".parse::<Linspace>().is_err());
        assert!("a:2:3".parse::<Linspace>().is_err());
    }

    #[test]
    fn identical_locations_give_zero_secrecy() {
        let c = SystemConfig {
            e_distance_m: 15.0,
            m_e: 4,
            trials: 2,
            ..small()
        };
        let r = run_scenario(&c).unwrap();
        assert!(r.fully_digital.mean_c_s < 1e-6, "{:?}", r.fully_digital);
        assert!(r.hybrid.mean_c_s < 1e-6, "{:?}", r.hybrid);
    }

    #[test]
    fn repeated_runs_match_bit_for_bit() {
        let c = small();
        let a = run_scenario(&c).unwrap();
        let b = run_scenario(&c).unwrap();
        assert_eq!(a.fully_digital, b.fully_digital);
        assert_eq!(a.hybrid, b.hybrid);
        assert_eq!(output::scenario_trials_csv(&a), output::scenario_trials_csv(&b));
    }

    #[test]
    fn trials_do_not_depend_on_trial_count() {
        let two = run_scenario(&SystemConfig { trials: 2, ..small() }).unwrap();
        let four = run_scenario(&small()).unwrap();
        for k in 0..2 {
            assert_eq!(two.trials[k].fully_digital.c_s, four.trials[k].fully_digital.c_s);
            assert_eq!(two.trials[k].hybrid.c_s, four.trials[k].hybrid.c_s);
        }
    }

    #[test]
    fn hybrid_never_beats_fully_digital_by_much_and_respects_power() {
        let c = SystemConfig {
            m_tx: 32,
            trials: 3,
            ..SystemConfig::desk()
        };
        let r = run_scenario(&c).unwrap();
        assert_eq!(r.fully_digital.nonconverged, 0);
        for t in &r.trials {
            assert!(t.fully_digital.c_s >= 0.0 && t.hybrid.c_s >= 0.0);
            assert!(t.fully_digital.transmit_power <= c.p_max_watts() * (1.0 + 1e-9));
            assert!(t.hybrid.transmit_power <= c.p_max_watts() * (1.0 + 1e-9));
        }
        assert!(r.hybrid.mean_c_s <= r.fully_digital.mean_c_s + 1e-6, "{r:?}");
    }

    #[test]
    fn single_point_sweep_equals_scenario() {
        let c = small();
        let sweep = sweep_pmax(&c, &[c.p_max_dbm]).unwrap();
        let direct = run_scenario(&c).unwrap();
        assert_eq!(sweep.len(), 1);
        assert_eq!(sweep[0].report.fully_digital, direct.fully_digital);
        assert_eq!(sweep[0].report.hybrid, direct.hybrid);
        assert!(sweep_pmax(&c, &[]).is_err());
        assert!(sweep_eve_location(&c, &[], ChannelModel::Near).is_err());
    }

    #[test]
    fn summary_statistics() {
        let mk = |c_s: f64| SecrecyReport {
            c_u: c_s + 1.0,
            c_e: 1.0,
            c_s,
            transmit_power: c_s / 10.0,
            iterations: IterationCounts::default(),
        };
        let reports = [mk(1.0), mk(2.0), mk(3.0)];
        let s = VariantSummary::from_reports(reports.iter().zip([true, false, true]));
        assert_eq!(s.mean_c_s, 2.0);
        assert!((s.std_c_s - 1.0).abs() < 1e-15);
        assert_eq!(s.mean_c_u, 3.0);
        assert_eq!(s.max_power, 0.3);
        assert_eq!(s.nonconverged, 1);
        let one = VariantSummary::from_reports(reports[..1].iter().zip([true]));
        assert_eq!(one.std_c_s, 0.0);
    }

    #[test]
    fn spectrum_is_normalized_with_one_peak() {
        let c = SystemConfig { trials: 1, ..small() };
        let grid = SpectrumGrid {
            distance: Linspace::new(2.0, 30.0, 15).unwrap(),
            angle_deg: Linspace::new(0.0, 80.0, 17).unwrap(),
        };
        let map = spectrum_map(&c, &grid).unwrap();
        assert_eq!(map.points.len(), 15 * 17);
        assert!(map.points.iter().all(|p| (0.0..=1.0).contains(&p.power)));
        assert_eq!(map.points.iter().filter(|p| p.power == 1.0).count(), 1);
        assert_eq!(map.cell_of(PolarLocation::from_degrees(2.1, 1.0).unwrap()), 0);
        let bad = SpectrumGrid {
            distance: Linspace::new(0.0, 3.0, 3).unwrap(),
            ..grid
        };
        assert!(spectrum_map(&c, &bad).is_err());
    }

    #[test]
    fn convergence_traces_are_monotone_and_capped() {
        let c = small();
        let t = convergence_trace(&c).unwrap();
        assert!(t.fd.trace.len() <= c.max_bcd_iters + 1);
        assert!(t.ao.trace.len() <= c.max_ao_iters + 1);
        for w in t.fd.trace.windows(2) {
            assert!(w[1].rate_gap() >= w[0].rate_gap() - 1e-8);
        }
        for w in t.ao.trace.windows(2) {
            assert!(w[1].residual <= w[0].residual * (1.0 + 1e-12) + 1e-300);
        }
    }
}
