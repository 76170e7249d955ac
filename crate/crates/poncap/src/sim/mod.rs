//! Deterministic, seedable discrete-event simulation of the polling
//! system, the frame-based allocation mode, and the homogeneous toy
//! system.
//!
//! A run is a pure function of `(config, traffic, policy, options)`:
//! identical inputs produce bit-identical reports. Runs share no mutable
//! state, so distinct seeds may execute concurrently.

mod engine;
mod events;
mod frame;
mod rng;
mod stats;
pub mod toy;

use thiserror::Error;

pub use stats::MomentStats;

use crate::model::{PollingPolicy, PonConfig, TrafficSpec};

/// A queue is flagged unstable when its backlog slope exceeds this
/// fraction of its offered packet rate. Near a capacity boundary the
/// excess drift is proportional to the overload, so the detection bias is
/// about one resolution step of the region bisection.
pub const SLOPE_FRACTION: f64 = 0.01;

/// Per-ONU cap on retained vacation samples (summary moments cover the
/// rest).
pub const VACATION_SAMPLE_CAP: usize = 4096;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid simulation input: {0}")]
    InvalidInput(String),
}

/// Run parameters shared by all simulation modes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    /// Simulated end time, seconds.
    pub horizon: f64,
    /// Statistics are collected from this time on.
    pub warmup: f64,
    /// Master seed; every stochastic entity derives its own substream.
    pub seed: u64,
    /// Measurement window for the overhead series and backlog sampling.
    pub window: f64,
}

impl SimOptions {
    pub fn new(horizon: f64, warmup: f64, seed: u64, window: f64) -> Self {
        Self { horizon, warmup, seed, window }
    }
}

/// Per-queue simulation outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueReport {
    pub onu: usize,
    pub queue: usize,
    pub arrival_rate: f64,
    pub intensity: f64,
    /// Post-warmup arrivals and departures.
    pub arrivals: u64,
    pub served: u64,
    /// Mean of the sampled backlog (packets).
    pub mean_backlog: f64,
    pub final_backlog: u64,
    /// Mean packet sojourn time over post-warmup departures, seconds.
    pub mean_sojourn: f64,
    /// Least-squares backlog slope over the tail of the run, packets/s.
    pub slope: f64,
    pub unstable: bool,
    /// Backlog sampled at each measurement window boundary.
    pub trajectory: Vec<u32>,
}

/// Per-ONU visit statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct OnuReport {
    pub onu: usize,
    pub visits: u64,
    /// Time between successive visit starts.
    pub intervisit: MomentStats,
    /// Server-absent intervals following overhead completion.
    pub vacations: MomentStats,
    /// Capped raw vacation samples for histograms/diagnostics.
    pub vacation_samples: Vec<f32>,
}

/// Fraction of wavelengths in switch overhead per measurement window.
#[derive(Debug, Clone, PartialEq)]
pub struct OverheadSeries {
    pub start: f64,
    pub window: f64,
    pub fractions: Vec<f64>,
}

impl OverheadSeries {
    pub fn mean(&self) -> f64 {
        if self.fractions.is_empty() {
            f64::NAN
        } else {
            self.fractions.iter().sum::<f64>() / self.fractions.len() as f64
        }
    }

    pub fn std_dev(&self) -> f64 {
        let mut m = MomentStats::default();
        for &f in &self.fractions {
            m.push(f);
        }
        m.std_dev()
    }
}

/// Total-backlog samples on the measurement grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BacklogSamples {
    pub times: Vec<f64>,
    pub total: Vec<u64>,
}

/// Everything a run measured.
#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub n_onus: usize,
    pub n_wavelengths: usize,
    pub horizon: f64,
    pub warmup: f64,
    pub window: f64,
    pub seed: u64,
    pub policy_label: String,
    pub queues: Vec<QueueReport>,
    pub onus: Vec<OnuReport>,
    pub overhead: OverheadSeries,
    pub samples: BacklogSamples,
    pub total_slope: f64,
    pub total_arrival_rate: f64,
    pub unstable: bool,
    pub warnings: Vec<String>,
}

impl SimReport {
    pub fn queue(&self, onu: usize, queue: usize) -> &QueueReport {
        self.queues
            .iter()
            .find(|q| q.onu == onu && q.queue == queue)
            .expect("queue index out of range")
    }

    /// Pooled mean of inter-visit times across ONUs.
    pub fn mean_intervisit(&self) -> f64 {
        let (sum, count) = self.onus.iter().fold((0.0, 0u64), |(s, c), o| {
            if o.intervisit.count() > 0 {
                (s + o.intervisit.mean() * o.intervisit.count() as f64, c + o.intervisit.count())
            } else {
                (s, c)
            }
        });
        if count == 0 {
            f64::NAN
        } else {
            sum / count as f64
        }
    }

    /// Pooled mean vacation across ONUs.
    pub fn mean_vacation(&self) -> f64 {
        let (sum, count) = self.onus.iter().fold((0.0, 0u64), |(s, c), o| {
            if o.vacations.count() > 0 {
                (s + o.vacations.mean() * o.vacations.count() as f64, c + o.vacations.count())
            } else {
                (s, c)
            }
        });
        if count == 0 {
            f64::NAN
        } else {
            sum / count as f64
        }
    }
}

/// Simulates the polling system under a random or periodic policy.
///
/// A visit serves only packets present when it began, in arrival order, up
/// to the queue's grant without splitting packets; the ONU's queues are
/// served in cyclic order within the visit, the switch overhead follows
/// (also for empty visits, which carry the report), and the wavelength
/// then moves per policy.
pub fn run(
    config: &PonConfig,
    traffic: &TrafficSpec,
    policy: &PollingPolicy,
    opts: &SimOptions,
) -> Result<SimReport, SimError> {
    let label = match policy {
        PollingPolicy::Random => "random".to_string(),
        PollingPolicy::Periodic { .. } => "periodic".to_string(),
        PollingPolicy::GponFrame { .. } => {
            return Err(SimError::InvalidInput(
                "use run_gpon_frame (or simulate) for the frame-based policy".into(),
            ))
        }
    };
    let engine = engine::Engine::new(config, traffic, policy, opts)?;
    Ok(engine.run(config, traffic, opts, label))
}

/// Simulates the frame-based allocation mode: at every frame boundary the
/// capacity left by the overhead ratios is split among backlogged queues
/// by weighted max-min fairness (weights from the queue configs), capped
/// per ONU by its transmitter quota, and whole packets are served within
/// each allocation.
pub fn run_gpon_frame(
    config: &PonConfig,
    traffic: &TrafficSpec,
    frame: f64,
    delta_ratios: &[f64],
    opts: &SimOptions,
) -> Result<SimReport, SimError> {
    frame::run_frame(config, traffic, frame, delta_ratios, opts)
}

/// Dispatches on the policy variant.
pub fn simulate(
    config: &PonConfig,
    traffic: &TrafficSpec,
    policy: &PollingPolicy,
    opts: &SimOptions,
) -> Result<SimReport, SimError> {
    match policy {
        PollingPolicy::GponFrame { frame, delta_ratios } => {
            run_gpon_frame(config, traffic, *frame, delta_ratios, opts)
        }
        _ => run(config, traffic, policy, opts),
    }
}

/// Per-ONU vacation summary with an exponentiality diagnostic.
#[derive(Debug, Clone, PartialEq)]
pub struct VacationSummary {
    pub onu: usize,
    pub count: u64,
    pub mean: f64,
    pub variance: f64,
    /// Coefficient of variation; near one suggests an exponential law,
    /// which large systems approach. Reported, not asserted.
    pub cov: f64,
}

/// Summarizes the vacation statistics of a finished run. ONUs never
/// visited twice produce empty entries (count zero, NaN moments).
pub fn measure_vacations(report: &SimReport) -> Vec<VacationSummary> {
    report
        .onus
        .iter()
        .map(|o| VacationSummary {
            onu: o.onu,
            count: o.vacations.count(),
            mean: o.vacations.mean(),
            variance: o.vacations.variance(),
            cov: o.vacations.cov(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PacketLaw;

    const DET: PacketLaw = PacketLaw::Deterministic(8e-6);

    #[test]
    fn zero_arrivals_all_overhead() {
        // With no traffic every wavelength cycles through overheads
        // forever: the overhead fraction is identically one and the mean
        // inter-visit time is N * overhead / L.
        let cfg = PonConfig::uniform(10, 5, 1, 1.2e-6, 8e-6);
        let tr = TrafficSpec::uniform(&cfg, 0.0, DET);
        let opts = SimOptions::new(0.02, 0.002, 7, 1e-3);
        let report = run(&cfg, &tr, &PollingPolicy::Random, &opts).unwrap();
        for f in &report.overhead.fractions {
            assert!((f - 1.0).abs() < 1e-9, "fraction = {f}");
        }
        let expect = 10.0 * 1.2e-6 / 5.0;
        let got = report.mean_intervisit();
        assert!((got - expect).abs() / expect < 0.02, "inter-visit {got} vs {expect}");
        // Zero-traffic vacations follow the balance at rho = 0.
        let vac = report.mean_vacation();
        let expect_vac = (10.0 - 5.0) * 1.2e-6 / 5.0;
        assert!((vac - expect_vac).abs() / expect_vac < 0.02, "vacation {vac} vs {expect_vac}");
    }

    #[test]
    fn single_onu_cycle_matches_formula() {
        // N = 1, L = 1: inter-visit time is overhead/(1 - rho) once stable.
        let cfg = PonConfig::uniform(1, 1, 1, 1.2e-6, 1.0);
        let tr = TrafficSpec::uniform(&cfg, 0.5, DET);
        let opts = SimOptions::new(0.4, 0.05, 3, 1e-3);
        let report = run(&cfg, &tr, &PollingPolicy::Random, &opts).unwrap();
        let expect = 1.2e-6 / (1.0 - 0.5);
        let got = report.mean_intervisit();
        assert!((got - expect).abs() / expect < 0.02, "inter-visit {got} vs {expect}");
        assert!(!report.unstable);
    }

    #[test]
    fn overhead_fraction_tracks_residual_capacity() {
        // Stable system: rho wavelengths' worth transmit on average, the
        // rest sit in overhead, so the fraction is (L - rho)/L.
        let cfg = PonConfig::uniform(50, 25, 1, 1.2e-6, 8e-6);
        let tr = TrafficSpec::uniform(&cfg, 0.2, DET);
        let opts = SimOptions::new(0.06, 0.01, 11, 1e-3);
        let report = run(&cfg, &tr, &PollingPolicy::Random, &opts).unwrap();
        let mean = report.overhead.mean();
        assert!((mean - 0.6).abs() < 0.02, "overhead fraction {mean}");
        assert!(!report.unstable);
    }

    #[test]
    fn identical_seeds_identical_reports() {
        let cfg = PonConfig::uniform(8, 4, 1, 1.2e-6, 8e-6);
        let tr = TrafficSpec::uniform(&cfg, 0.3, DET);
        let opts = SimOptions::new(0.03, 0.003, 42, 1e-3);
        let a = run(&cfg, &tr, &PollingPolicy::Random, &opts).unwrap();
        let b = run(&cfg, &tr, &PollingPolicy::Random, &opts).unwrap();
        assert_eq!(a, b);
        let c = run(&cfg, &tr, &PollingPolicy::Random, &SimOptions { seed: 43, ..opts }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn periodic_policy_also_runs_clean() {
        let cfg = PonConfig::uniform(8, 4, 1, 1.2e-6, 8e-6);
        let tr = TrafficSpec::uniform(&cfg, 0.3, DET);
        let opts = SimOptions::new(0.05, 0.005, 5, 1e-3);
        let report = run(&cfg, &tr, &PollingPolicy::Periodic { orders: None }, &opts).unwrap();
        assert!(!report.unstable);
        let mean = report.overhead.mean();
        // (L - rho)/L = (4 - 2.4)/4 = 0.4
        assert!((mean - 0.4).abs() < 0.03, "overhead fraction {mean}");
    }

    #[test]
    fn rejects_bad_horizons() {
        let cfg = PonConfig::uniform(2, 1, 1, 1.2e-6, 8e-6);
        let tr = TrafficSpec::uniform(&cfg, 0.1, DET);
        let bad = SimOptions::new(-1.0, 0.0, 1, 1e-3);
        assert!(run(&cfg, &tr, &PollingPolicy::Random, &bad).is_err());
        let bad2 = SimOptions::new(0.1, 0.2, 1, 1e-3);
        assert!(run(&cfg, &tr, &PollingPolicy::Random, &bad2).is_err());
    }

    #[test]
    fn gated_grant_one_packet_per_visit() {
        // Grant equals the packet time: each visit serves at most one
        // packet, so served packet spacing per queue is at least the
        // revisit time. Indirectly checked via stability at the
        // theoretical boundary for this discipline.
        let cfg = PonConfig::uniform(4, 2, 1, 1.2e-6, 8e-6);
        // Per-queue condition: rho (1 + (overhead+theta)/grant) < 1.
        let tr = TrafficSpec::uniform(&cfg, 0.35, DET);
        let opts = SimOptions::new(0.3, 0.03, 9, 1e-3);
        let report = run(&cfg, &tr, &PollingPolicy::Random, &opts).unwrap();
        assert!(!report.unstable);
        for q in &report.queues {
            assert!(q.served > 0);
        }
    }

    #[test]
    fn unstable_load_is_flagged() {
        let cfg = PonConfig::uniform(4, 2, 1, 1.2e-6, 8e-6);
        let tr = TrafficSpec::uniform(&cfg, 0.52, DET); // rho > L/4 per queue boundary
        let opts = SimOptions::new(0.4, 0.04, 9, 1e-3);
        let report = run(&cfg, &tr, &PollingPolicy::Random, &opts).unwrap();
        assert!(report.unstable, "total slope {}", report.total_slope);
    }

    #[test]
    fn little_law_diagnostic_holds() {
        let cfg = PonConfig::uniform(6, 3, 1, 1.2e-6, 8e-6);
        let tr = TrafficSpec::uniform(&cfg, 0.25, DET);
        let opts = SimOptions::new(0.4, 0.05, 17, 1e-3);
        let report = run(&cfg, &tr, &PollingPolicy::Random, &opts).unwrap();
        for q in &report.queues {
            let little = q.arrival_rate * q.mean_sojourn;
            // Sampled backlog counts whole batches until completion, so
            // agreement is approximate.
            assert!(
                (q.mean_backlog - little).abs() <= 0.15 * little.max(0.5),
                "queue ({}, {}): backlog {} vs lambda*W {}",
                q.onu,
                q.queue,
                q.mean_backlog,
                little
            );
        }
    }

    #[test]
    fn multi_transmitter_cap_respected_and_useful() {
        // 3 ONUs with 2 transmitters each, L = 4: an ONU can absorb close
        // to two wavelengths' worth with unlimited gated service.
        let cfg = PonConfig::uniform(3, 4, 2, 1e-6, f64::INFINITY);
        let mut tr = TrafficSpec::uniform(&cfg, 1.2, DET);
        tr.set(2, 0, crate::model::QueueTraffic::with_intensity(0.3, DET));
        let opts = SimOptions::new(0.3, 0.03, 23, 1e-3);
        let report = run(&cfg, &tr, &PollingPolicy::Random, &opts).unwrap();
        assert!(!report.unstable, "slopes: {:?}", report.queues.iter().map(|q| q.slope).collect::<Vec<_>>());
    }

    #[test]
    fn vacation_summary_copes_with_unvisited() {
        let cfg = PonConfig::uniform(3, 1, 1, 1e-6, 8e-6);
        let tr = TrafficSpec::uniform(&cfg, 0.0, DET);
        let opts = SimOptions::new(5e-6, 0.0, 1, 1e-6);
        let report = run(&cfg, &tr, &PollingPolicy::Random, &opts).unwrap();
        let summaries = measure_vacations(&report);
        assert_eq!(summaries.len(), 3);
        // Short horizon: some ONU was likely never revisited; its summary
        // is empty rather than fabricated.
        for s in &summaries {
            if s.count == 0 {
                assert!(s.mean.is_nan());
            }
        }
    }
}
