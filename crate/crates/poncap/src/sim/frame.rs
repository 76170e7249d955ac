//! Frame-based allocation mode: fixed-duration frames whose residual
//! capacity (after per-ONU overhead ratios) is shared among backlogged
//! queues by weighted max-min fairness.

use std::collections::VecDeque;

use crate::model::{PacketLaw, PonConfig, TrafficSpec};
use crate::sim::events::EventQueue;
use crate::sim::rng::{exp_sample, StreamLayout};
use crate::sim::stats::{tail_slope, MomentStats};
use crate::sim::{
    BacklogSamples, OnuReport, OverheadSeries, QueueReport, SimError, SimOptions, SimReport,
    SLOPE_FRACTION,
};

const PRIO_ARRIVAL: u8 = 0;
const PRIO_FRAME: u8 = 3;

/// Small relative slack so an allocation computed as `k` packet times
/// serves all `k` packets despite rounding.
const ALLOC_EPS: f64 = 1e-9;

#[derive(Clone, Copy)]
enum Kind {
    Arrival { queue: u32 },
    FrameBoundary,
}

#[derive(Clone, Copy)]
struct Packet {
    arrival: f64,
    size: f64,
}

/// Weighted max-min fair shares.
///
/// Progressive filling: every unfrozen claimant grows proportionally to
/// its weight until it either satisfies its demand or exhausts one of its
/// resources (the global pool or its ONU cap); the first such event
/// freezes the affected claimants and filling continues.
pub(crate) fn maxmin_allocate(
    demands: &[f64],
    weights: &[f64],
    onu_of: &[usize],
    onu_caps: &mut [f64],
    mut global_cap: f64,
) -> Vec<f64> {
    let n = demands.len();
    let mut alloc = vec![0.0; n];
    let mut active: Vec<usize> = (0..n).filter(|&q| demands[q] > 0.0).collect();

    while !active.is_empty() && global_cap > 0.0 {
        // Per-resource weight sums over active claimants.
        let mut global_w = 0.0;
        let mut onu_w = vec![0.0; onu_caps.len()];
        for &q in &active {
            global_w += weights[q];
            onu_w[onu_of[q]] += weights[q];
        }

        // Largest uniform fill level before some constraint binds.
        let mut level = global_cap / global_w;
        for (i, &w) in onu_w.iter().enumerate() {
            if w > 0.0 {
                level = level.min(onu_caps[i] / w);
            }
        }
        for &q in &active {
            level = level.min((demands[q] - alloc[q]) / weights[q]);
        }
        if !(level > 0.0) {
            break;
        }

        for &q in &active {
            let grant = weights[q] * level;
            alloc[q] += grant;
            onu_caps[onu_of[q]] -= grant;
            global_cap -= grant;
        }

        // Freeze satisfied claimants and those in exhausted resources.
        active.retain(|&q| {
            let rel = demands[q].max(1.0);
            alloc[q] + 1e-15 * rel < demands[q]
                && onu_caps[onu_of[q]] > 1e-15
                && global_cap > 1e-15
        });
    }
    alloc
}

pub(crate) fn run_frame(
    config: &PonConfig,
    traffic: &TrafficSpec,
    frame: f64,
    delta_ratios: &[f64],
    opts: &SimOptions,
) -> Result<SimReport, SimError> {
    let violations = crate::model::validate(config, traffic);
    if !violations.is_empty() {
        return Err(SimError::InvalidInput(
            violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "),
        ));
    }
    if !(frame > 0.0) {
        return Err(SimError::InvalidInput("frame duration must be > 0".into()));
    }
    if delta_ratios.len() != config.n_onus() {
        return Err(SimError::InvalidInput(format!(
            "{} overhead ratios for {} ONUs",
            delta_ratios.len(),
            config.n_onus()
        )));
    }
    if delta_ratios.iter().any(|d| !(*d >= 0.0)) {
        return Err(SimError::InvalidInput("overhead ratios must be >= 0".into()));
    }
    let ratio_sum: f64 = delta_ratios.iter().sum();
    if ratio_sum >= 1.0 {
        return Err(SimError::InvalidInput(format!(
            "overhead ratios sum to {ratio_sum}: no capacity remains"
        )));
    }
    if !(opts.horizon > 0.0) || !(opts.warmup >= 0.0) || opts.warmup >= opts.horizon {
        return Err(SimError::InvalidInput("need horizon > warmup >= 0".into()));
    }
    if !(opts.window > 0.0) {
        return Err(SimError::InvalidInput("window must be > 0".into()));
    }

    let l = config.n_wavelengths;
    let n_queues = config.queue_count();
    let layout = StreamLayout::new(n_queues, l);

    struct Q {
        onu: usize,
        weight: f64,
        law: PacketLaw,
        mean_interarrival: f64,
        rng: rand_chacha::ChaCha8Rng,
        deque: VecDeque<Packet>,
        arrivals: u64,
        served: u64,
        sojourn_area: f64,
        trajectory: Vec<u32>,
    }

    let span = opts.horizon - opts.warmup;
    let n_windows = (span / opts.window).floor() as usize;
    let n_samples = n_windows + 1;
    let sample_times: Vec<f64> =
        (0..n_samples).map(|k| opts.warmup + k as f64 * opts.window).collect();

    let mut queues: Vec<Q> = Vec::with_capacity(n_queues);
    let mut onu_of = Vec::with_capacity(n_queues);
    for (i, onu) in config.onus.iter().enumerate() {
        for (j, q) in onu.queues.iter().enumerate() {
            let t = traffic.get(i, j);
            let rate = t.rate();
            onu_of.push(i);
            queues.push(Q {
                onu: i,
                weight: q.weight,
                law: t.packet_law(),
                mean_interarrival: if rate > 0.0 { 1.0 / rate } else { f64::INFINITY },
                rng: layout.queue(opts.seed, queues.len()),
                deque: VecDeque::new(),
                arrivals: 0,
                served: 0,
                sojourn_area: 0.0,
                trajectory: Vec::with_capacity(n_samples),
            });
        }
    }

    let global_budget = l as f64 * frame * (1.0 - ratio_sum);
    let onu_budget: Vec<f64> = config
        .onus
        .iter()
        .zip(delta_ratios)
        .map(|(o, &d)| o.transmitters as f64 * frame * (1.0 - d))
        .collect();

    let mut events: EventQueue<Kind> = EventQueue::with_capacity(n_queues + 4);
    for (qid, q) in queues.iter_mut().enumerate() {
        if q.mean_interarrival.is_finite() {
            let t = exp_sample(&mut q.rng, q.mean_interarrival);
            events.push(t, PRIO_ARRIVAL, Kind::Arrival { queue: qid as u32 });
        }
    }
    events.push(frame, PRIO_FRAME, Kind::FrameBoundary);

    let mut clock: f64;
    let mut next_sample = 0usize;
    let mut total_backlog: u64 = 0;
    let mut total_trajectory: Vec<u64> = Vec::with_capacity(n_samples);
    let mut demands = vec![0.0f64; n_queues];
    let weights: Vec<f64> = queues.iter().map(|q| q.weight).collect();

    while let Some(ev) = events.pop() {
        if ev.time > opts.horizon {
            break;
        }
        while next_sample < sample_times.len() && sample_times[next_sample] <= ev.time {
            for q in &mut queues {
                q.trajectory.push(q.deque.len() as u32);
            }
            total_trajectory.push(total_backlog);
            next_sample += 1;
        }
        clock = ev.time;
        match ev.kind {
            Kind::Arrival { queue } => {
                let q = &mut queues[queue as usize];
                let size = match q.law {
                    PacketLaw::Deterministic(s) => s,
                    PacketLaw::Exponential { mean } => exp_sample(&mut q.rng, mean),
                };
                q.deque.push_back(Packet { arrival: clock, size });
                if clock >= opts.warmup {
                    q.arrivals += 1;
                }
                total_backlog += 1;
                let next = clock + exp_sample(&mut q.rng, q.mean_interarrival);
                events.push(next, PRIO_ARRIVAL, Kind::Arrival { queue });
            }
            Kind::FrameBoundary => {
                // Allocation is gated on the backlog reported at the
                // boundary; packets transmit within the coming frame.
                for (qid, q) in queues.iter().enumerate() {
                    demands[qid] = q.deque.iter().map(|p| p.size).sum();
                }
                let mut caps = onu_budget.clone();
                let alloc =
                    maxmin_allocate(&demands, &weights, &onu_of, &mut caps, global_budget);
                for (qid, q) in queues.iter_mut().enumerate() {
                    let budget = alloc[qid] * (1.0 + ALLOC_EPS);
                    let mut used = 0.0;
                    while let Some(front) = q.deque.front() {
                        if front.arrival > clock || used + front.size > budget {
                            break;
                        }
                        let p = q.deque.pop_front().unwrap();
                        used += p.size;
                        total_backlog -= 1;
                        let departure = clock + frame;
                        if departure >= opts.warmup {
                            q.served += 1;
                            q.sojourn_area += departure - p.arrival;
                        }
                    }
                }
                events.push(clock + frame, PRIO_FRAME, Kind::FrameBoundary);
            }
        }
    }
    while next_sample < sample_times.len() && sample_times[next_sample] <= opts.horizon {
        for q in &mut queues {
            q.trajectory.push(q.deque.len() as u32);
        }
        total_trajectory.push(total_backlog);
        next_sample += 1;
    }

    // Assemble the report. The overhead budget is reserved per frame, so
    // the series is the constant ratio sum.
    let times = &sample_times[..total_trajectory.len()];
    let mut queue_reports = Vec::with_capacity(n_queues);
    let mut total_arrival_rate = 0.0;
    let mut qid = 0usize;
    for (i, onu) in config.onus.iter().enumerate() {
        for (j, _) in onu.queues.iter().enumerate() {
            let q = &queues[qid];
            let t = traffic.get(i, j);
            let rate = t.rate();
            total_arrival_rate += rate;
            let values: Vec<f64> = q.trajectory.iter().map(|&b| b as f64).collect();
            let slope = tail_slope(times, &values);
            let mean_backlog = if values.is_empty() {
                f64::NAN
            } else {
                values.iter().sum::<f64>() / values.len() as f64
            };
            queue_reports.push(QueueReport {
                onu: i,
                queue: j,
                arrival_rate: rate,
                intensity: t.intensity(),
                arrivals: q.arrivals,
                served: q.served,
                mean_backlog,
                final_backlog: q.deque.len() as u64,
                mean_sojourn: if q.served > 0 { q.sojourn_area / q.served as f64 } else { f64::NAN },
                slope,
                unstable: rate > 0.0 && slope > SLOPE_FRACTION * rate,
                trajectory: q.trajectory.clone(),
            });
            qid += 1;
        }
    }
    let total_values: Vec<f64> = total_trajectory.iter().map(|&b| b as f64).collect();
    let total_slope = tail_slope(times, &total_values);
    let unstable = queue_reports.iter().any(|q| q.unstable)
        || (total_arrival_rate > 0.0 && total_slope > SLOPE_FRACTION * total_arrival_rate);

    let onus = (0..config.n_onus())
        .map(|i| OnuReport {
            onu: i,
            visits: 0,
            intervisit: MomentStats::default(),
            vacations: MomentStats::default(),
            vacation_samples: Vec::new(),
        })
        .collect();

    Ok(SimReport {
        n_onus: config.n_onus(),
        n_wavelengths: l,
        horizon: opts.horizon,
        warmup: opts.warmup,
        window: opts.window,
        seed: opts.seed,
        policy_label: "gpon-frame".to_string(),
        queues: queue_reports,
        onus,
        overhead: OverheadSeries {
            start: opts.warmup,
            window: opts.window,
            fractions: vec![ratio_sum; n_windows],
        },
        samples: BacklogSamples { times: times.to_vec(), total: total_trajectory.clone() },
        total_slope,
        total_arrival_rate,
        unstable,
        warnings: if opts.warmup == 0.0 {
            vec!["warmup is zero: statistics include the startup transient".into()]
        } else {
            Vec::new()
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{PollingPolicy, QueueTraffic};

    const DET: PacketLaw = PacketLaw::Deterministic(2e-6);

    #[test]
    fn maxmin_single_claimant_takes_min_of_caps() {
        let demands = [100.0, 0.0];
        let weights = [1.0, 1.0];
        let onu_of = [0usize, 1usize];
        let mut caps = [10.0, 10.0];
        let alloc = maxmin_allocate(&demands, &weights, &onu_of, &mut caps, 50.0);
        assert!((alloc[0] - 10.0).abs() < 1e-12);
        assert_eq!(alloc[1], 0.0);
    }

    #[test]
    fn maxmin_symmetric_split() {
        let demands = [100.0, 100.0];
        let weights = [1.0, 1.0];
        let onu_of = [0usize, 1usize];
        let mut caps = [40.0, 40.0];
        let alloc = maxmin_allocate(&demands, &weights, &onu_of, &mut caps, 50.0);
        assert!((alloc[0] - 25.0).abs() < 1e-12);
        assert!((alloc[1] - 25.0).abs() < 1e-12);
    }

    #[test]
    fn maxmin_weights_and_demand_freeze() {
        // Claimant 0 wants little; the leftover goes to the heavy one.
        let demands = [5.0, 100.0];
        let weights = [1.0, 3.0];
        let onu_of = [0usize, 1usize];
        let mut caps = [100.0, 100.0];
        let alloc = maxmin_allocate(&demands, &weights, &onu_of, &mut caps, 60.0);
        assert!((alloc[0] - 5.0).abs() < 1e-12);
        assert!((alloc[1] - 55.0).abs() < 1e-12);
    }

    #[test]
    fn maxmin_respects_onu_cap_and_redistributes() {
        // Two queues on ONU 0 (cap 20) and one on ONU 1: the capped pair
        // frees capacity for the third.
        let demands = [100.0, 100.0, 100.0];
        let weights = [1.0, 1.0, 1.0];
        let onu_of = [0usize, 0, 1];
        let mut caps = [20.0, 100.0];
        let alloc = maxmin_allocate(&demands, &weights, &onu_of, &mut caps, 90.0);
        assert!((alloc[0] - 10.0).abs() < 1e-12);
        assert!((alloc[1] - 10.0).abs() < 1e-12);
        assert!((alloc[2] - 70.0).abs() < 1e-12);
    }

    #[test]
    fn single_backlogged_queue_gets_its_cap() {
        let cfg = PonConfig::uniform(4, 2, 1, 0.0, 8e-6);
        let ratios = vec![0.001; 4];
        let mut tr = TrafficSpec::uniform(&cfg, 0.0, DET);
        // One overloaded queue: per-frame service is capped by its ONU
        // budget, i.e. throughput ~ t_i (1 - delta_i).
        tr.set(0, 0, QueueTraffic::with_intensity(1.5, DET));
        let opts = SimOptions::new(0.5, 0.05, 3, 1e-3);
        let report = run_frame(&cfg, &tr, 125e-6, &ratios, &opts).unwrap();
        let q = report.queue(0, 0);
        let span = opts.horizon - opts.warmup;
        let served_rate = q.served as f64 * 2e-6 / span;
        assert!((served_rate - 0.999).abs() < 0.02, "served intensity {served_rate}");
        assert!(report.unstable);
    }

    #[test]
    fn symmetric_backlogged_queues_split_equally() {
        let cfg = PonConfig::uniform(2, 1, 1, 0.0, 8e-6);
        let ratios = vec![0.0; 2];
        let tr = TrafficSpec::uniform(&cfg, 0.9, DET);
        let opts = SimOptions::new(0.4, 0.05, 5, 1e-3);
        let report = run_frame(&cfg, &tr, 125e-6, &ratios, &opts).unwrap();
        let a = report.queue(0, 0).served;
        let b = report.queue(1, 0).served;
        let rel = (a as f64 - b as f64).abs() / a.max(b) as f64;
        assert!(rel < 0.05, "served {a} vs {b}");
    }

    #[test]
    fn dispatch_through_simulate() {
        let cfg = PonConfig::uniform(4, 2, 1, 0.0, 8e-6);
        let tr = TrafficSpec::uniform(&cfg, 0.2, DET);
        let policy = PollingPolicy::GponFrame { frame: 125e-6, delta_ratios: vec![0.001; 4] };
        let opts = SimOptions::new(0.1, 0.01, 7, 1e-3);
        let report = crate::sim::simulate(&cfg, &tr, &policy, &opts).unwrap();
        assert_eq!(report.policy_label, "gpon-frame");
        assert!(!report.unstable);
    }
}
