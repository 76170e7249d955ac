//! Homogeneous limited-server polling system without switch overheads.
//!
//! `S` servers share `N` symmetric queues; a server completes one
//! memoryless service, then instantly moves to a non-empty unattended
//! queue chosen uniformly at random (or idles until one appears). Poisson
//! arrivals, exponential services. In large systems the busy-queue
//! fraction tracks the per-queue load and each queue's occupancy matches
//! an isolated single-server memoryless queue, which is what the
//! verification harness checks.

use rand::Rng;

use crate::sim::events::EventQueue;
use crate::sim::rng::{exp_sample, geometric_sample, StreamLayout};
use crate::sim::SimError;

const PRIO_ARRIVAL: u8 = 0;
const PRIO_SERVICE: u8 = 1;

/// Initial queue occupancies.
#[derive(Debug, Clone, PartialEq)]
pub enum ToyInit {
    /// Independent geometric occupancies with the given parameter (the
    /// stationary law of an isolated queue at that load).
    Geometric(f64),
    /// Explicit occupancy per queue.
    Explicit(Vec<u64>),
}

/// Parameters of a toy run.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyParams {
    pub n_queues: usize,
    pub n_servers: usize,
    /// Poisson arrival rate per queue.
    pub lambda: f64,
    /// Exponential service rate.
    pub mu: f64,
    pub horizon: f64,
    pub seed: u64,
    pub initial: ToyInit,
    /// Number of grid points for the busy-fraction trajectory.
    pub grid: usize,
}

/// Trajectory and occupancy measurements of a toy run.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyReport {
    pub n_queues: usize,
    pub n_servers: usize,
    pub lambda: f64,
    pub mu: f64,
    pub horizon: f64,
    pub seed: u64,
    /// Sample times of the busy-fraction trajectory.
    pub times: Vec<f64>,
    /// Fraction of non-empty queues at each sample time.
    pub busy_fraction: Vec<f64>,
    /// Queue-length histogram at the horizon (index = occupancy).
    pub final_marginal: Vec<u64>,
    /// Queue-length histogram pooled over the second half of the grid.
    pub pooled_marginal: Vec<u64>,
    /// First time the busy-queue count dropped below the server count
    /// (meaningful for overloaded explicit starts).
    pub drain_time: Option<f64>,
    pub initial_busy: usize,
}

impl ToyReport {
    /// Largest deviation of the busy fraction from `rho` over the grid.
    pub fn sup_deviation(&self, rho: f64) -> f64 {
        self.busy_fraction.iter().map(|a| (a - rho).abs()).fold(0.0, f64::max)
    }
}

/// Total-variation distance between a sampled histogram and the geometric
/// law with parameter `rho`.
pub fn tv_distance_geometric(histogram: &[u64], rho: f64) -> f64 {
    let total: u64 = histogram.iter().sum();
    if total == 0 {
        return 1.0;
    }
    let mut tv = 0.0;
    let mut geom_tail = 1.0; // mass of the law at >= k
    for (k, &count) in histogram.iter().enumerate() {
        let p = (1.0 - rho) * rho.powi(k as i32);
        tv += (count as f64 / total as f64 - p).abs();
        geom_tail -= p;
    }
    // Law mass beyond the histogram's support.
    tv += geom_tail.abs();
    0.5 * tv
}

#[derive(Clone, Copy)]
enum Kind {
    Arrival { queue: u32 },
    ServiceDone { server: u32 },
}

pub fn run_homogeneous(params: &ToyParams) -> Result<ToyReport, SimError> {
    let ToyParams { n_queues, n_servers, lambda, mu, horizon, seed, ref initial, grid } = *params;
    if n_queues == 0 || n_servers == 0 {
        return Err(SimError::InvalidInput("need at least one queue and one server".into()));
    }
    if !(mu > 0.0) {
        return Err(SimError::InvalidInput("service rate must be > 0".into()));
    }
    if !(lambda >= 0.0) {
        return Err(SimError::InvalidInput("arrival rate must be >= 0".into()));
    }
    if !(horizon > 0.0) {
        return Err(SimError::InvalidInput("horizon must be > 0".into()));
    }
    if let ToyInit::Explicit(ref occ) = initial {
        if occ.len() != n_queues {
            return Err(SimError::InvalidInput(format!(
                "{} initial occupancies for {} queues",
                occ.len(),
                n_queues
            )));
        }
    }
    if let ToyInit::Geometric(rho) = initial {
        if !(*rho >= 0.0 && *rho < 1.0) {
            return Err(SimError::InvalidInput("geometric parameter must be in [0, 1)".into()));
        }
    }

    let layout = StreamLayout::new(n_queues, n_servers);
    let mut misc = layout.misc(seed, 0);

    let mut occupancy: Vec<u64> = match initial {
        ToyInit::Geometric(rho) => {
            (0..n_queues).map(|_| geometric_sample(&mut misc, *rho)).collect()
        }
        ToyInit::Explicit(occ) => occ.clone(),
    };

    // Eligible set: non-empty, unattended queues, with O(1) sampling.
    let mut eligible: Vec<u32> = Vec::with_capacity(n_queues);
    let mut eligible_pos: Vec<usize> = vec![usize::MAX; n_queues];
    let mut attended = vec![false; n_queues];
    let mut busy_count = occupancy.iter().filter(|&&q| q > 0).count();
    let initial_busy = busy_count;

    let mut add_eligible = |eligible: &mut Vec<u32>, pos: &mut Vec<usize>, q: usize| {
        debug_assert_eq!(pos[q], usize::MAX);
        pos[q] = eligible.len();
        eligible.push(q as u32);
    };
    let remove_eligible = |eligible: &mut Vec<u32>, pos: &mut Vec<usize>, q: usize| {
        let at = pos[q];
        debug_assert_ne!(at, usize::MAX);
        let last = *eligible.last().unwrap() as usize;
        eligible.swap_remove(at);
        pos[last] = if last == q { usize::MAX } else { at };
        pos[q] = usize::MAX;
    };

    for q in 0..n_queues {
        if occupancy[q] > 0 {
            add_eligible(&mut eligible, &mut eligible_pos, q);
        }
    }

    let mut events: EventQueue<Kind> = EventQueue::with_capacity(n_queues + n_servers);
    let mut server_rng: Vec<_> = (0..n_servers).map(|s| layout.wavelength(seed, s)).collect();
    let mut serving: Vec<u32> = vec![u32::MAX; n_servers];
    let mut idle_servers: Vec<u32> = Vec::new();

    // Initial placement: servers take distinct eligible queues; the draw
    // order is deterministic given the seed.
    let mut clock = 0.0;
    for s in 0..n_servers {
        if eligible.is_empty() {
            idle_servers.push(s as u32);
            continue;
        }
        let pick = server_rng[s].gen_range(0..eligible.len());
        let q = eligible[pick] as usize;
        remove_eligible(&mut eligible, &mut eligible_pos, q);
        attended[q] = true;
        serving[s] = q as u32;
        let t = clock + exp_sample(&mut server_rng[s], 1.0 / mu);
        events.push(t, PRIO_SERVICE, Kind::ServiceDone { server: s as u32 });
    }

    let mut queue_rng: Vec<_> = (0..n_queues).map(|q| layout.queue(seed, q)).collect();
    if lambda > 0.0 {
        for q in 0..n_queues {
            let t = exp_sample(&mut queue_rng[q], 1.0 / lambda);
            events.push(t, PRIO_ARRIVAL, Kind::Arrival { queue: q as u32 });
        }
    }

    let grid = grid.max(2);
    let sample_times: Vec<f64> = (0..=grid).map(|k| horizon * k as f64 / grid as f64).collect();
    let mut next_sample = 0usize;
    let mut busy_fraction = Vec::with_capacity(sample_times.len());
    let mut pooled_marginal: Vec<u64> = Vec::new();
    let mut drain_time: Option<f64> = None;
    if busy_count < n_servers {
        drain_time = Some(0.0);
    }

    let nq = n_queues as f64;
    while let Some(ev) = events.pop() {
        if ev.time > horizon {
            break;
        }
        while next_sample < sample_times.len() && sample_times[next_sample] <= ev.time {
            busy_fraction.push(busy_count as f64 / nq);
            if next_sample * 2 >= grid {
                pool_histogram(&mut pooled_marginal, &occupancy);
            }
            next_sample += 1;
        }
        clock = ev.time;
        match ev.kind {
            Kind::Arrival { queue } => {
                let q = queue as usize;
                occupancy[q] += 1;
                if occupancy[q] == 1 {
                    busy_count += 1;
                    if !attended[q] {
                        if let Some(s) = idle_servers.pop() {
                            // The only eligible queue is this one.
                            attended[q] = true;
                            serving[s as usize] = queue;
                            let t = clock + exp_sample(&mut server_rng[s as usize], 1.0 / mu);
                            events.push(t, PRIO_SERVICE, Kind::ServiceDone { server: s });
                        } else {
                            add_eligible(&mut eligible, &mut eligible_pos, q);
                        }
                    }
                }
                let t = clock + exp_sample(&mut queue_rng[q], 1.0 / lambda);
                events.push(t, PRIO_ARRIVAL, Kind::Arrival { queue });
            }
            Kind::ServiceDone { server } => {
                let s = server as usize;
                let q = serving[s] as usize;
                debug_assert!(attended[q] && occupancy[q] > 0);
                occupancy[q] -= 1;
                attended[q] = false;
                serving[s] = u32::MAX;
                if occupancy[q] == 0 {
                    busy_count -= 1;
                    if drain_time.is_none() && busy_count < n_servers {
                        drain_time = Some(clock);
                    }
                } else {
                    add_eligible(&mut eligible, &mut eligible_pos, q);
                }
                // Choose a new non-empty unattended queue uniformly at
                // random, possibly the one just left.
                if eligible.is_empty() {
                    idle_servers.push(server);
                } else {
                    let pick = server_rng[s].gen_range(0..eligible.len());
                    let nq = eligible[pick] as usize;
                    remove_eligible(&mut eligible, &mut eligible_pos, nq);
                    attended[nq] = true;
                    serving[s] = nq as u32;
                    let t = clock + exp_sample(&mut server_rng[s], 1.0 / mu);
                    events.push(t, PRIO_SERVICE, Kind::ServiceDone { server });
                }
            }
        }
    }
    while next_sample < sample_times.len() {
        busy_fraction.push(busy_count as f64 / nq);
        if next_sample * 2 >= grid {
            pool_histogram(&mut pooled_marginal, &occupancy);
        }
        next_sample += 1;
    }

    let mut final_marginal: Vec<u64> = Vec::new();
    pool_histogram(&mut final_marginal, &occupancy);

    Ok(ToyReport {
        n_queues,
        n_servers,
        lambda,
        mu,
        horizon,
        seed,
        times: sample_times,
        busy_fraction,
        final_marginal,
        pooled_marginal,
        drain_time,
        initial_busy,
    })
}

fn pool_histogram(hist: &mut Vec<u64>, occupancy: &[u64]) {
    for &q in occupancy {
        let k = q as usize;
        if hist.len() <= k {
            hist.resize(k + 1, 0);
        }
        hist[k] += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_arrivals_drain_to_zero() {
        let params = ToyParams {
            n_queues: 100,
            n_servers: 50,
            lambda: 0.0,
            mu: 1.0,
            horizon: 60.0,
            seed: 5,
            initial: ToyInit::Explicit(vec![2; 100]),
            grid: 100,
        };
        let report = run_homogeneous(&params).unwrap();
        assert_eq!(*report.busy_fraction.last().unwrap(), 0.0);
        assert!(report.drain_time.is_some());
        assert_eq!(report.final_marginal[0], 100);
    }

    #[test]
    fn stationary_start_stays_near_load() {
        let params = ToyParams {
            n_queues: 500,
            n_servers: 250,
            lambda: 0.3,
            mu: 1.0,
            horizon: 30.0,
            seed: 9,
            initial: ToyInit::Geometric(0.3),
            grid: 200,
        };
        let report = run_homogeneous(&params).unwrap();
        let sup = report.sup_deviation(0.3);
        assert!(sup < 0.08, "sup deviation {sup}");
        let tv = tv_distance_geometric(&report.pooled_marginal, 0.3);
        assert!(tv < 0.03, "tv distance {tv}");
    }

    #[test]
    fn rejects_bad_rates() {
        let mut params = ToyParams {
            n_queues: 4,
            n_servers: 2,
            lambda: 0.1,
            mu: 0.0,
            horizon: 1.0,
            seed: 1,
            initial: ToyInit::Geometric(0.1),
            grid: 10,
        };
        assert!(run_homogeneous(&params).is_err());
        params.mu = 1.0;
        params.lambda = -0.5;
        assert!(run_homogeneous(&params).is_err());
    }

    #[test]
    fn determinism_per_seed() {
        let params = ToyParams {
            n_queues: 50,
            n_servers: 25,
            lambda: 0.2,
            mu: 1.0,
            horizon: 5.0,
            seed: 77,
            initial: ToyInit::Geometric(0.2),
            grid: 50,
        };
        let a = run_homogeneous(&params).unwrap();
        let b = run_homogeneous(&params).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tv_distance_sane() {
        // Exact geometric histogram has tiny distance.
        let rho = 0.3f64;
        let hist: Vec<u64> =
            (0..30).map(|k| ((1.0 - rho) * rho.powi(k) * 1e9) as u64).collect();
        assert!(tv_distance_geometric(&hist, rho) < 1e-3);
        // Point mass at zero vs rho = 0 is exact.
        assert!(tv_distance_geometric(&[1000], 0.0) < 1e-12);
    }
}
