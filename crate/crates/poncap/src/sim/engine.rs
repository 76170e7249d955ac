//! Event-driven engine for the multiserver polling system.
//!
//! Wavelengths circulate among ONUs: a visit serves the ONU's queues in
//! cyclic order under limited-gated grants, then charges the ONU's switch
//! overhead, then the wavelength moves on per the polling policy. Every
//! wavelength is therefore always either transmitting or in overhead;
//! idleness can only occur in degenerate configs with more wavelengths
//! than transmitter slots.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::model::{PacketLaw, PollingPolicy, PonConfig, TrafficSpec};
use crate::sim::events::EventQueue;
use crate::sim::rng::{exp_sample, StreamLayout};
use crate::sim::stats::{tail_slope, MomentStats, WindowedIntegral};
use crate::sim::{
    BacklogSamples, OnuReport, OverheadSeries, QueueReport, SimError, SimOptions, SimReport,
    SLOPE_FRACTION, VACATION_SAMPLE_CAP,
};

const PRIO_ARRIVAL: u8 = 0;
const PRIO_SERVICE: u8 = 1;
const PRIO_OVERHEAD: u8 = 2;

/// Total backlog beyond which a run is flagged as likely unstable.
const RUNAWAY_BACKLOG: u64 = 10_000_000;

#[derive(Clone, Copy)]
enum Kind {
    Arrival { queue: u32 },
    ServiceDone { wavelength: u32 },
    OverheadDone { wavelength: u32 },
}

#[derive(Clone, Copy)]
struct Packet {
    arrival: f64,
    size: f64,
}

struct QueueState {
    onu: u32,
    deque: VecDeque<Packet>,
    law: PacketLaw,
    mean_interarrival: f64,
    grant: f64,
    rng: ChaCha8Rng,
    /// Packets waiting or in flight (deque plus current batches).
    backlog: u32,
    arrivals: u64,
    served: u64,
    sojourn_area: f64,
    trajectory: Vec<u32>,
}

struct OnuState {
    first_queue: u32,
    n_queues: u16,
    transmitters: u16,
    presence: u16,
    switch_overhead: f64,
    next_queue: u16,
    had_visit: bool,
    visits: u64,
    last_visit_start: f64,
    absent_since: f64,
    intervisit: MomentStats,
    vacations: MomentStats,
    vacation_samples: Vec<f32>,
}

enum WlState {
    InService { queue: u32, batch: u32 },
    InOverhead,
    Idle,
}

struct Wavelength {
    onu: u32,
    visit_start: f64,
    remaining_queues: u16,
    state: WlState,
    rng: ChaCha8Rng,
    /// Periodic visit order over transmitter slots (ONU per slot).
    order: Vec<u32>,
    pos: usize,
}

/// Binary indexed tree over ONUs holding free-transmitter counts, for
/// O(log N) weighted destination draws.
struct FreeSlots {
    tree: Vec<i64>,
    total: i64,
    len: usize,
}

impl FreeSlots {
    fn new(weights: &[i64]) -> Self {
        let len = weights.len();
        let mut fs = Self { tree: vec![0i64; len + 1], total: 0, len };
        for (i, &w) in weights.iter().enumerate() {
            fs.add(i, w);
        }
        fs
    }

    fn add(&mut self, i: usize, delta: i64) {
        self.total += delta;
        let mut idx = i + 1;
        while idx <= self.len {
            self.tree[idx] += delta;
            idx += idx & idx.wrapping_neg();
        }
    }

    fn get(&self, i: usize) -> i64 {
        let mut idx = i + 1;
        let mut v = self.tree[idx];
        let stop = idx - (idx & idx.wrapping_neg());
        idx -= 1;
        while idx > stop {
            v -= self.tree[idx];
            idx -= idx & idx.wrapping_neg();
        }
        v
    }

    /// Index of the slot owning the `r`-th free unit, 0 <= r < total.
    fn find(&self, mut r: i64) -> usize {
        debug_assert!(r < self.total);
        let mut pos = 0usize;
        let mut mask = self.len.next_power_of_two();
        while mask > 0 {
            let next = pos + mask;
            if next <= self.len && self.tree[next] <= r {
                r -= self.tree[next];
                pos = next;
            }
            mask >>= 1;
        }
        pos // tree is 1-based; `pos` is the 0-based index of the match
    }
}

enum Routing {
    Random,
    Periodic,
}

pub(crate) struct Engine {
    clock: f64,
    events: EventQueue<Kind>,
    queues: Vec<QueueState>,
    onus: Vec<OnuState>,
    wavelengths: Vec<Wavelength>,
    free: FreeSlots,
    routing: Routing,
    idle: VecDeque<u32>,
    overhead_integral: WindowedIntegral,
    sample_times: Vec<f64>,
    next_sample: usize,
    total_backlog: u64,
    total_trajectory: Vec<u64>,
    warmup: f64,
    horizon: f64,
    warnings: Vec<String>,
    runaway_flagged: bool,
}

impl Engine {
    pub fn new(
        config: &PonConfig,
        traffic: &TrafficSpec,
        policy: &PollingPolicy,
        opts: &SimOptions,
    ) -> Result<Self, SimError> {
        let violations = crate::model::validate(config, traffic);
        if !violations.is_empty() {
            return Err(SimError::InvalidInput(
                violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "),
            ));
        }
        let policy_violations = crate::model::validate_policy(config, policy);
        if !policy_violations.is_empty() {
            return Err(SimError::InvalidInput(
                policy_violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "),
            ));
        }
        if !(opts.horizon > 0.0) {
            return Err(SimError::InvalidInput("horizon must be > 0".into()));
        }
        if !(opts.warmup >= 0.0) || opts.warmup >= opts.horizon {
            return Err(SimError::InvalidInput("need horizon > warmup >= 0".into()));
        }
        if !(opts.window > 0.0) {
            return Err(SimError::InvalidInput("window must be > 0".into()));
        }

        let n_onus = config.n_onus();
        let n_queues = config.queue_count();
        let l = config.n_wavelengths;
        let layout = StreamLayout::new(n_queues, l);

        let mut queues = Vec::with_capacity(n_queues);
        let mut onus = Vec::with_capacity(n_onus);
        let span = opts.horizon - opts.warmup;
        let n_windows = (span / opts.window).floor() as usize;
        let n_samples = n_windows + 1;
        let sample_times: Vec<f64> =
            (0..n_samples).map(|k| opts.warmup + k as f64 * opts.window).collect();

        let mut qid = 0u32;
        for (i, onu) in config.onus.iter().enumerate() {
            onus.push(OnuState {
                first_queue: qid,
                n_queues: onu.queues.len() as u16,
                transmitters: onu.transmitters as u16,
                presence: 0,
                switch_overhead: onu.switch_overhead,
                next_queue: 0,
                had_visit: false,
                visits: 0,
                last_visit_start: f64::NAN,
                absent_since: f64::NAN,
                intervisit: MomentStats::default(),
                vacations: MomentStats::default(),
                vacation_samples: Vec::new(),
            });
            for (j, q) in onu.queues.iter().enumerate() {
                let t = traffic.get(i, j);
                let rate = t.rate();
                queues.push(QueueState {
                    onu: i as u32,
                    deque: VecDeque::new(),
                    law: t.packet_law(),
                    mean_interarrival: if rate > 0.0 { 1.0 / rate } else { f64::INFINITY },
                    grant: q.grant_limit,
                    rng: layout.queue(opts.seed, qid as usize),
                    backlog: 0,
                    arrivals: 0,
                    served: 0,
                    sojourn_area: 0.0,
                    trajectory: Vec::with_capacity(n_samples),
                });
                qid += 1;
            }
        }

        let routing = match policy {
            PollingPolicy::Random => Routing::Random,
            PollingPolicy::Periodic { .. } => Routing::Periodic,
            PollingPolicy::GponFrame { .. } => {
                return Err(SimError::InvalidInput(
                    "frame-based policy is simulated by the frame engine".into(),
                ))
            }
        };

        // Slot list for periodic orders: ONU index repeated per transmitter.
        let slot_list: Vec<u32> = config
            .onus
            .iter()
            .enumerate()
            .flat_map(|(i, o)| std::iter::repeat(i as u32).take(o.transmitters))
            .collect();

        let mut wavelengths = Vec::with_capacity(l);
        for w in 0..l {
            let mut rng = layout.wavelength(opts.seed, w);
            let order = match policy {
                PollingPolicy::Periodic { orders: Some(orders) } => {
                    orders[w].iter().map(|&i| i as u32).collect()
                }
                PollingPolicy::Periodic { orders: None } => {
                    let mut order = slot_list.clone();
                    // Seeded Fisher-Yates from the wavelength's own stream.
                    for k in (1..order.len()).rev() {
                        let j = rng.gen_range(0..=k);
                        order.swap(k, j);
                    }
                    order
                }
                _ => Vec::new(),
            };
            let pos = order.len().saturating_sub(1);
            wavelengths.push(Wavelength {
                onu: 0,
                visit_start: 0.0,
                remaining_queues: 0,
                state: WlState::Idle,
                rng,
                order,
                pos,
            });
        }

        let weights: Vec<i64> = config.onus.iter().map(|o| o.transmitters as i64).collect();
        let mut engine = Self {
            clock: 0.0,
            events: EventQueue::with_capacity(n_queues + 2 * l + 16),
            queues,
            onus,
            wavelengths,
            free: FreeSlots::new(&weights),
            routing,
            idle: VecDeque::new(),
            overhead_integral: WindowedIntegral::new(opts.warmup, opts.window, n_windows),
            sample_times,
            next_sample: 0,
            total_backlog: 0,
            total_trajectory: Vec::with_capacity(n_samples),
            warmup: opts.warmup,
            horizon: opts.horizon,
            warnings: Vec::new(),
            runaway_flagged: false,
        };
        if opts.warmup == 0.0 {
            engine.warnings.push("warmup is zero: statistics include the startup transient".into());
        }

        // First arrivals.
        for q in 0..engine.queues.len() {
            let qs = &mut engine.queues[q];
            if qs.mean_interarrival.is_finite() {
                let t = exp_sample(&mut qs.rng, qs.mean_interarrival);
                engine.events.push(t, PRIO_ARRIVAL, Kind::Arrival { queue: q as u32 });
            }
        }

        // Initial placement at t = 0.
        for w in 0..engine.wavelengths.len() {
            match engine.pick_destination(w as u32) {
                Some(dest) => engine.start_visit(w as u32, dest),
                None => {
                    engine.idle.push_back(w as u32);
                    if engine.free.total == 0 && engine.warnings.is_empty() {
                        engine
                            .warnings
                            .push("more wavelengths than transmitter slots: some stay idle".into());
                    }
                }
            }
        }
        Ok(engine)
    }

    fn pick_destination(&mut self, w: u32) -> Option<u32> {
        match self.routing {
            Routing::Random => {
                let total = self.free.total;
                if total <= 0 {
                    return None;
                }
                let r = self.wavelengths[w as usize].rng.gen_range(0..total);
                Some(self.free.find(r) as u32)
            }
            Routing::Periodic => {
                let wl = &mut self.wavelengths[w as usize];
                let len = wl.order.len();
                if len == 0 {
                    return None;
                }
                for step in 1..=len {
                    let pos = (wl.pos + step) % len;
                    let onu = wl.order[pos];
                    if self.free.get(onu as usize) > 0 {
                        wl.pos = pos;
                        return Some(onu);
                    }
                }
                None
            }
        }
    }

    fn start_visit(&mut self, w: u32, onu_idx: u32) {
        let clock = self.clock;
        self.free.add(onu_idx as usize, -1);
        let onu = &mut self.onus[onu_idx as usize];
        debug_assert!(onu.presence < onu.transmitters, "transmitter cap violated");

        if onu.presence == 0 && onu.had_visit {
            let vacation = clock - onu.absent_since;
            debug_assert!(vacation >= 0.0);
            if onu.absent_since >= self.warmup {
                onu.vacations.push(vacation);
                if onu.vacation_samples.len() < VACATION_SAMPLE_CAP {
                    onu.vacation_samples.push(vacation as f32);
                }
            }
        }
        if onu.had_visit && onu.last_visit_start >= self.warmup {
            onu.intervisit.push(clock - onu.last_visit_start);
        }
        onu.last_visit_start = clock;
        onu.had_visit = true;
        onu.visits += 1;
        onu.presence += 1;

        let wl = &mut self.wavelengths[w as usize];
        wl.onu = onu_idx;
        wl.visit_start = clock;
        wl.remaining_queues = onu.n_queues;
        self.advance_visit(w);
    }

    /// Serves the next queue of the current visit with pending gated work,
    /// or moves into the switch overhead once all queues were attempted.
    fn advance_visit(&mut self, w: u32) {
        let clock = self.clock;
        let onu_idx = self.wavelengths[w as usize].onu as usize;
        while self.wavelengths[w as usize].remaining_queues > 0 {
            let qid = {
                let onu = &mut self.onus[onu_idx];
                let q = onu.first_queue + onu.next_queue as u32;
                onu.next_queue = (onu.next_queue + 1) % onu.n_queues;
                q
            };
            self.wavelengths[w as usize].remaining_queues -= 1;

            let gate = self.wavelengths[w as usize].visit_start;
            let qs = &mut self.queues[qid as usize];
            let mut batch = 0u32;
            let mut duration = 0.0f64;
            while let Some(front) = qs.deque.front() {
                if front.arrival > gate {
                    break; // gated: arrived after the visit began
                }
                if duration + front.size > qs.grant {
                    break; // whole packets only; the grant may underfill
                }
                let p = qs.deque.pop_front().unwrap();
                duration += p.size;
                batch += 1;
                let departure = clock + duration;
                if departure >= self.warmup {
                    qs.served += 1;
                    qs.sojourn_area += departure - p.arrival;
                }
            }
            debug_assert!(duration <= qs.grant * (1.0 + 1e-12), "grant cap violated");
            if batch > 0 {
                self.wavelengths[w as usize].state = WlState::InService { queue: qid, batch };
                self.events.push(clock + duration, PRIO_SERVICE, Kind::ServiceDone { wavelength: w });
                return;
            }
        }

        // All queues attempted: charge the switch overhead.
        let overhead = self.onus[onu_idx].switch_overhead;
        self.wavelengths[w as usize].state = WlState::InOverhead;
        self.overhead_integral.add(clock, 1.0);
        self.events.push(clock + overhead, PRIO_OVERHEAD, Kind::OverheadDone { wavelength: w });
    }

    fn on_service_done(&mut self, w: u32) {
        let (queue, batch) = match self.wavelengths[w as usize].state {
            WlState::InService { queue, batch } => (queue, batch),
            _ => unreachable!("service completion for a wavelength not in service"),
        };
        let qs = &mut self.queues[queue as usize];
        debug_assert!(qs.backlog >= batch);
        qs.backlog -= batch;
        self.total_backlog -= batch as u64;
        self.advance_visit(w);
    }

    fn on_overhead_done(&mut self, w: u32) {
        let clock = self.clock;
        self.overhead_integral.add(clock, -1.0);
        let onu_idx = self.wavelengths[w as usize].onu as usize;
        {
            let onu = &mut self.onus[onu_idx];
            onu.presence -= 1;
            if onu.presence == 0 {
                onu.absent_since = clock;
            }
        }
        self.free.add(onu_idx, 1);

        // A freed slot can unblock an idle wavelength (degenerate configs).
        if let Some(&idle_w) = self.idle.front() {
            if let Some(dest) = self.pick_destination(idle_w) {
                self.idle.pop_front();
                self.start_visit(idle_w, dest);
            }
        }

        match self.pick_destination(w) {
            Some(dest) => self.start_visit(w, dest),
            None => {
                debug_assert!(self.free.total == 0, "idle despite a free transmitter slot");
                self.wavelengths[w as usize].state = WlState::Idle;
                self.idle.push_back(w);
            }
        }
    }

    fn on_arrival(&mut self, qid: u32) {
        let clock = self.clock;
        let qs = &mut self.queues[qid as usize];
        let size = match qs.law {
            PacketLaw::Deterministic(s) => s,
            PacketLaw::Exponential { mean } => exp_sample(&mut qs.rng, mean),
        };
        qs.deque.push_back(Packet { arrival: clock, size });
        qs.backlog += 1;
        if clock >= self.warmup {
            qs.arrivals += 1;
        }
        self.total_backlog += 1;
        let next = clock + exp_sample(&mut qs.rng, qs.mean_interarrival);
        self.events.push(next, PRIO_ARRIVAL, Kind::Arrival { queue: qid });

        if !self.runaway_flagged && self.total_backlog > RUNAWAY_BACKLOG {
            self.runaway_flagged = true;
            self.warnings.push(format!(
                "total backlog exceeded {RUNAWAY_BACKLOG} packets at t = {clock}: likely unstable"
            ));
        }
    }

    fn flush_samples_until(&mut self, time: f64) {
        while self.next_sample < self.sample_times.len() && self.sample_times[self.next_sample] <= time
        {
            for q in &mut self.queues {
                q.trajectory.push(q.backlog);
            }
            self.total_trajectory.push(self.total_backlog);
            self.next_sample += 1;
        }
    }

    pub fn run(mut self, config: &PonConfig, traffic: &TrafficSpec, opts: &SimOptions, policy_label: String) -> SimReport {
        while let Some(ev) = self.events.pop() {
            if ev.time > self.horizon {
                break;
            }
            self.flush_samples_until(ev.time);
            self.clock = ev.time;
            match ev.kind {
                Kind::Arrival { queue } => self.on_arrival(queue),
                Kind::ServiceDone { wavelength } => self.on_service_done(wavelength),
                Kind::OverheadDone { wavelength } => self.on_overhead_done(wavelength),
            }
        }
        self.flush_samples_until(self.horizon);
        self.overhead_integral.advance(self.horizon);
        self.finish(config, traffic, opts, policy_label)
    }

    fn finish(
        self,
        config: &PonConfig,
        traffic: &TrafficSpec,
        opts: &SimOptions,
        policy_label: String,
    ) -> SimReport {
        let l = config.n_wavelengths;
        let times = &self.sample_times[..self.total_trajectory.len()];

        let mut queue_reports = Vec::with_capacity(self.queues.len());
        let mut total_arrival_rate = 0.0;
        for (qid, qs) in self.queues.iter().enumerate() {
            let (onu, j) = locate_queue(config, qid);
            let t = traffic.get(onu, j);
            let rate = t.rate();
            total_arrival_rate += rate;
            let values: Vec<f64> = qs.trajectory.iter().map(|&b| b as f64).collect();
            let slope = tail_slope(times, &values);
            let mean_backlog = if values.is_empty() {
                f64::NAN
            } else {
                values.iter().sum::<f64>() / values.len() as f64
            };
            let unstable = rate > 0.0 && slope > SLOPE_FRACTION * rate;
            queue_reports.push(QueueReport {
                onu,
                queue: j,
                arrival_rate: rate,
                intensity: t.intensity(),
                arrivals: qs.arrivals,
                served: qs.served,
                mean_backlog,
                final_backlog: qs.backlog as u64,
                mean_sojourn: if qs.served > 0 { qs.sojourn_area / qs.served as f64 } else { f64::NAN },
                slope,
                unstable,
                trajectory: qs.trajectory.clone(),
            });
        }

        let total_values: Vec<f64> = self.total_trajectory.iter().map(|&b| b as f64).collect();
        let total_slope = tail_slope(times, &total_values);
        let unstable = queue_reports.iter().any(|q| q.unstable)
            || (total_arrival_rate > 0.0 && total_slope > SLOPE_FRACTION * total_arrival_rate);

        let onu_reports = self
            .onus
            .iter()
            .enumerate()
            .map(|(i, o)| OnuReport {
                onu: i,
                visits: o.visits,
                intervisit: o.intervisit.clone(),
                vacations: o.vacations.clone(),
                vacation_samples: o.vacation_samples.clone(),
            })
            .collect();

        SimReport {
            n_onus: config.n_onus(),
            n_wavelengths: l,
            horizon: opts.horizon,
            warmup: opts.warmup,
            window: opts.window,
            seed: opts.seed,
            policy_label,
            queues: queue_reports,
            onus: onu_reports,
            overhead: OverheadSeries {
                start: opts.warmup,
                window: opts.window,
                fractions: self.overhead_integral.fractions(l as f64),
            },
            samples: BacklogSamples { times: times.to_vec(), total: self.total_trajectory.clone() },
            total_slope,
            total_arrival_rate,
            unstable,
            warnings: self.warnings,
        }
    }
}

fn locate_queue(config: &PonConfig, mut qid: usize) -> (usize, usize) {
    for (i, onu) in config.onus.iter().enumerate() {
        if qid < onu.queues.len() {
            return (i, qid);
        }
        qid -= onu.queues.len();
    }
    panic!("queue id out of range");
}
