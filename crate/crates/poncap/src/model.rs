//! Domain model: PON topology, per-queue traffic, and polling policies.
//!
//! All quantities are in SI units: times in seconds, rates in events per
//! second. Traffic intensities are expressed in units of the bit rate of one
//! wavelength, so a queue with intensity 0.5 keeps half a wavelength busy.
//! Byte/bit-rate conversions happen in the config layer, never here.

/// Relative tolerance for the rate-times-service-time consistency check.
pub const INTENSITY_REL_TOL: f64 = 1e-12;

/// Static PON topology and service parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PonConfig {
    /// Number of wavelengths (servers circulating among ONUs).
    pub n_wavelengths: usize,
    /// One entry per ONU.
    pub onus: Vec<OnuConfig>,
}

/// Per-ONU parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OnuConfig {
    /// Tunable transmitters: the maximum number of wavelengths that can be
    /// present at this ONU simultaneously.
    pub transmitters: usize,
    /// Switch overhead charged per visit, in seconds. May be zero.
    pub switch_overhead: f64,
    /// User queues hosted by this ONU (at least one).
    pub queues: Vec<QueueConfig>,
}

/// Per-queue service parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueConfig {
    /// Maximum transmission time granted per visit, in seconds.
    /// `f64::INFINITY` expresses unlimited gated service.
    pub grant_limit: f64,
    /// Fair-share weight, used only by the frame-based allocation mode.
    pub weight: f64,
}

impl QueueConfig {
    pub fn new(grant_limit: f64) -> Self {
        Self { grant_limit, weight: 1.0 }
    }
}

impl PonConfig {
    /// Homogeneous system: `n` single-queue ONUs, identical transmitter
    /// count, overhead and grant.
    pub fn uniform(
        n_onus: usize,
        n_wavelengths: usize,
        transmitters: usize,
        switch_overhead: f64,
        grant_limit: f64,
    ) -> Self {
        Self {
            n_wavelengths,
            onus: (0..n_onus)
                .map(|_| OnuConfig {
                    transmitters,
                    switch_overhead,
                    queues: vec![QueueConfig::new(grant_limit)],
                })
                .collect(),
        }
    }

    pub fn n_onus(&self) -> usize {
        self.onus.len()
    }

    /// Total transmitter slots across all ONUs.
    pub fn total_transmitters(&self) -> usize {
        self.onus.iter().map(|o| o.transmitters).sum()
    }

    pub fn queue_count(&self) -> usize {
        self.onus.iter().map(|o| o.queues.len()).sum()
    }

    /// Sum of per-visit switch overheads over all ONUs.
    pub fn switch_overhead_sum(&self) -> f64 {
        self.onus.iter().map(|o| o.switch_overhead).sum()
    }

    /// The common overhead value if every ONU has the same one.
    pub fn uniform_overhead(&self) -> Option<f64> {
        let first = self.onus.first()?.switch_overhead;
        self.onus
            .iter()
            .all(|o| o.switch_overhead == first)
            .then_some(first)
    }
}

/// Arrival-process descriptor. Tagged so other stationary processes can be
/// added without touching call sites.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Arrival {
    /// Poisson arrivals at `rate` packets per second.
    Poisson { rate: f64 },
}

impl Arrival {
    pub fn rate(&self) -> f64 {
        match self {
            Arrival::Poisson { rate } => *rate,
        }
    }
}

/// Packet transmission-time law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PacketLaw {
    /// Every packet takes exactly this many seconds to transmit.
    Deterministic(f64),
    /// Exponentially distributed transmission time with the given mean.
    Exponential { mean: f64 },
}

impl PacketLaw {
    pub fn mean(&self) -> f64 {
        match self {
            PacketLaw::Deterministic(s) => *s,
            PacketLaw::Exponential { mean } => *mean,
        }
    }
}

/// Traffic offered to one queue. The intensity is always derived from the
/// arrival rate and the packet law, never stored independently, so the
/// analytical and simulated views of a queue cannot drift apart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueueTraffic {
    arrival: Arrival,
    packet_law: PacketLaw,
    intensity: f64,
}

impl QueueTraffic {
    /// Poisson arrivals at `rate` packets/s with the given packet law.
    pub fn poisson(rate: f64, packet_law: PacketLaw) -> Self {
        Self {
            arrival: Arrival::Poisson { rate },
            packet_law,
            intensity: rate * packet_law.mean(),
        }
    }

    /// Back-solves the arrival rate that produces the target intensity.
    pub fn with_intensity(intensity: f64, packet_law: PacketLaw) -> Self {
        let mean = packet_law.mean();
        let rate = if intensity == 0.0 { 0.0 } else { intensity / mean };
        Self {
            arrival: Arrival::Poisson { rate },
            packet_law,
            intensity: rate * mean,
        }
    }

    pub fn zero(packet_law: PacketLaw) -> Self {
        Self::poisson(0.0, packet_law)
    }

    pub fn arrival(&self) -> Arrival {
        self.arrival
    }

    pub fn packet_law(&self) -> PacketLaw {
        self.packet_law
    }

    /// Intensity in units of one wavelength's bit rate.
    pub fn intensity(&self) -> f64 {
        self.intensity
    }

    pub fn rate(&self) -> f64 {
        self.arrival.rate()
    }

    /// Same packet law, arrival rate scaled by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self::poisson(self.rate() * c, self.packet_law)
    }
}

/// Offered traffic for every queue, indexed `(onu, queue)` with the same
/// shape as the [`PonConfig`] it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficSpec {
    per_queue: Vec<Vec<QueueTraffic>>,
}

impl TrafficSpec {
    pub fn new(per_queue: Vec<Vec<QueueTraffic>>) -> Self {
        Self { per_queue }
    }

    /// Every queue of `config` gets the same target intensity.
    pub fn uniform(config: &PonConfig, intensity: f64, packet_law: PacketLaw) -> Self {
        Self {
            per_queue: config
                .onus
                .iter()
                .map(|o| {
                    o.queues
                        .iter()
                        .map(|_| QueueTraffic::with_intensity(intensity, packet_law))
                        .collect()
                })
                .collect(),
        }
    }

    /// Per-ONU target intensities, spread equally over each ONU's queues.
    pub fn from_onu_loads(config: &PonConfig, onu_loads: &[f64], packet_law: PacketLaw) -> Self {
        Self {
            per_queue: config
                .onus
                .iter()
                .zip(onu_loads)
                .map(|(o, &load)| {
                    let share = load / o.queues.len() as f64;
                    o.queues
                        .iter()
                        .map(|_| QueueTraffic::with_intensity(share, packet_law))
                        .collect()
                })
                .collect(),
        }
    }

    pub fn get(&self, onu: usize, queue: usize) -> &QueueTraffic {
        &self.per_queue[onu][queue]
    }

    pub fn set(&mut self, onu: usize, queue: usize, traffic: QueueTraffic) {
        self.per_queue[onu][queue] = traffic;
    }

    pub fn rows(&self) -> &[Vec<QueueTraffic>] {
        &self.per_queue
    }

    /// Iterates `(onu, queue, traffic)` in index order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, &QueueTraffic)> {
        self.per_queue
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().enumerate().map(move |(j, q)| (i, j, q)))
    }

    /// Total offered intensity over all queues.
    pub fn total_load(&self) -> f64 {
        self.per_queue
            .iter()
            .map(|row| row.iter().map(|q| q.intensity()).sum::<f64>())
            .sum()
    }

    /// Offered intensity summed over one ONU's queues.
    pub fn onu_load(&self, onu: usize) -> f64 {
        self.per_queue[onu].iter().map(|q| q.intensity()).sum()
    }

    /// All arrival rates scaled by `c` (intensities scale with them).
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            per_queue: self
                .per_queue
                .iter()
                .map(|row| row.iter().map(|q| q.scaled(c)).collect())
                .collect(),
        }
    }
}

/// How wavelengths move between ONUs.
#[derive(Debug, Clone, PartialEq)]
pub enum PollingPolicy {
    /// Next destination drawn uniformly among ONUs with a free transmitter,
    /// weighted by free-transmitter count when ONUs host several.
    Random,
    /// Fixed per-wavelength cyclic orders over transmitter slots. `None`
    /// generates a distinct seeded permutation per wavelength; explicit
    /// orders list ONU indices with one entry per transmitter slot.
    Periodic { orders: Option<Vec<Vec<usize>>> },
    /// Frame-based allocation: the frame capacity left after the per-ONU
    /// overhead ratios is shared by weighted max-min fairness.
    GponFrame { frame: f64, delta_ratios: Vec<f64> },
}

/// One invariant breach, reported as data.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// What the violation is about, e.g. `onu 3` or `traffic (2, 0)`.
    pub subject: String,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.subject, self.message)
    }
}

fn violation(subject: impl Into<String>, message: impl Into<String>) -> Violation {
    Violation { subject: subject.into(), message: message.into() }
}

/// Checks every type invariant and the config/traffic shape match.
/// Returns an empty list when everything holds; never aborts.
pub fn validate(config: &PonConfig, traffic: &TrafficSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    if config.n_onus() == 0 {
        out.push(violation("pon", "at least one ONU is required"));
    }
    if config.n_wavelengths == 0 {
        out.push(violation("pon", "at least one wavelength is required"));
    }
    for (i, onu) in config.onus.iter().enumerate() {
        let subject = format!("onu {i}");
        if onu.transmitters == 0 {
            out.push(violation(&subject, "at least one transmitter is required"));
        }
        if onu.transmitters > config.n_wavelengths {
            out.push(violation(
                &subject,
                format!(
                    "transmitters exceed wavelengths ({} > {})",
                    onu.transmitters, config.n_wavelengths
                ),
            ));
        }
        if !(onu.switch_overhead >= 0.0) {
            out.push(violation(&subject, "switch overhead must be >= 0"));
        }
        if onu.queues.is_empty() {
            out.push(violation(&subject, "at least one queue is required"));
        }
        for (j, q) in onu.queues.iter().enumerate() {
            let subject = format!("queue ({i}, {j})");
            if !(q.grant_limit > 0.0) {
                out.push(violation(&subject, "grant limit must be > 0 seconds"));
            }
            if !(q.weight > 0.0) {
                out.push(violation(&subject, "weight must be > 0"));
            }
        }
    }

    let rows = traffic.rows();
    if rows.len() != config.n_onus() {
        out.push(violation(
            "traffic",
            format!("{} ONU rows for a config with {} ONUs", rows.len(), config.n_onus()),
        ));
        return out;
    }
    for (i, (row, onu)) in rows.iter().zip(&config.onus).enumerate() {
        if row.len() != onu.queues.len() {
            out.push(violation(
                format!("traffic onu {i}"),
                format!("{} queue entries for an ONU with {} queues", row.len(), onu.queues.len()),
            ));
            continue;
        }
        for (j, q) in row.iter().enumerate() {
            let subject = format!("traffic ({i}, {j})");
            if !(q.rate() >= 0.0) {
                out.push(violation(&subject, "arrival rate must be >= 0"));
            }
            if !(q.packet_law().mean() > 0.0) {
                out.push(violation(&subject, "mean packet transmission time must be > 0"));
            }
            let derived = q.rate() * q.packet_law().mean();
            let scale = derived.abs().max(q.intensity().abs()).max(1e-300);
            if (q.intensity() - derived).abs() > INTENSITY_REL_TOL * scale {
                out.push(violation(
                    &subject,
                    format!(
                        "intensity {} inconsistent with rate x mean service time {}",
                        q.intensity(),
                        derived
                    ),
                ));
            }
        }
    }
    out
}

/// Policy invariants against a config: periodic orders must be permutations
/// of the transmitter-slot multiset; frame ratios must leave capacity.
pub fn validate_policy(config: &PonConfig, policy: &PollingPolicy) -> Vec<Violation> {
    let mut out = Vec::new();
    match policy {
        PollingPolicy::Random => {}
        PollingPolicy::Periodic { orders: None } => {}
        PollingPolicy::Periodic { orders: Some(orders) } => {
            if orders.len() != config.n_wavelengths {
                out.push(violation(
                    "policy",
                    format!(
                        "{} periodic orders for {} wavelengths",
                        orders.len(),
                        config.n_wavelengths
                    ),
                ));
            }
            let mut expected: Vec<usize> = Vec::new();
            for (i, onu) in config.onus.iter().enumerate() {
                expected.extend(std::iter::repeat(i).take(onu.transmitters));
            }
            expected.sort_unstable();
            for (w, order) in orders.iter().enumerate() {
                let mut got = order.clone();
                got.sort_unstable();
                if got != expected {
                    out.push(violation(
                        format!("policy wavelength {w}"),
                        "order is not a permutation of the transmitter slots",
                    ));
                }
            }
        }
        PollingPolicy::GponFrame { frame, delta_ratios } => {
            if !(*frame > 0.0) {
                out.push(violation("policy", "frame duration must be > 0"));
            }
            if delta_ratios.len() != config.n_onus() {
                out.push(violation(
                    "policy",
                    format!(
                        "{} overhead ratios for {} ONUs",
                        delta_ratios.len(),
                        config.n_onus()
                    ),
                ));
            }
            if delta_ratios.iter().any(|d| !(*d >= 0.0)) {
                out.push(violation("policy", "overhead ratios must be >= 0"));
            }
            let sum: f64 = delta_ratios.iter().sum();
            if sum >= 1.0 {
                out.push(violation(
                    "policy",
                    format!("overhead ratios sum to {sum}; no capacity remains"),
                ));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(s: f64) -> PacketLaw {
        PacketLaw::Deterministic(s)
    }

    #[test]
    fn valid_uniform_config_passes() {
        let cfg = PonConfig::uniform(10, 5, 1, 1.2e-6, 8e-6);
        let tr = TrafficSpec::uniform(&cfg, 0.2, det(8e-6));
        assert!(validate(&cfg, &tr).is_empty());
    }

    #[test]
    fn transmitters_beyond_wavelengths_flagged() {
        let mut cfg = PonConfig::uniform(5, 5, 1, 1.2e-6, 8e-6);
        cfg.onus[3].transmitters = 7;
        let tr = TrafficSpec::uniform(&cfg, 0.2, det(8e-6));
        let violations = validate(&cfg, &tr);
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].subject, "onu 3");
        assert!(violations[0].message.contains("transmitters exceed wavelengths"));
    }

    #[test]
    fn traffic_shape_mismatch_flagged() {
        let cfg = PonConfig::uniform(5, 5, 1, 1.2e-6, 8e-6);
        let small = PonConfig::uniform(4, 5, 1, 1.2e-6, 8e-6);
        let tr = TrafficSpec::uniform(&small, 0.2, det(8e-6));
        let violations = validate(&cfg, &tr);
        assert_eq!(violations.len(), 1);
        assert!(violations[0].message.contains("4 ONU rows"));
    }

    #[test]
    fn loads_sum_as_defined() {
        let cfg = PonConfig {
            n_wavelengths: 2,
            onus: vec![
                OnuConfig {
                    transmitters: 1,
                    switch_overhead: 0.0,
                    queues: vec![QueueConfig::new(8e-6), QueueConfig::new(8e-6)],
                },
                OnuConfig {
                    transmitters: 1,
                    switch_overhead: 0.0,
                    queues: vec![QueueConfig::new(8e-6)],
                },
            ],
        };
        let tr = TrafficSpec::new(vec![
            vec![
                QueueTraffic::with_intensity(0.2, det(8e-6)),
                QueueTraffic::with_intensity(0.3, det(8e-6)),
            ],
            vec![QueueTraffic::with_intensity(0.1, det(8e-6))],
        ]);
        assert!((tr.onu_load(0) - 0.5).abs() < 1e-15);
        assert!((tr.onu_load(1) - 0.1).abs() < 1e-15);
        assert!((tr.total_load() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn zero_traffic_sums_to_zero() {
        let cfg = PonConfig::uniform(20, 10, 1, 1.2e-6, 8e-6);
        let tr = TrafficSpec::uniform(&cfg, 0.0, det(8e-6));
        assert_eq!(tr.total_load(), 0.0);
    }

    #[test]
    fn twenty_onus_at_03_total_six() {
        let cfg = PonConfig::uniform(20, 10, 1, 1.2e-6, 8e-6);
        let tr = TrafficSpec::uniform(&cfg, 0.3, det(8e-6));
        assert!((tr.total_load() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn intensity_backsolves_rate() {
        let q = QueueTraffic::with_intensity(0.43, det(8e-6));
        assert!((q.rate() - 0.43 / 8e-6).abs() < 1e-6);
        assert!((q.intensity() - 0.43).abs() < 1e-15);
    }

    #[test]
    fn gpon_ratios_must_leave_capacity() {
        let cfg = PonConfig::uniform(4, 2, 1, 0.0, 8e-6);
        let policy = PollingPolicy::GponFrame { frame: 125e-6, delta_ratios: vec![0.3; 4] };
        let violations = validate_policy(&cfg, &policy);
        assert_eq!(violations.len(), 1);
        assert!(violations[0].message.contains("no capacity remains"));
    }
}
