//! Analytical capacity engine: stability conditions for multiserver polling
//! systems with grant limits, server limits, and the mean-field vacation
//! fixed point for large systems.
//!
//! Everything here is a pure function of an immutable config and traffic
//! spec; all operations are reentrant and thread-safe.

use thiserror::Error;

use crate::model::{PonConfig, TrafficSpec};

/// Default relative tolerance for the vacation fixed point.
pub const DEFAULT_TOLERANCE: f64 = 1e-10;
/// Default iteration cap before the solver falls back to bisection.
pub const DEFAULT_MAX_ITERS: usize = 10_000;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    /// Offered load at or above the number of wavelengths: no stationary
    /// regime exists and no cycle/vacation quantity is defined.
    #[error("offered load {rho} >= {wavelengths} wavelengths: no stationary solution")]
    NoSolution { rho: f64, wavelengths: usize },
    /// The vacation fixed point needs more transmitter slots than
    /// wavelengths; otherwise every active ONU always holds a server and
    /// the mean vacation is identically zero.
    #[error("vacation regime requires more transmitter slots than wavelengths (slots {slots} <= {wavelengths})")]
    Regime { slots: usize, wavelengths: usize },
    /// The classical condition assumes no server limits (t_i = L for all i).
    #[error("classical stability assumes t_i = L at every ONU; ONU {onu} has {transmitters} of {wavelengths}")]
    ServerLimited { onu: usize, transmitters: usize, wavelengths: usize },
    /// The uniform-overhead corollary only covers equal switch overheads.
    #[error("uniform-overhead condition requires equal switch overheads")]
    HeterogeneousOverhead,
    /// The uniform-overhead corollary only covers one transmitter per ONU.
    #[error("uniform-overhead condition requires one transmitter per ONU")]
    MultiTransmitter,
    /// Frame overhead ratios leave no usable capacity.
    #[error("frame overhead ratios sum to {sum} >= 1: no capacity remains")]
    FrameOverhead { sum: f64 },
    #[error("invalid input: {0}")]
    Invalid(String),
}

/// Joint solution of the vacation/overhead balance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanFieldSolution {
    /// Mean vacation interval, seconds.
    pub theta: f64,
    /// Equilibrium mean switchover per visit, seconds.
    pub delta: f64,
    /// Iterations spent (0 when the closed form applied).
    pub iterations: usize,
    /// Relative residual of the balance equation at the returned theta.
    pub residual: f64,
}

/// Per-queue stability verdict. Boundary equalities are knife edges and are
/// reported as indeterminate rather than rounded either way.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueueVerdict {
    Stable,
    Saturated,
    Indeterminate,
}

/// Whole-system verdict derived from the per-queue ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemVerdict {
    /// Every queue is strictly stable.
    Stable,
    /// At least one queue saturates.
    Saturated,
    /// No queue saturates but at least one sits exactly on its boundary.
    Indeterminate,
}

/// One row per queue of the analyzed system.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueFinding {
    pub onu: usize,
    pub queue: usize,
    pub intensity: f64,
    /// Left-hand side minus right-hand side of the governing inequality;
    /// negative means stable. For saturated queues this is the margin at
    /// the round in which the queue was moved into the saturated set.
    pub margin: f64,
    pub verdict: QueueVerdict,
}

/// Result of a stability analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    /// Every queue exactly once, in `(onu, queue)` order.
    pub findings: Vec<QueueFinding>,
    /// Saturated set, in the order queues were added.
    pub saturated: Vec<(usize, usize)>,
    /// Vacation solution backing the verdicts, when one was computed.
    pub mean_field: Option<MeanFieldSolution>,
    pub system: SystemVerdict,
}

impl StabilityReport {
    pub fn all_stable(&self) -> bool {
        self.system == SystemVerdict::Stable
    }

    pub fn verdict(&self, onu: usize, queue: usize) -> QueueVerdict {
        self.findings
            .iter()
            .find(|f| f.onu == onu && f.queue == queue)
            .map(|f| f.verdict)
            .expect("queue index out of range")
    }

    fn from_findings(
        findings: Vec<QueueFinding>,
        saturated: Vec<(usize, usize)>,
        mean_field: Option<MeanFieldSolution>,
    ) -> Self {
        let system = if findings.iter().any(|f| f.verdict == QueueVerdict::Saturated) {
            SystemVerdict::Saturated
        } else if findings.iter().any(|f| f.verdict == QueueVerdict::Indeterminate) {
            SystemVerdict::Indeterminate
        } else {
            SystemVerdict::Stable
        };
        Self { findings, saturated, mean_field, system }
    }
}

fn verdict_of_margin(margin: f64) -> QueueVerdict {
    if margin < 0.0 {
        QueueVerdict::Stable
    } else if margin > 0.0 {
        QueueVerdict::Saturated
    } else {
        QueueVerdict::Indeterminate
    }
}

/// Which key orders candidates when growing the saturated set. The overhead
/// ratio is the one the saturated-set procedure prescribes; including the
/// vacation term is exposed for sensitivity checks because the two orderings
/// can differ on heterogeneous systems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SaturationOrdering {
    #[default]
    OverheadOnly,
    OverheadPlusTheta,
}

/// Tunables for the mean-field solver and the saturated-set procedure.
#[derive(Debug, Clone, Copy)]
pub struct MeanFieldOptions {
    pub tolerance: f64,
    pub max_iters: usize,
    pub ordering: SaturationOrdering,
    /// Skip the equal-overhead closed form (used to cross-check the two
    /// paths against each other).
    pub force_iterative: bool,
}

impl Default for MeanFieldOptions {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_TOLERANCE,
            max_iters: DEFAULT_MAX_ITERS,
            ordering: SaturationOrdering::default(),
            force_iterative: false,
        }
    }
}

// ── classical regime: grant limits, no server limits ────────────────────

/// Stability of the limited-gated system without server limits
/// (every ONU may host all `L` wavelengths).
///
/// A queue is stable iff its offered load plus its grant-pressure share of
/// the total switch overhead fits within `L`. Queues that fail are moved
/// into the saturated set one at a time (largest grant pressure first);
/// each removal swaps the queue's traffic for its grant in the overhead
/// account, and the remaining queues are re-tested against the relaxed
/// condition.
pub fn classical_stability(
    config: &PonConfig,
    traffic: &TrafficSpec,
) -> Result<StabilityReport, AnalysisError> {
    let l = config.n_wavelengths;
    for (i, onu) in config.onus.iter().enumerate() {
        if onu.transmitters != l {
            return Err(AnalysisError::ServerLimited {
                onu: i,
                transmitters: onu.transmitters,
                wavelengths: l,
            });
        }
    }
    let queues = flatten(config, traffic);
    let l = l as f64;
    let overhead_sum = config.switch_overhead_sum();

    let mut saturated = vec![false; queues.len()];
    let mut order = Vec::new();
    let mut saturation_margin = vec![f64::NAN; queues.len()];
    loop {
        let extra_overhead: f64 =
            zip_saturated(&queues, &saturated).map(|q| q.grant).sum();
        let rho_eff: f64 =
            zip_active(&queues, &saturated).map(|q| q.intensity).sum();
        let common = overhead_sum + extra_overhead;

        // Worst violator: with a shared overhead sum the margin is
        // increasing in the grant pressure, so the max-pressure violator
        // is the worst one.
        let worst = queues
            .iter()
            .enumerate()
            .filter(|(k, _)| !saturated[*k])
            .map(|(k, q)| (k, rho_eff + q.pressure * common - l))
            .filter(|(_, m)| *m > 0.0)
            .max_by(|a, b| {
                let pa = queues[a.0].pressure;
                let pb = queues[b.0].pressure;
                pa.total_cmp(&pb)
            });
        match worst {
            Some((k, margin)) => {
                saturated[k] = true;
                saturation_margin[k] = margin;
                order.push((queues[k].onu, queues[k].queue));
            }
            None => break,
        }
    }

    let extra_overhead: f64 = zip_saturated(&queues, &saturated).map(|q| q.grant).sum();
    let rho_eff: f64 = zip_active(&queues, &saturated).map(|q| q.intensity).sum();
    let common = overhead_sum + extra_overhead;
    let findings = queues
        .iter()
        .enumerate()
        .map(|(k, q)| {
            let (margin, verdict) = if saturated[k] {
                (saturation_margin[k], QueueVerdict::Saturated)
            } else {
                let m = rho_eff + q.pressure * common - l;
                (m, verdict_of_margin(m))
            };
            QueueFinding { onu: q.onu, queue: q.queue, intensity: q.intensity, margin, verdict }
        })
        .collect();
    Ok(StabilityReport::from_findings(findings, order, None))
}

/// Mean time between successive wavelength visits to any given ONU in the
/// stable no-server-limit regime: total overhead divided by the residual
/// capacity.
pub fn mean_cycle_time(config: &PonConfig, traffic: &TrafficSpec) -> Result<f64, AnalysisError> {
    let l = config.n_wavelengths as f64;
    let rho = traffic.total_load();
    if rho >= l {
        return Err(AnalysisError::NoSolution { rho, wavelengths: config.n_wavelengths });
    }
    Ok(config.switch_overhead_sum() / (l - rho))
}

// ── server limits, unlimited gated service ──────────────────────────────

/// Stability with transmitter limits and unlimited gated service: stable
/// iff every ONU's load fits its transmitter quota and the total load fits
/// the wavelength count. Grant limits are ignored in this regime.
pub fn server_limit_stability(config: &PonConfig, traffic: &TrafficSpec) -> StabilityReport {
    let l = config.n_wavelengths as f64;
    let rho = traffic.total_load();
    let global_margin = rho - l;

    let mut findings = Vec::new();
    let mut saturated = Vec::new();
    for (i, onu) in config.onus.iter().enumerate() {
        let rho_i = traffic.onu_load(i);
        let onu_margin = rho_i - onu.transmitters as f64;
        for (j, _) in onu.queues.iter().enumerate() {
            let intensity = traffic.get(i, j).intensity();
            // A queue with no traffic is empty almost surely regardless of
            // what happens around it.
            let margin = if intensity == 0.0 {
                global_margin
            } else {
                onu_margin.max(global_margin)
            };
            let verdict =
                if intensity == 0.0 && global_margin >= 0.0 && rho > 0.0 && global_margin == 0.0 {
                    QueueVerdict::Indeterminate
                } else if intensity == 0.0 && global_margin > 0.0 {
                    // Overload elsewhere does not back up an empty queue.
                    QueueVerdict::Stable
                } else {
                    verdict_of_margin(margin)
                };
            if verdict == QueueVerdict::Saturated {
                saturated.push((i, j));
            }
            findings.push(QueueFinding { onu: i, queue: j, intensity, margin, verdict });
        }
    }
    StabilityReport::from_findings(findings, saturated, None)
}

// ── mean-field vacation fixed point ─────────────────────────────────────

/// One transmitter slot with its effective overhead and load share.
struct SlotView {
    /// (effective overhead, load share) per slot.
    slots: Vec<(f64, f64)>,
    rho: f64,
}

/// Expands ONUs into transmitter slots. ONU `i` contributes `t_i` slots,
/// each carrying the ONU's effective per-visit overhead and an equal share
/// of the ONU's (effective) load.
fn slot_view(config: &PonConfig, onu_rho: &[f64], onu_extra: &[f64]) -> SlotView {
    let mut slots = Vec::with_capacity(config.total_transmitters());
    let mut rho = 0.0;
    for (i, onu) in config.onus.iter().enumerate() {
        let t = onu.transmitters as f64;
        let share = onu_rho[i] / t;
        rho += onu_rho[i];
        let eff = onu.switch_overhead + onu_extra[i];
        for _ in 0..onu.transmitters {
            slots.push((eff, share));
        }
    }
    SlotView { slots, rho }
}

/// Visit-weighted mean overhead for a trial vacation length. Weights are
/// the per-slot visit rates; slots loaded beyond one wavelength get weight
/// zero (they are about to be resolved by the saturated-set procedure).
fn delta_of_theta(slots: &[(f64, f64)], theta: f64) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for &(delta_i, rho_i) in slots {
        let w = (1.0 - rho_i).max(0.0) / (delta_i + theta);
        num += w * delta_i;
        den += w;
    }
    if den == 0.0 {
        // All slots saturated: every visit consumes the full effective
        // overhead; report the plain average.
        let n = slots.len() as f64;
        return slots.iter().map(|s| s.0).sum::<f64>() / n;
    }
    num / den
}

fn solve_theta_on_slots(
    view: &SlotView,
    l: usize,
    opts: &MeanFieldOptions,
) -> Result<MeanFieldSolution, AnalysisError> {
    let m = view.slots.len();
    if m <= l {
        return Err(AnalysisError::Regime { slots: m, wavelengths: l });
    }
    let lf = l as f64;
    if view.rho >= lf {
        return Err(AnalysisError::NoSolution { rho: view.rho, wavelengths: l });
    }
    let excess = (m - l) as f64;
    let capacity = lf - view.rho;

    let min_delta = view.slots.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let max_delta = view.slots.iter().map(|s| s.0).fold(0.0f64, f64::max);
    if max_delta == 0.0 {
        // No overheads anywhere: visits are instantaneous and vacations
        // vanish.
        return Ok(MeanFieldSolution { theta: 0.0, delta: 0.0, iterations: 0, residual: 0.0 });
    }
    if !opts.force_iterative && min_delta == max_delta {
        let delta = min_delta;
        let theta = excess * delta / capacity;
        return Ok(MeanFieldSolution { theta, delta, iterations: 0, residual: 0.0 });
    }

    // Fixed-point iteration from the optimistic end.
    let mut theta = excess * min_delta / capacity;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iters {
        let next = excess * delta_of_theta(&view.slots, theta) / capacity;
        iterations += 1;
        let change = (next - theta).abs();
        theta = next;
        if change <= opts.tolerance * theta.max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }

    if !converged {
        // Guaranteed-termination fallback: the balance residual
        // g(theta) = theta - excess * delta(theta) / capacity
        // brackets a root on [0, excess * max_delta / capacity].
        let g = |th: f64| th - excess * delta_of_theta(&view.slots, th) / capacity;
        let mut lo = 0.0;
        let mut hi = excess * max_delta / capacity;
        if g(hi) < 0.0 {
            theta = hi;
        } else {
            for _ in 0..200 {
                iterations += 1;
                let mid = 0.5 * (lo + hi);
                if g(mid) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            theta = 0.5 * (lo + hi);
        }
    }

    let delta = delta_of_theta(&view.slots, theta);
    let balance = excess * delta / capacity;
    let residual = (theta - balance).abs() / theta.abs().max(f64::MIN_POSITIVE);
    Ok(MeanFieldSolution { theta, delta, iterations, residual })
}

/// Solves the vacation/overhead balance for the equilibrium mean vacation.
///
/// `extra_overhead` adds per-ONU seconds to every visit (the saturated-set
/// procedure passes the grants of saturated queues through it); pass an
/// empty slice or zeros for none. When all effective overheads are equal
/// the closed form is returned exactly; otherwise fixed-point iteration
/// with a bracketed-bisection fallback.
pub fn solve_mean_field(
    config: &PonConfig,
    traffic: &TrafficSpec,
    extra_overhead: &[f64],
    tolerance: f64,
    max_iters: usize,
) -> Result<MeanFieldSolution, AnalysisError> {
    let opts = MeanFieldOptions { tolerance, max_iters, ..Default::default() };
    solve_mean_field_opts(config, traffic, extra_overhead, &opts)
}

/// [`solve_mean_field`] with full options.
pub fn solve_mean_field_opts(
    config: &PonConfig,
    traffic: &TrafficSpec,
    extra_overhead: &[f64],
    opts: &MeanFieldOptions,
) -> Result<MeanFieldSolution, AnalysisError> {
    let n = config.n_onus();
    if !extra_overhead.is_empty() && extra_overhead.len() != n {
        return Err(AnalysisError::Invalid(format!(
            "{} extra-overhead entries for {} ONUs",
            extra_overhead.len(),
            n
        )));
    }
    let zeros = vec![0.0; n];
    let extra = if extra_overhead.is_empty() { &zeros } else { extra_overhead };
    let onu_rho: Vec<f64> = (0..n).map(|i| traffic.onu_load(i)).collect();
    let view = slot_view(config, &onu_rho, extra);
    solve_theta_on_slots(&view, config.n_wavelengths, opts)
}

/// Internal queue record used by the saturation drivers.
struct FlatQueue {
    onu: usize,
    queue: usize,
    intensity: f64,
    grant: f64,
    /// rho_ij / d_ij — how hard the queue leans on its grant.
    pressure: f64,
}

fn flatten(config: &PonConfig, traffic: &TrafficSpec) -> Vec<FlatQueue> {
    let mut out = Vec::with_capacity(config.queue_count());
    for (i, onu) in config.onus.iter().enumerate() {
        for (j, q) in onu.queues.iter().enumerate() {
            let intensity = traffic.get(i, j).intensity();
            let pressure = if intensity == 0.0 { 0.0 } else { intensity / q.grant_limit };
            out.push(FlatQueue { onu: i, queue: j, intensity, grant: q.grant_limit, pressure });
        }
    }
    out
}

fn zip_saturated<'a>(
    queues: &'a [FlatQueue],
    saturated: &'a [bool],
) -> impl Iterator<Item = &'a FlatQueue> {
    queues.iter().zip(saturated).filter(|(_, s)| **s).map(|(q, _)| q)
}

fn zip_active<'a>(
    queues: &'a [FlatQueue],
    saturated: &'a [bool],
) -> impl Iterator<Item = &'a FlatQueue> {
    queues.iter().zip(saturated).filter(|(_, s)| !**s).map(|(q, _)| q)
}

/// Mean-field stability with the saturated-set procedure.
///
/// Queues are tested against the per-queue vacation condition
/// `rho_i + (rho_ij/d_ij)(overhead_i + theta) < t_i`. While violators
/// exist, the one with the largest ordering key is declared saturated:
/// its traffic leaves the load accounting and its grant joins the ONU's
/// per-visit overhead, and the vacation balance is re-solved. Saturated
/// queues never return, so the procedure ends after at most one round per
/// queue.
pub fn mean_field_stability(
    config: &PonConfig,
    traffic: &TrafficSpec,
) -> Result<StabilityReport, AnalysisError> {
    mean_field_stability_opts(config, traffic, &MeanFieldOptions::default())
}

/// [`mean_field_stability`] with full options.
pub fn mean_field_stability_opts(
    config: &PonConfig,
    traffic: &TrafficSpec,
    opts: &MeanFieldOptions,
) -> Result<StabilityReport, AnalysisError> {
    let n = config.n_onus();
    let l = config.n_wavelengths;
    let queues = flatten(config, traffic);
    let total_slots = config.total_transmitters();

    let mut saturated = vec![false; queues.len()];
    let mut order = Vec::new();
    let mut saturation_margin = vec![f64::NAN; queues.len()];
    let mut solution: Option<MeanFieldSolution> = None;

    // Effective per-ONU state, updated as queues saturate.
    let mut onu_rho = vec![0.0; n];
    for q in &queues {
        onu_rho[q.onu] += q.intensity;
    }
    let mut onu_extra = vec![0.0; n];

    let max_rounds = queues.len() + 1;
    for _ in 0..max_rounds {
        let view = slot_view(config, &onu_rho, &onu_extra);
        let theta = if total_slots <= l {
            // Every active ONU always holds a server; vacations vanish.
            solution = None;
            0.0
        } else if view.rho >= l as f64 {
            // No stationary vacation exists at this load; the margins
            // below stay meaningful (they are >= the rho_i - t_i part) and
            // the worst queue is peeled off until capacity reappears.
            solution = None;
            f64::INFINITY
        } else {
            let sol = solve_theta_on_slots(&view, l, opts)?;
            let th = sol.theta;
            solution = Some(sol);
            th
        };

        let margin_of = |q: &FlatQueue| {
            let t_i = config.onus[q.onu].transmitters as f64;
            let overhead = config.onus[q.onu].switch_overhead + onu_extra[q.onu];
            if q.pressure == 0.0 {
                onu_rho[q.onu] - t_i
            } else if theta.is_infinite() {
                f64::INFINITY
            } else {
                onu_rho[q.onu] + q.pressure * (overhead + theta) - t_i
            }
        };

        // Saturate the violator with the largest ordering key. Zero-rate
        // queues never saturate: their backlog is empty almost surely.
        let worst = queues
            .iter()
            .enumerate()
            .filter(|(k, q)| !saturated[*k] && q.pressure > 0.0)
            .map(|(k, q)| (k, margin_of(q)))
            .filter(|(_, m)| *m > 0.0)
            .max_by(|a, b| {
                let key = |k: usize| {
                    let q = &queues[k];
                    let overhead = config.onus[q.onu].switch_overhead + onu_extra[q.onu];
                    match opts.ordering {
                        SaturationOrdering::OverheadOnly => q.pressure * overhead,
                        SaturationOrdering::OverheadPlusTheta => {
                            q.pressure * (overhead + if theta.is_finite() { theta } else { 0.0 })
                        }
                    }
                };
                key(a.0).total_cmp(&key(b.0))
            });

        match worst {
            Some((k, margin)) => {
                let q = &queues[k];
                saturated[k] = true;
                saturation_margin[k] = margin;
                order.push((q.onu, q.queue));
                onu_rho[q.onu] -= q.intensity;
                onu_extra[q.onu] += q.grant;
            }
            None => break,
        }
    }

    // Final margins at the settled vacation value.
    let theta = match &solution {
        Some(s) => s.theta,
        None if total_slots <= l => 0.0,
        None => {
            // Only reachable if saturating every positive queue still
            // leaves rho >= L, which cannot happen (saturated traffic
            // leaves rho). Guard anyway.
            return Err(AnalysisError::NoSolution {
                rho: onu_rho.iter().sum(),
                wavelengths: l,
            });
        }
    };
    let findings = queues
        .iter()
        .enumerate()
        .map(|(k, q)| {
            let t_i = config.onus[q.onu].transmitters as f64;
            let overhead = config.onus[q.onu].switch_overhead + onu_extra[q.onu];
            let (margin, verdict) = if saturated[k] {
                (saturation_margin[k], QueueVerdict::Saturated)
            } else {
                let m = if q.pressure == 0.0 {
                    onu_rho[q.onu] - t_i
                } else {
                    onu_rho[q.onu] + q.pressure * (overhead + theta) - t_i
                };
                (m, verdict_of_margin(m))
            };
            QueueFinding { onu: q.onu, queue: q.queue, intensity: q.intensity, margin, verdict }
        })
        .collect();
    Ok(StabilityReport::from_findings(findings, order, solution))
}

/// Direct stability check for systems where every ONU has the same switch
/// overhead and one transmitter: the load plus the worst grant-pressure
/// term must fit within the wavelength count. No saturation resolution is
/// performed; violating queues are reported as saturated outright.
///
/// The whole-system verdict always matches [`mean_field_stability`] on the
/// same input.
pub fn uniform_overhead_stability(
    config: &PonConfig,
    traffic: &TrafficSpec,
) -> Result<StabilityReport, AnalysisError> {
    let delta = config.uniform_overhead().ok_or(AnalysisError::HeterogeneousOverhead)?;
    if config.onus.iter().any(|o| o.transmitters != 1) {
        return Err(AnalysisError::MultiTransmitter);
    }
    let n = config.n_onus() as f64;
    let l = config.n_wavelengths as f64;
    let rho = traffic.total_load();

    let queues = flatten(config, traffic);
    let findings: Vec<QueueFinding> = queues
        .iter()
        .map(|q| {
            let rho_i = traffic.onu_load(q.onu);
            let margin = if q.pressure == 0.0 {
                rho - l
            } else if rho_i >= 1.0 {
                // Pole of the corollary: the ONU is loaded beyond one
                // wavelength, so the queue cannot be stable.
                f64::INFINITY
            } else {
                rho + q.pressure * delta * (n - rho) / (1.0 - rho_i) - l
            };
            let verdict = if q.pressure == 0.0 && margin > 0.0 {
                // Zero-rate queues stay empty regardless of the load around
                // them.
                QueueVerdict::Stable
            } else {
                verdict_of_margin(margin)
            };
            QueueFinding { onu: q.onu, queue: q.queue, intensity: q.intensity, margin, verdict }
        })
        .collect();
    let saturated = findings
        .iter()
        .filter(|f| f.verdict == QueueVerdict::Saturated)
        .map(|f| (f.onu, f.queue))
        .collect();
    Ok(StabilityReport::from_findings(findings, saturated, None))
}

/// Frame-mode stability: the total load must fit the capacity left by the
/// summed overhead ratios, and each ONU's load must fit its transmitter
/// quota scaled by its own ratio.
pub fn gpon_frame_stability(
    config: &PonConfig,
    traffic: &TrafficSpec,
    delta_ratios: &[f64],
) -> Result<StabilityReport, AnalysisError> {
    let n = config.n_onus();
    if delta_ratios.len() != n {
        return Err(AnalysisError::Invalid(format!(
            "{} overhead ratios for {} ONUs",
            delta_ratios.len(),
            n
        )));
    }
    if delta_ratios.iter().any(|d| !(*d >= 0.0)) {
        return Err(AnalysisError::Invalid("overhead ratios must be >= 0".into()));
    }
    let ratio_sum: f64 = delta_ratios.iter().sum();
    if ratio_sum >= 1.0 {
        return Err(AnalysisError::FrameOverhead { sum: ratio_sum });
    }
    let l = config.n_wavelengths as f64;
    let rho = traffic.total_load();
    let global_margin = rho - l * (1.0 - ratio_sum);

    let mut findings = Vec::new();
    let mut saturated = Vec::new();
    for (i, onu) in config.onus.iter().enumerate() {
        let rho_i = traffic.onu_load(i);
        let onu_margin = rho_i - onu.transmitters as f64 * (1.0 - delta_ratios[i]);
        for (j, _) in onu.queues.iter().enumerate() {
            let intensity = traffic.get(i, j).intensity();
            let margin =
                if intensity == 0.0 { global_margin } else { onu_margin.max(global_margin) };
            let verdict = if intensity == 0.0 && margin > 0.0 {
                QueueVerdict::Stable
            } else {
                verdict_of_margin(margin)
            };
            if verdict == QueueVerdict::Saturated {
                saturated.push((i, j));
            }
            findings.push(QueueFinding { onu: i, queue: j, intensity, margin, verdict });
        }
    }
    Ok(StabilityReport::from_findings(findings, saturated, None))
}
