//! Streaming statistics used by the simulators.

/// Running mean and variance (Welford).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MomentStats {
    count: u64,
    mean: f64,
    m2: f64,
}

impl MomentStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            f64::NAN
        } else {
            self.mean
        }
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            f64::NAN
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Coefficient of variation, sigma over mean.
    pub fn cov(&self) -> f64 {
        self.std_dev() / self.mean()
    }
}

/// Integrates a piecewise-constant counter over fixed windows.
///
/// Used for the fraction-of-wavelengths-in-overhead series: feed it every
/// change of the counter and it accumulates counter-seconds per window.
#[derive(Debug, Clone)]
pub(crate) struct WindowedIntegral {
    start: f64,
    window: f64,
    acc: Vec<f64>,
    last_time: f64,
    value: f64,
}

impl WindowedIntegral {
    pub fn new(start: f64, window: f64, n_windows: usize) -> Self {
        Self { start, window, acc: vec![0.0; n_windows], last_time: 0.0, value: 0.0 }
    }

    /// Advances to `time`, attributing `value * dt` to the windows covered.
    pub fn advance(&mut self, time: f64) {
        debug_assert!(time + 1e-12 >= self.last_time, "time must not go backwards");
        if self.value != 0.0 && time > self.last_time {
            let mut t0 = self.last_time.max(self.start);
            let t1 = time;
            while t0 < t1 {
                let idx = ((t0 - self.start) / self.window) as usize;
                if idx >= self.acc.len() {
                    break;
                }
                let window_end = self.start + (idx + 1) as f64 * self.window;
                let seg_end = t1.min(window_end);
                self.acc[idx] += self.value * (seg_end - t0);
                t0 = seg_end;
            }
        }
        self.last_time = self.last_time.max(time);
    }

    pub fn set_value(&mut self, time: f64, value: f64) {
        self.advance(time);
        self.value = value;
    }

    pub fn add(&mut self, time: f64, delta: f64) {
        self.advance(time);
        self.value += delta;
    }

    /// Per-window integral, divided by `scale * window` (e.g. wavelength
    /// count) to turn counter-seconds into a fraction.
    pub fn fractions(&self, scale: f64) -> Vec<f64> {
        self.acc.iter().map(|a| a / (scale * self.window)).collect()
    }
}

/// Least-squares slope of `y` against `t` over the tail of a sample grid.
///
/// The verdict machinery uses the second half of the post-warmup samples,
/// which is robust against a transient that survived the warmup.
pub fn tail_slope(times: &[f64], values: &[f64]) -> f64 {
    debug_assert_eq!(times.len(), values.len());
    let n = times.len();
    if n < 4 {
        return 0.0;
    }
    let from = n / 2;
    let ts = &times[from..];
    let ys = &values[from..];
    let m = ts.len() as f64;
    let t_mean = ts.iter().sum::<f64>() / m;
    let y_mean = ys.iter().sum::<f64>() / m;
    let mut num = 0.0;
    let mut den = 0.0;
    for (t, y) in ts.iter().zip(ys) {
        num += (t - t_mean) * (y - y_mean);
        den += (t - t_mean) * (t - t_mean);
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_match_closed_form() {
        let mut m = MomentStats::default();
        for x in [2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0] {
            m.push(x);
        }
        assert_eq!(m.count(), 8);
        assert!((m.mean() - 5.0).abs() < 1e-12);
        assert!((m.variance() - 32.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn windowed_integral_splits_across_boundaries() {
        let mut w = WindowedIntegral::new(0.0, 1.0, 3);
        w.set_value(0.0, 2.0); // 2 units on [0, 1.5)
        w.set_value(1.5, 0.0); // 0 on [1.5, 2.5)
        w.set_value(2.5, 4.0); // 4 on [2.5, 3.0)
        w.advance(3.0);
        let f = w.fractions(1.0);
        assert!((f[0] - 2.0).abs() < 1e-12);
        assert!((f[1] - 1.0).abs() < 1e-12);
        assert!((f[2] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn slope_recovers_linear_growth() {
        let times: Vec<f64> = (0..100).map(|k| k as f64 * 0.1).collect();
        let values: Vec<f64> = times.iter().map(|t| 3.0 + 2.0 * t).collect();
        assert!((tail_slope(&times, &values) - 2.0).abs() < 1e-9);
    }
}
