use crate::descriptor::MetricKey;
use crate::telemetry::{TimeSeries, Tick};

use super::AnalysisError;

/// Number of standard deviations beyond which a value is clipped.
pub const OUTLIER_SIGMAS: f64 = 3.0;

/// A gap-free series on a regular tick grid, in original metric units.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSeries {
    pub key: MetricKey,
    pub start: Tick,
    pub step: Tick,
    pub values: Vec<f64>,
}

impl GridSeries {
    fn time_at(&self, i: usize) -> f64 {
        (self.start + i as Tick * self.step) as f64
    }

    /// Value at an arbitrary tick: linear between grid points, nearest
    /// beyond either end.
    pub fn value_at(&self, t: Tick) -> f64 {
        let n = self.values.len();
        if t <= self.start || n == 1 {
            return self.values[0];
        }
        let last = self.start + (n as Tick - 1) * self.step;
        if t >= last {
            return self.values[n - 1];
        }
        let offset = t - self.start;
        let i = (offset / self.step) as usize;
        let rem = offset % self.step;
        if rem == 0 {
            return self.values[i];
        }
        let frac = rem as f64 / self.step as f64;
        self.values[i] + (self.values[i + 1] - self.values[i]) * frac
    }

    /// Resample onto `len` points starting at `start` with spacing `step`.
    pub fn align(&self, start: Tick, step: Tick, len: usize) -> GridSeries {
        GridSeries {
            key: self.key.clone(),
            start,
            step,
            values: (0..len)
                .map(|i| self.value_at(start + i as Tick * step))
                .collect(),
        }
    }
}

/// A gap-free, outlier-clipped, min-max normalized series. All values lie in
/// `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CleanSeries {
    pub key: MetricKey,
    pub start: Tick,
    pub step: Tick,
    pub values: Vec<f64>,
}

impl CleanSeries {
    pub fn from_grid(g: GridSeries) -> Result<Self, AnalysisError> {
        Ok(CleanSeries {
            values: minmax_normalize(&g.values)?,
            key: g.key,
            start: g.start,
            step: g.step,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Clip values whose |z-score| exceeds three to the three-sigma bound.
/// Mean and (population) standard deviation are taken over the whole slice.
pub fn clip_outliers(values: &mut [f64]) {
    if values.is_empty() {
        return;
    }
    let (mean, std) = mean_std(values);
    let lo = mean - OUTLIER_SIGMAS * std;
    let hi = mean + OUTLIER_SIGMAS * std;
    for v in values.iter_mut() {
        *v = v.clamp(lo, hi);
    }
}

/// Regularize a raw series: clip outliers, then linearly interpolate interior
/// gaps and fill leading/trailing gaps with the nearest observed value, on a
/// grid of `step` ticks covering the first to the last timestamp.
pub fn clean_and_interpolate(s: &TimeSeries, step: Tick) -> Result<GridSeries, AnalysisError> {
    if step == 0 {
        return Err(AnalysisError::InvalidParameter("grid step must be positive".into()));
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    for smp in &s.samples {
        if let Some(v) = smp.value {
            times.push(smp.timestamp);
            values.push(v);
        }
    }
    if values.len() < 2 {
        return Err(AnalysisError::InsufficientData(format!(
            "`{}` has {} non-missing samples, need 2",
            s.key,
            values.len()
        )));
    }
    clip_outliers(&mut values);

    let first = s.samples.first().map(|x| x.timestamp).unwrap_or(times[0]);
    let last = s.samples.last().map(|x| x.timestamp).unwrap_or(times[times.len() - 1]);
    let len = ((last - first) / step) as usize + 1;

    let mut out = Vec::with_capacity(len);
    let mut j = 0; // first observed index with time >= t
    for i in 0..len {
        let t = first + i as Tick * step;
        while j < times.len() && times[j] < t {
            j += 1;
        }
        let v = if j == 0 {
            values[0]
        } else if j == times.len() {
            values[times.len() - 1]
        } else if times[j] == t {
            values[j]
        } else {
            let (t0, t1) = (times[j - 1] as f64, times[j] as f64);
            let frac = (t as f64 - t0) / (t1 - t0);
            values[j - 1] + (values[j] - values[j - 1]) * frac
        };
        out.push(v);
    }
    let g = GridSeries {
        key: s.key.clone(),
        start: first,
        step,
        values: out,
    };
    debug_assert!(g.time_at(len - 1) <= last as f64);
    Ok(g)
}

/// `(x - min) / (max - min)` elementwise. A constant input maps to zeros.
pub fn minmax_normalize(v: &[f64]) -> Result<Vec<f64>, AnalysisError> {
    if v.is_empty() {
        return Err(AnalysisError::Empty);
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(AnalysisError::NonFinite);
    }
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    if range == 0.0 {
        return Ok(vec![0.0; v.len()]);
    }
    Ok(v.iter().map(|x| ((x - min) / range).clamp(0.0, 1.0)).collect())
}

/// Pearson correlation coefficient. Zero-variance inputs correlate as 0.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64, AnalysisError> {
    if a.len() != b.len() {
        return Err(AnalysisError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 3 {
        return Err(AnalysisError::InsufficientData(format!(
            "correlation needs at least 3 points, got {}",
            a.len()
        )));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    if va == 0.0 || vb == 0.0 {
        return Ok(0.0);
    }
    Ok((cov / (va * vb).sqrt()).clamp(-1.0, 1.0))
}

pub fn correlation(a: &CleanSeries, b: &CleanSeries) -> Result<f64, AnalysisError> {
    pearson(&a.values, &b.values)
}
