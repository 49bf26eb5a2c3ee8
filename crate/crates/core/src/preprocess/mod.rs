//! Signal cleaning applied per axis and per sensor: calibration, moving
//! median, Butterworth band selection, Kalman smoothing and normalization
//! to `[-1, 1]`.

mod butterworth;

pub use butterworth::{butterworth, Butterworth, FilterKind, Section};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{RecordingSession, SensorKind, TriaxialSeries};

/// Whether the full cleaning chain runs or only calibration ("raw" data).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PipelineMode {
    #[default]
    Full,
    CalibrationOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub mode: PipelineMode,
    pub median_window_gyro: usize,
    pub median_window_accel: usize,
    /// Maximum gyroscope sampling delay, µs.
    pub gyro_delay_us: f64,
    /// Maximum accelerometer sampling delay, µs.
    pub accel_delay_us: f64,
    pub gyro_lowpass_hz: f64,
    pub accel_highpass_hz: f64,
    pub butterworth_order: usize,
    pub kalman_q: f64,
    pub kalman_r: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            mode: PipelineMode::Full,
            median_window_gyro: 9,
            median_window_accel: 5,
            gyro_delay_us: 10_000.0,
            accel_delay_us: 62_500.0,
            gyro_lowpass_hz: 8.0,
            accel_highpass_hz: 0.3,
            butterworth_order: 2,
            kalman_q: 1e-3,
            kalman_r: 1e-1,
        }
    }
}

impl PreprocessConfig {
    pub fn raw() -> Self {
        PreprocessConfig {
            mode: PipelineMode::CalibrationOnly,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, w) in [
            ("median_window_gyro", self.median_window_gyro),
            ("median_window_accel", self.median_window_accel),
        ] {
            if w == 0 || w % 2 == 0 {
                return Err(Error::invalid(format!("{name} = {w} must be odd and >= 1")));
            }
        }
        if self.butterworth_order == 0 {
            return Err(Error::invalid("butterworth_order must be >= 1"));
        }
        for (name, cutoff, delay) in [
            ("gyro_lowpass_hz", self.gyro_lowpass_hz, self.gyro_delay_us),
            ("accel_highpass_hz", self.accel_highpass_hz, self.accel_delay_us),
        ] {
            let nyquist = sampling_frequency(delay)? / 2.0;
            if !(cutoff > 0.0 && cutoff < nyquist) {
                return Err(Error::invalid(format!(
                    "{name} = {cutoff} outside (0, {nyquist}) Hz"
                )));
            }
        }
        if !(self.kalman_q > 0.0 && self.kalman_r > 0.0) {
            return Err(Error::invalid("Kalman variances must be positive"));
        }
        Ok(())
    }

    fn median_window(&self, sensor: SensorKind) -> usize {
        match sensor {
            SensorKind::Gyroscope => self.median_window_gyro,
            SensorKind::Accelerometer => self.median_window_accel,
        }
    }

    fn band(&self, sensor: SensorKind) -> (FilterKind, f64, f64) {
        match sensor {
            SensorKind::Gyroscope => (FilterKind::LowPass, self.gyro_lowpass_hz, self.gyro_delay_us),
            SensorKind::Accelerometer => {
                (FilterKind::HighPass, self.accel_highpass_hz, self.accel_delay_us)
            }
        }
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Subtracts each axis' mean from its values.
pub fn calibrate(series: &TriaxialSeries) -> Result<TriaxialSeries> {
    if series.is_empty() {
        return Err(Error::invalid("cannot calibrate an empty series"));
    }
    series.map_axes(|axis| {
        let m = mean(axis);
        axis.iter().map(|v| v - m).collect()
    })
}

/// Sliding median over an odd window, replicating edge values.
pub fn median_filter(values: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::invalid(format!("median window {window} must be odd and >= 1")));
    }
    let n = values.len();
    if n == 0 || window == 1 {
        return Ok(values.to_vec());
    }
    let half = window / 2;
    let mut buf = vec![0.0; window];
    let out = (0..n)
        .map(|i| {
            for (k, slot) in buf.iter_mut().enumerate() {
                let j = (i + k).saturating_sub(half).min(n - 1);
                *slot = values[j];
            }
            let (_, m, _) = buf.select_nth_unstable_by(half, f64::total_cmp);
            *m
        })
        .collect();
    Ok(out)
}

/// Frequency in Hz of a sensor reporting every `delay_us` microseconds.
pub fn sampling_frequency(delay_us: f64) -> Result<f64> {
    if !(delay_us > 0.0) {
        return Err(Error::invalid(format!("sampling delay {delay_us} must be positive")));
    }
    Ok(1.0 / (delay_us * 1e-6))
}

/// Scalar random-walk Kalman filter: predict adds `q` to the variance,
/// update blends in each measurement with gain `p / (p + r)`.
pub fn kalman_smooth(values: &[f64], q: f64, r: f64) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::invalid("cannot smooth an empty sequence"));
    }
    if !(q > 0.0 && r > 0.0) {
        return Err(Error::invalid("Kalman variances must be positive"));
    }
    let mut estimate = values[0];
    let mut variance = r;
    let mut out = Vec::with_capacity(values.len());
    out.push(estimate);
    for &m in &values[1..] {
        variance += q;
        let gain = variance / (variance + r);
        estimate += gain * (m - estimate);
        variance *= 1.0 - gain;
        out.push(estimate);
    }
    Ok(out)
}

/// Affine map of `[min, max]` onto `[-1, 1]`; constant input maps to zeros.
pub fn normalize(values: &[f64]) -> Vec<f64> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    if !(range > 0.0) {
        return vec![0.0; values.len()];
    }
    values
        .iter()
        .map(|&v| (2.0 * (v - lo) / range - 1.0).clamp(-1.0, 1.0))
        .collect()
}

/// Stage names applied to one sensor, in order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PipelineTrace {
    pub gyroscope: Vec<&'static str>,
    pub accelerometer: Vec<&'static str>,
}

fn process_series(
    series: &TriaxialSeries,
    config: &PreprocessConfig,
    trace: &mut Vec<&'static str>,
) -> Result<TriaxialSeries> {
    let sensor = series.sensor();
    let mut s = calibrate(series)?;
    trace.push("calibrate");
    if config.mode == PipelineMode::CalibrationOnly {
        return Ok(s);
    }

    let window = config.median_window(sensor);
    s = s.try_map_axes(|a| median_filter(a, window))?;
    trace.push("median");

    let (kind, cutoff, delay) = config.band(sensor);
    let rate = sampling_frequency(delay)?;
    let filter = Butterworth::design(kind, config.butterworth_order, cutoff, rate)?;
    if s.len() <= 3 * config.butterworth_order {
        return Err(Error::invalid(format!(
            "{sensor} series of {} samples too short to filter",
            s.len()
        )));
    }
    s = s.map_axes(|a| filter.apply(a))?;
    trace.push(match kind {
        FilterKind::LowPass => "butterworth-lowpass",
        FilterKind::HighPass => "butterworth-highpass",
    });

    s = s.try_map_axes(|a| kalman_smooth(a, config.kalman_q, config.kalman_r))?;
    trace.push("kalman");

    s = s.map_axes(normalize)?;
    trace.push("normalize");
    Ok(s)
}

/// Runs the cleaning chain on both sensors and reports the stages applied.
pub fn preprocess_pipeline_traced(
    session: &RecordingSession,
    config: &PreprocessConfig,
) -> Result<(RecordingSession, PipelineTrace)> {
    config.validate()?;
    let mut trace = PipelineTrace::default();
    let gyroscope = process_series(&session.gyroscope, config, &mut trace.gyroscope)?;
    let accelerometer = process_series(&session.accelerometer, config, &mut trace.accelerometer)?;
    let out = RecordingSession {
        id: session.id.clone(),
        gyroscope,
        accelerometer,
        labels: session.labels.clone(),
    };
    Ok((out, trace))
}

pub fn preprocess_pipeline(
    session: &RecordingSession,
    config: &PreprocessConfig,
) -> Result<RecordingSession> {
    preprocess_pipeline_traced(session, config).map(|(s, _)| s)
}
