//! Constant-rate resampling, accelerometer alignment onto the gyroscope
//! grid, and assembly of per-frame fused vectors.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Millis, RecordingSession, SensorKind, TriaxialSeries};

/// Which axes (or axis means) of each sensor make up a fused frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum FusionStrategy {
    G3,
    A3,
    Gmean,
    Amean,
    GmeanAmean,
    GmeanA3,
    G3Amean,
    G3A3,
}

impl FusionStrategy {
    pub const ALL: [FusionStrategy; 8] = [
        FusionStrategy::G3,
        FusionStrategy::A3,
        FusionStrategy::Gmean,
        FusionStrategy::Amean,
        FusionStrategy::GmeanAmean,
        FusionStrategy::GmeanA3,
        FusionStrategy::G3Amean,
        FusionStrategy::G3A3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FusionStrategy::G3 => "g3",
            FusionStrategy::A3 => "a3",
            FusionStrategy::Gmean => "gmean",
            FusionStrategy::Amean => "amean",
            FusionStrategy::GmeanAmean => "gmeanamean",
            FusionStrategy::GmeanA3 => "gmeana3",
            FusionStrategy::G3Amean => "g3amean",
            FusionStrategy::G3A3 => "g3a3",
        }
    }

    /// Frame layout in plain notation, e.g. `<gx,gy,gz,ā>`.
    pub fn vector(self) -> &'static str {
        match self {
            FusionStrategy::G3 => "<gx,gy,gz>",
            FusionStrategy::A3 => "<ax,ay,az>",
            FusionStrategy::Gmean => "<ḡ>",
            FusionStrategy::Amean => "<ā>",
            FusionStrategy::GmeanAmean => "<ḡ,ā>",
            FusionStrategy::GmeanA3 => "<ḡ,ax,ay,az>",
            FusionStrategy::G3Amean => "<gx,gy,gz,ā>",
            FusionStrategy::G3A3 => "<gx,gy,gz,ax,ay,az>",
        }
    }

    pub fn dim(self) -> usize {
        let (g, a) = self.parts();
        g.dim() + a.dim()
    }

    fn parts(self) -> (Part, Part) {
        use Part::*;
        match self {
            FusionStrategy::G3 => (Axes, Skip),
            FusionStrategy::A3 => (Skip, Axes),
            FusionStrategy::Gmean => (Mean, Skip),
            FusionStrategy::Amean => (Skip, Mean),
            FusionStrategy::GmeanAmean => (Mean, Mean),
            FusionStrategy::GmeanA3 => (Mean, Axes),
            FusionStrategy::G3Amean => (Axes, Mean),
            FusionStrategy::G3A3 => (Axes, Axes),
        }
    }
}

#[derive(Clone, Copy)]
enum Part {
    Skip,
    Mean,
    Axes,
}

impl Part {
    fn dim(self) -> usize {
        match self {
            Part::Skip => 0,
            Part::Mean => 1,
            Part::Axes => 3,
        }
    }

    fn push(self, out: &mut Vec<f64>, v: [f64; 3]) {
        match self {
            Part::Skip => {}
            Part::Mean => out.push((v[0] + v[1] + v[2]) / 3.0),
            Part::Axes => out.extend_from_slice(&v),
        }
    }
}

impl fmt::Display for FusionStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FusionStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        FusionStrategy::ALL
            .into_iter()
            .find(|st| st.name() == key)
            .ok_or_else(|| Error::invalid(format!("unknown fusion strategy {s:?}")))
    }
}

impl TryFrom<String> for FusionStrategy {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<FusionStrategy> for String {
    fn from(s: FusionStrategy) -> String {
        s.name().to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    /// Target sampling interval in ms.
    pub interval_ms: Millis,
    pub strategy: FusionStrategy,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            interval_ms: 2,
            strategy: FusionStrategy::G3A3,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.interval_ms < 1 {
            return Err(Error::invalid(format!(
                "sampling interval {} ms must be >= 1",
                self.interval_ms
            )));
        }
        Ok(())
    }
}

/// Time-aligned fused frames on a constant grid, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct FusedFrameSequence {
    timestamps: Vec<Millis>,
    data: Vec<f64>,
    dim: usize,
    strategy: FusionStrategy,
}

impl FusedFrameSequence {
    pub fn timestamps(&self) -> &[Millis] {
        &self.timestamps
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn strategy(&self) -> FusionStrategy {
        self.strategy
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn frame(&self, index: usize) -> &[f64] {
        &self.data[index * self.dim..(index + 1) * self.dim]
    }

    /// Frames `start..end` as one contiguous row-major slice.
    pub fn frames(&self, start: usize, end: usize) -> &[f64] {
        &self.data[start * self.dim..end * self.dim]
    }

    /// Grid spacing, or `None` for fewer than two frames.
    pub fn interval(&self) -> Option<Millis> {
        (self.timestamps.len() >= 2).then(|| self.timestamps[1] - self.timestamps[0])
    }
}

/// Interpolates `(times, values)` at `at`, which must lie in
/// `[times[lo], times[lo + 1]]`.
#[inline]
fn lerp(times: &[Millis], values: &[f64], lo: usize, at: Millis) -> f64 {
    if times[lo] == at || lo + 1 == times.len() {
        return values[lo];
    }
    let (t0, t1) = (times[lo], times[lo + 1]);
    let w = (at - t0) as f64 / (t1 - t0) as f64;
    values[lo] + w * (values[lo + 1] - values[lo])
}

/// Samples every axis of `series` at `grid` (ascending) by linear
/// interpolation between the bracketing measurements, holding the first or
/// last measurement outside the measured span.
fn sample_at(series: &TriaxialSeries, grid: &[Millis]) -> Result<TriaxialSeries> {
    let times = series.timestamps();
    let n = times.len();
    let mut out = [
        Vec::with_capacity(grid.len()),
        Vec::with_capacity(grid.len()),
        Vec::with_capacity(grid.len()),
    ];
    let mut lo = 0;
    for &t in grid {
        let sample: [f64; 3] = if t <= times[0] {
            std::array::from_fn(|a| series.axis(a)[0])
        } else if t >= times[n - 1] {
            std::array::from_fn(|a| series.axis(a)[n - 1])
        } else {
            while times[lo + 1] <= t {
                lo += 1;
            }
            std::array::from_fn(|a| lerp(times, series.axis(a), lo, t))
        };
        for (axis, v) in out.iter_mut().zip(sample) {
            axis.push(v);
        }
    }
    let [x, y, z] = out;
    TriaxialSeries::new(series.sensor(), grid.to_vec(), x, y, z)
}

/// Resamples onto `t0, t0 + interval, ...` up to the last measurement
/// (remainders shorter than one interval are dropped).
pub fn resample_constant_rate(series: &TriaxialSeries, interval: Millis) -> Result<TriaxialSeries> {
    if interval < 1 {
        return Err(Error::invalid(format!("interval {interval} ms must be >= 1")));
    }
    let (t0, tn) = series
        .span()
        .filter(|_| series.len() >= 2)
        .ok_or_else(|| Error::invalid("resampling needs at least two points"))?;
    let count = (tn - t0) / interval + 1;
    let grid: Vec<Millis> = (0..count).map(|i| t0 + interval * i).collect();
    sample_at(series, &grid)
}

/// Accelerometer values interpolated at each gyroscope grid timestamp.
pub fn align_accelerometer(accel: &TriaxialSeries, grid: &[Millis]) -> Result<TriaxialSeries> {
    let (a0, an) = accel
        .span()
        .ok_or_else(|| Error::invalid("empty accelerometer series"))?;
    let (g0, gn) = match (grid.first(), grid.last()) {
        (Some(&f), Some(&l)) => (f, l),
        _ => return Err(Error::invalid("empty target grid")),
    };
    if an < g0 || a0 > gn {
        return Err(Error::invalid(format!(
            "accelerometer span [{a0}, {an}] does not overlap grid [{g0}, {gn}]"
        )));
    }
    sample_at(accel, grid)
}

/// Both sensors on the gyroscope's constant-rate grid.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignedSensors {
    pub gyroscope: TriaxialSeries,
    pub accelerometer: TriaxialSeries,
}

impl AlignedSensors {
    pub fn timestamps(&self) -> &[Millis] {
        self.gyroscope.timestamps()
    }
}

/// Resamples the gyroscope to `interval` and aligns the accelerometer onto
/// the resulting grid.
pub fn align_session(session: &RecordingSession, interval: Millis) -> Result<AlignedSensors> {
    let gyroscope = resample_constant_rate(&session.gyroscope, interval)?;
    let accelerometer = align_accelerometer(&session.accelerometer, gyroscope.timestamps())?;
    Ok(AlignedSensors {
        gyroscope,
        accelerometer,
    })
}

/// Assembles fused frames from two series sharing one constant grid.
pub fn fuse(
    gyro: &TriaxialSeries,
    accel: &TriaxialSeries,
    config: &FusionConfig,
) -> Result<FusedFrameSequence> {
    config.validate()?;
    if gyro.sensor() != SensorKind::Gyroscope || accel.sensor() != SensorKind::Accelerometer {
        return Err(Error::invalid("fuse expects (gyroscope, accelerometer)"));
    }
    if gyro.timestamps() != accel.timestamps() {
        return Err(Error::invalid("gyroscope and accelerometer grids differ"));
    }
    if let Some(w) = gyro
        .timestamps()
        .windows(2)
        .find(|w| w[1] - w[0] != config.interval_ms)
    {
        return Err(Error::invalid(format!(
            "grid spacing {} ms at t={} differs from {} ms",
            w[1] - w[0],
            w[0],
            config.interval_ms
        )));
    }
    let (gp, ap) = config.strategy.parts();
    let dim = config.strategy.dim();
    let mut data = Vec::with_capacity(gyro.len() * dim);
    for i in 0..gyro.len() {
        gp.push(&mut data, std::array::from_fn(|a| gyro.axis(a)[i]));
        ap.push(&mut data, std::array::from_fn(|a| accel.axis(a)[i]));
    }
    Ok(FusedFrameSequence {
        timestamps: gyro.timestamps().to_vec(),
        data,
        dim,
        strategy: config.strategy,
    })
}

impl AlignedSensors {
    pub fn fuse(&self, config: &FusionConfig) -> Result<FusedFrameSequence> {
        fuse(&self.gyroscope, &self.accelerometer, config)
    }
}
