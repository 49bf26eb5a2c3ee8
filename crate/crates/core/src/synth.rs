//! Seeded synthetic keystroke sessions. Every key has a fixed motion
//! template per sensor axis, built from two raised-cosine bumps and placed
//! at each keystroke time; the sensors are then sampled with jittered
//! delays and Gaussian noise is added.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LabelCodebook, LabelEvent, Millis, RecordingSession, SensorKind, TriaxialSeries};

pub const GRAVITY: f64 = 9.81;
const GYRO_DELAY_MS: f64 = 10.0;
const ACCEL_DELAY_MS: f64 = 62.5;
/// Quiet time before the first and after the last keystroke.
const MARGIN_MS: Millis = 2000;
/// Accelerometer bumps are this much wider than gyroscope bumps so that
/// the slower sensor still resolves them.
const ACCEL_WIDTH_FACTOR: f64 = 2.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub alphabet: Vec<String>,
    pub instances: usize,
    /// Mean spacing between keystrokes, ms.
    pub gap_ms: f64,
    /// Half-width of the uniform spread around `gap_ms`.
    pub gap_jitter_ms: f64,
    pub duration_ms: f64,
    /// Signal RMS over noise standard deviation, per axis. Infinite means
    /// no noise.
    pub snr: f64,
    /// Sampling delays are scaled by a factor drawn from `1 ± jitter`.
    pub jitter: f64,
    /// Selects the per-key templates.
    pub family: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 1,
            alphabet: LabelCodebook::keypad().symbols().to_vec(),
            instances: 20,
            gap_ms: 600.0,
            gap_jitter_ms: 100.0,
            duration_ms: 100.0,
            snr: 6.0,
            jitter: 0.2,
            family: 0,
        }
    }
}

impl SynthConfig {
    /// Same schedule and templates with no noise and exact sampling.
    pub fn noiseless(mut self) -> Self {
        self.snr = f64::INFINITY;
        self.jitter = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        LabelCodebook::new(self.alphabet.iter().cloned())?;
        if self.instances == 0 {
            return Err(Error::invalid("instances must be >= 1"));
        }
        if !(self.snr > 0.0) {
            return Err(Error::invalid(format!("snr must be positive, got {}", self.snr)));
        }
        if !(0.0..1.0).contains(&self.jitter) {
            return Err(Error::invalid(format!("jitter {} outside [0, 1)", self.jitter)));
        }
        if !(self.duration_ms > 0.0 && self.duration_ms.is_finite()) {
            return Err(Error::invalid("duration_ms must be positive"));
        }
        if !(self.gap_jitter_ms >= 0.0 && self.gap_ms - self.gap_jitter_ms >= 1.0 && self.gap_ms.is_finite()) {
            return Err(Error::invalid("gap_ms - gap_jitter_ms must be at least 1 ms"));
        }
        Ok(())
    }
}

/// `0.5 (1 + cos(2π (t - centre) / width))` inside the support, 0 outside.
fn raised_cosine(t: f64, center: f64, width: f64) -> f64 {
    let u = (t - center) / width;
    if u.abs() >= 0.5 {
        0.0
    } else {
        0.5 * (1.0 + (2.0 * PI * u).cos())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Bump {
    amplitude: f64,
    /// Offset of the bump centre from the keystroke time, ms.
    offset: f64,
    width: f64,
}

/// Motion of one key: two bumps per axis for each sensor.
#[derive(Clone, Debug, PartialEq)]
pub struct KeyTemplate {
    gyro: [[Bump; 2]; 3],
    accel: [[Bump; 2]; 3],
}

impl KeyTemplate {
    fn value(axis: &[Bump; 2], dt: f64) -> f64 {
        axis.iter()
            .map(|b| b.amplitude * raised_cosine(dt, b.offset, b.width))
            .sum()
    }

    /// Template value at `dt` ms from the keystroke.
    pub fn sample(&self, sensor: SensorKind, axis: usize, dt: f64) -> f64 {
        match sensor {
            SensorKind::Gyroscope => Self::value(&self.gyro[axis], dt),
            SensorKind::Accelerometer => Self::value(&self.accel[axis], dt),
        }
    }

    /// Half the widest support, ms.
    fn reach(&self) -> f64 {
        self.gyro
            .iter()
            .chain(&self.accel)
            .flatten()
            .map(|b| b.offset.abs() + b.width / 2.0)
            .fold(0.0, f64::max)
    }

    /// Three amplitudes, each in ±[0.2, 1.5], whose mean is at least 0.6
    /// in magnitude and of random sign, and a second set summing to zero.
    fn axis_amplitudes(rng: &mut ChaCha8Rng) -> ([f64; 3], [f64; 3]) {
        let main = loop {
            let a: [f64; 3] = std::array::from_fn(|_| {
                let m = rng.gen_range(0.2..1.5);
                if rng.gen_bool(0.3) {
                    -m
                } else {
                    m
                }
            });
            if (a.iter().sum::<f64>() / 3.0).abs() >= 0.6 {
                break a;
            }
        };
        // Keys on either side of the wrist turn it in opposite directions.
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let main = main.map(|a| sign * a);
        let u = rng.gen_range(-1.0..1.0);
        let v = rng.gen_range(-1.0..1.0);
        let mut side = [u, v, -u - v];
        side.shuffle(rng);
        (main, side)
    }

    /// Gyroscope: a main bump centred on the keystroke on every axis plus a
    /// shifted bump whose amplitudes cancel in the axis mean, so the mean
    /// signal peaks exactly at the keystroke. Accelerometer: two wider
    /// bumps per axis with free amplitudes and offsets.
    fn generate(rng: &mut ChaCha8Rng, duration: f64) -> Self {
        let width = duration * rng.gen_range(1.0..1.3);
        let (main, side) = Self::axis_amplitudes(rng);
        let side_width = width * rng.gen_range(0.6..1.0);
        let side_offset = width * rng.gen_range(0.25..0.5) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let gyro = std::array::from_fn(|a| {
            [
                Bump {
                    amplitude: main[a],
                    offset: 0.0,
                    width,
                },
                Bump {
                    amplitude: side[a],
                    offset: side_offset,
                    width: side_width,
                },
            ]
        });
        let accel = std::array::from_fn(|_| {
            std::array::from_fn(|_| Bump {
                amplitude: rng.gen_range(-1.5..1.5),
                offset: rng.gen_range(-0.5..0.5) * width,
                width: ACCEL_WIDTH_FACTOR * width * rng.gen_range(0.8..1.2),
            })
        });
        KeyTemplate { gyro, accel }
    }

    /// Smooth, key-independent distortion: widths stretched, offsets
    /// shifted and amplitudes scaled per axis. The gyroscope main bumps
    /// keep offset 0 and the zero-sum side amplitudes stay zero-sum.
    fn warped(&self, w: &Warp) -> Self {
        let mut t = self.clone();
        for (a, axis) in t.gyro.iter_mut().enumerate() {
            axis[0].amplitude *= w.gain[a];
            axis[0].width *= w.stretch;
            axis[1].offset = axis[1].offset * w.stretch + w.shift;
            axis[1].width *= w.stretch;
        }
        for (a, axis) in t.accel.iter_mut().enumerate() {
            for b in axis.iter_mut() {
                b.amplitude *= w.gain[3 + a];
                b.offset = b.offset * w.stretch + w.shift;
                b.width *= w.stretch;
            }
        }
        t
    }
}

struct Warp {
    stretch: f64,
    shift: f64,
    gain: [f64; 6],
}

impl Warp {
    fn for_family(family: u64) -> Self {
        let mut rng = family_rng(family, u64::MAX);
        let phase = rng.gen_range(0.0..2.0 * PI);
        Warp {
            stretch: rng.gen_range(1.1..1.25),
            shift: rng.gen_range(5.0..15.0),
            gain: std::array::from_fn(|i| 1.0 + 0.3 * (phase + i as f64).sin()),
        }
    }
}

fn family_rng(family: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(family ^ 0x7e3a_11c5_9b2f_d04e);
    rng.set_stream(stream);
    rng
}

/// Templates of `family`, one per alphabet position.
pub fn family_templates(family: u64, alphabet_len: usize, duration_ms: f64) -> Vec<KeyTemplate> {
    (0..alphabet_len)
        .map(|k| KeyTemplate::generate(&mut family_rng(family, k as u64), duration_ms))
        .collect()
}

/// One keystroke: template index and centre time.
struct Stroke {
    key: usize,
    t: Millis,
}

fn schedule(config: &SynthConfig, rng: &mut ChaCha8Rng, reach: f64) -> Vec<Stroke> {
    let mut keys: Vec<usize> = (0..config.alphabet.len())
        .flat_map(|k| std::iter::repeat_n(k, config.instances))
        .collect();
    keys.shuffle(rng);
    let mut t = MARGIN_MS as f64 + reach;
    keys.into_iter()
        .enumerate()
        .map(|(i, key)| {
            if i > 0 {
                t += config.gap_ms + rng.gen_range(-1.0..=1.0) * config.gap_jitter_ms;
            }
            // Keystrokes land on a nominal gyroscope tick.
            let tick = (t / GYRO_DELAY_MS).round() * GYRO_DELAY_MS;
            Stroke { key, t: tick as Millis }
        })
        .collect()
}

/// Jittered sampling instants covering `[0, end]`, strictly increasing.
fn sample_times(nominal: f64, jitter: f64, end: Millis, rng: &mut ChaCha8Rng) -> Vec<Millis> {
    let mut out = Vec::with_capacity((end as f64 / nominal) as usize + 2);
    let mut t = 0.0f64;
    let mut last = -1;
    while (t.round() as Millis) <= end {
        let ti = (t.round() as Millis).max(last + 1);
        out.push(ti);
        last = ti;
        let f = if jitter > 0.0 {
            rng.gen_range(1.0 - jitter..=1.0 + jitter)
        } else {
            1.0
        };
        t += nominal * f;
    }
    out
}

/// Noise-free signal of one sensor at the given instants.
fn clean_signal(
    sensor: SensorKind,
    times: &[Millis],
    strokes: &[Stroke],
    templates: &[KeyTemplate],
    reach: f64,
) -> [Vec<f64>; 3] {
    let mut axes: [Vec<f64>; 3] = std::array::from_fn(|_| vec![0.0; times.len()]);
    // Strokes are sorted by time; scan a moving range of samples for each.
    let mut lo = 0;
    for s in strokes {
        let start = s.t as f64 - reach;
        while lo < times.len() && (times[lo] as f64) < start {
            lo += 1;
        }
        let tpl = &templates[s.key];
        let mut i = lo;
        while i < times.len() && (times[i] as f64) <= s.t as f64 + reach {
            let dt = (times[i] - s.t) as f64;
            for (a, axis) in axes.iter_mut().enumerate() {
                axis[i] += tpl.sample(sensor, a, dt);
            }
            i += 1;
        }
    }
    axes
}

fn rms(v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

fn build_session(config: &SynthConfig, templates: &[KeyTemplate], id: String) -> Result<RecordingSession> {
    config.validate()?;
    let reach = templates.iter().map(KeyTemplate::reach).fold(0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let strokes = schedule(config, &mut rng, reach);
    let end = strokes.last().map_or(0, |s| s.t) + (reach.ceil() as Millis) + MARGIN_MS;

    let mut series = Vec::with_capacity(2);
    for (sensor, nominal) in [
        (SensorKind::Gyroscope, GYRO_DELAY_MS),
        (SensorKind::Accelerometer, ACCEL_DELAY_MS),
    ] {
        let times = sample_times(nominal, config.jitter, end, &mut rng);
        let mut axes = clean_signal(sensor, &times, &strokes, templates, reach);
        if config.snr.is_finite() {
            for axis in axes.iter_mut() {
                let sigma = rms(axis) / config.snr;
                let normal = Normal::new(0.0, sigma).map_err(|e| Error::invalid(e.to_string()))?;
                for v in axis.iter_mut() {
                    *v += normal.sample(&mut rng);
                }
            }
        }
        if sensor == SensorKind::Accelerometer {
            for v in axes[2].iter_mut() {
                *v += GRAVITY;
            }
        }
        let [x, y, z] = axes;
        series.push(TriaxialSeries::new(sensor, times, x, y, z)?);
    }
    let labels = strokes
        .iter()
        .map(|s| LabelEvent::new(s.t, config.alphabet[s.key].clone()))
        .collect();
    let accelerometer = series.pop().expect("two series");
    let gyroscope = series.pop().expect("two series");
    RecordingSession::new(id, gyroscope, accelerometer, labels)
}

/// A session with `instances` keystrokes of every alphabet symbol in
/// random order, labelled at the template centres.
pub fn generate_session(config: &SynthConfig) -> Result<RecordingSession> {
    let templates = family_templates(config.family, config.alphabet.len(), config.duration_ms);
    build_session(config, &templates, format!("synth-f{}-s{}", config.family, config.seed))
}

/// Two sessions whose templates are related: the second uses the first
/// family's templates under a fixed distortion chosen by `family_b`. The
/// second session draws its schedule and noise from the next seed.
pub fn generate_pair(config: &SynthConfig, family_b: u64) -> Result<(RecordingSession, RecordingSession)> {
    if family_b == config.family {
        return Err(Error::invalid("a pair needs two distinct template families"));
    }
    let a = generate_session(config)?;
    let warp = Warp::for_family(family_b);
    let templates: Vec<KeyTemplate> = family_templates(config.family, config.alphabet.len(), config.duration_ms)
        .iter()
        .map(|t| t.warped(&warp))
        .collect();
    let cfg_b = SynthConfig {
        seed: config.seed.wrapping_add(1),
        family: family_b,
        ..config.clone()
    };
    let b = build_session(&cfg_b, &templates, format!("synth-f{}-s{}", family_b, cfg_b.seed))?;
    Ok((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn small() -> SynthConfig {
        SynthConfig {
            alphabet: vec!["1".into(), "2".into(), "3".into()],
            instances: 4,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn default_scale() {
        let s = generate_session(&SynthConfig::default()).unwrap();
        assert_eq!(s.labels.len(), 240);
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for l in &s.labels {
            *counts.entry(l.label.as_str()).or_default() += 1;
        }
        assert_eq!(counts.len(), 12);
        assert!(counts.values().all(|&c| c == 20));
        assert_eq!(s.labels_out_of_range(), 0);
        for series in [&s.gyroscope, &s.accelerometer] {
            assert!(series.timestamps().windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let a = generate_session(&small()).unwrap();
        assert_eq!(a, generate_session(&small()).unwrap());
        let other = SynthConfig { seed: 2, ..small() };
        assert_ne!(a, generate_session(&other).unwrap());
    }

    #[test]
    fn sampling_rates_follow_nominal_delays() {
        let s = generate_session(&small().noiseless()).unwrap();
        let (t0, t1) = s.gyroscope.span().unwrap();
        let rate = |n: usize| (n - 1) as f64 / (t1 - t0) as f64 * 1000.0;
        assert!((rate(s.gyroscope.len()) - 100.0).abs() < 1.0);
        assert!((rate(s.accelerometer.len()) - 16.0).abs() < 0.5);
        let jittered = generate_session(&small()).unwrap();
        let steps: Vec<Millis> = jittered.gyroscope.timestamps().windows(2).map(|w| w[1] - w[0]).collect();
        assert!(steps.iter().all(|&d| (8..=12).contains(&d)));
        assert!(steps.iter().any(|&d| d != 10));
    }

    #[test]
    fn gravity_on_accelerometer_z() {
        let s = generate_session(&small().noiseless()).unwrap();
        let z = s.accelerometer.axis(2);
        assert_eq!(z[0], GRAVITY);
        assert_eq!(s.accelerometer.axis(0)[0], 0.0);
    }

    #[test]
    fn mean_gyro_template_peaks_at_the_keystroke() {
        for tpl in family_templates(3, 12, 100.0) {
            let mean = |dt: f64| (0..3).map(|a| tpl.sample(SensorKind::Gyroscope, a, dt)).sum::<f64>() / 3.0;
            let peak = mean(0.0).abs();
            assert!(peak >= 0.6 - 1e-12);
            for dt in (-300..=300).filter(|&d| d != 0) {
                assert!(mean(dt as f64).abs() < peak, "dt {dt}");
            }
        }
    }

    #[test]
    fn templates_differ_between_keys_and_families() {
        let a = family_templates(0, 12, 100.0);
        for i in 0..12 {
            for j in i + 1..12 {
                assert_ne!(a[i], a[j]);
            }
        }
        assert_ne!(a, family_templates(1, 12, 100.0));
    }

    #[test]
    fn noise_matches_requested_snr() {
        let cfg = SynthConfig::default();
        let noisy = generate_session(&cfg).unwrap();
        let clean = generate_session(&SynthConfig { jitter: cfg.jitter, snr: f64::INFINITY, ..cfg.clone() }).unwrap();
        assert_eq!(noisy.gyroscope.timestamps(), clean.gyroscope.timestamps());
        for a in 0..3 {
            let c = clean.gyroscope.axis(a);
            let diff: Vec<f64> = noisy.gyroscope.axis(a).iter().zip(c).map(|(n, c)| n - c).collect();
            let ratio = rms(c) / rms(&diff);
            assert!((ratio - 6.0).abs() < 0.3, "axis {a}: {ratio}");
        }
    }

    #[test]
    fn pairs_share_alphabet_but_not_templates() {
        let cfg = small().noiseless();
        let (a, b) = generate_pair(&cfg, 5).unwrap();
        assert_eq!(a.labels.len(), b.labels.len());
        assert_ne!(a.gyroscope.axis(0), b.gyroscope.axis(0));
        assert!(generate_pair(&cfg, cfg.family).is_err());
        let w = Warp::for_family(5);
        for (ta, tb) in family_templates(0, 3, 100.0).iter().zip(family_templates(0, 3, 100.0).iter().map(|t| t.warped(&w))) {
            assert_ne!(*ta, tb);
        }
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(generate_session(&SynthConfig { instances: 0, ..small() }).is_err());
        assert!(generate_session(&SynthConfig { snr: 0.0, ..small() }).is_err());
        assert!(generate_session(&SynthConfig { alphabet: vec!["1".into(), "1".into()], ..small() }).is_err());
    }
}
