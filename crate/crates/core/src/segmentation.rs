//! Per-keystroke windows, cut either around label timestamps or around
//! peaks of the gyroscope mean signal's peak-to-average power ratio.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::FusedFrameSequence;
use crate::model::{LabelEvent, Millis, TriaxialSeries};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentationConfig {
    /// Half the window length, in grid frames.
    pub half_window: usize,
    /// Minimum peak-to-average power ratio of a peak.
    pub peak_threshold: f64,
    /// Maximum distance between a peak and the label it receives, ms.
    pub match_tolerance_ms: Millis,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        SegmentationConfig {
            half_window: 25,
            peak_threshold: 0.4,
            match_tolerance_ms: 150,
        }
    }
}

impl SegmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.half_window == 0 {
            return Err(Error::invalid("half_window must be >= 1"));
        }
        if !self.peak_threshold.is_finite() || self.match_tolerance_ms < 0 {
            return Err(Error::invalid("invalid peak threshold or match tolerance"));
        }
        Ok(())
    }
}

/// A fixed-size window of fused frames around one keystroke.
#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    /// Grid index of the window centre.
    pub center: usize,
    /// Timestamp of the centre frame.
    pub center_t: Millis,
    /// `2 * half_window` frames, row-major.
    pub frames: Vec<f64>,
    pub dim: usize,
    pub label: Option<String>,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.frames.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame(&self, index: usize) -> &[f64] {
        &self.frames[index * self.dim..(index + 1) * self.dim]
    }

    /// All values of one frame column.
    pub fn column(&self, index: usize) -> Vec<f64> {
        self.frames.iter().skip(index).step_by(self.dim).copied().collect()
    }
}

fn window(frames: &FusedFrameSequence, center: usize, half: usize, label: Option<String>) -> Option<Segment> {
    if center < half || center + half > frames.len() {
        return None;
    }
    Some(Segment {
        center,
        center_t: frames.timestamps()[center],
        frames: frames.frames(center - half, center + half).to_vec(),
        dim: frames.dim(),
        label,
    })
}

/// Grid index nearest to `t`, if `t` lies within the grid span.
fn nearest_index(frames: &FusedFrameSequence, t: Millis) -> Option<usize> {
    let ts = frames.timestamps();
    let (&first, &last) = (ts.first()?, ts.last()?);
    if t < first || t > last {
        return None;
    }
    match ts.binary_search(&t) {
        Ok(i) => Some(i),
        Err(i) => {
            // ts[i - 1] < t < ts[i]; ties go to the earlier frame.
            if t - ts[i - 1] <= ts[i] - t {
                Some(i - 1)
            } else {
                Some(i)
            }
        }
    }
}

/// One labelled window per label whose window fits in the sequence.
pub fn segment_by_labels(
    frames: &FusedFrameSequence,
    labels: &[LabelEvent],
    half_window: usize,
) -> Vec<Segment> {
    let mut out = Vec::with_capacity(labels.len());
    let mut skipped = 0;
    for l in labels {
        match nearest_index(frames, l.t).and_then(|c| window(frames, c, half_window, Some(l.label.clone()))) {
            Some(s) => out.push(s),
            None => skipped += 1,
        }
    }
    if skipped > 0 {
        log::warn!("{skipped} label(s) skipped: window outside the recording");
    }
    out
}

/// Per-frame average of the three gyroscope axes.
pub fn mean_gyro_signal(gyro: &TriaxialSeries) -> Vec<f64> {
    (0..gyro.len())
        .map(|i| (gyro.axis(0)[i] + gyro.axis(1)[i] + gyro.axis(2)[i]) / 3.0)
        .collect()
}

pub fn rms(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt()
}

/// Squared crest factor of every sample relative to the whole signal's RMS.
pub fn papr(signal: &[f64]) -> Result<Vec<f64>> {
    let r = rms(signal);
    if !(r > 0.0) {
        return Err(Error::invalid("peak-to-average ratio of a zero signal"));
    }
    Ok(signal
        .iter()
        .map(|v| {
            let c = v / r;
            c * c
        })
        .collect())
}

/// Interior strict local maxima above `threshold`, ascending.
pub fn detect_peaks(ratios: &[f64], threshold: f64) -> Vec<usize> {
    if ratios.len() < 3 {
        return Vec::new();
    }
    (1..ratios.len() - 1)
        .filter(|&i| {
            let r = ratios[i];
            r > ratios[i - 1] && r > ratios[i + 1] && r > threshold
        })
        .collect()
}

/// Unlabelled windows centred on peaks of the gyroscope mean signal.
/// `gyro` must share the frame grid.
pub fn segment_by_peaks(
    frames: &FusedFrameSequence,
    gyro: &TriaxialSeries,
    half_window: usize,
    threshold: f64,
) -> Result<Vec<Segment>> {
    if gyro.timestamps() != frames.timestamps() {
        return Err(Error::invalid("gyroscope series is not on the frame grid"));
    }
    let ratios = match papr(&mean_gyro_signal(gyro)) {
        Ok(r) => r,
        Err(_) => return Ok(Vec::new()),
    };
    Ok(detect_peaks(&ratios, threshold)
        .into_iter()
        .filter_map(|c| window(frames, c, half_window, None))
        .collect())
}

/// Gives each segment the nearest label within `tolerance` ms, greedily
/// from the closest pair, using each label at most once. Segments left
/// without a label are dropped.
pub fn match_labels_to_peaks(
    segments: &[Segment],
    labels: &[LabelEvent],
    tolerance: Millis,
) -> Vec<Segment> {
    let mut pairs: Vec<(Millis, usize, usize)> = Vec::new();
    for (si, s) in segments.iter().enumerate() {
        for (li, l) in labels.iter().enumerate() {
            let d = (s.center_t - l.t).abs();
            if d <= tolerance {
                pairs.push((d, si, li));
            }
        }
    }
    pairs.sort_unstable();
    let mut seg_label: Vec<Option<usize>> = vec![None; segments.len()];
    let mut used = vec![false; labels.len()];
    for (_, si, li) in pairs {
        if seg_label[si].is_none() && !used[li] {
            seg_label[si] = Some(li);
            used[li] = true;
        }
    }
    segments
        .iter()
        .zip(seg_label)
        .filter_map(|(s, li)| {
            li.map(|li| Segment {
                label: Some(labels[li].label.clone()),
                ..s.clone()
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::{fuse, FusionConfig, FusionStrategy};
    use crate::model::SensorKind;
    use proptest::prelude::*;

    fn grid_series(sensor: SensorKind, n: usize, f: impl Fn(usize) -> f64) -> TriaxialSeries {
        let t = (0..n as i64).map(|i| 1000 + 2 * i).collect();
        let v: Vec<f64> = (0..n).map(f).collect();
        TriaxialSeries::new(sensor, t, v.clone(), v.clone(), v).unwrap()
    }

    fn frames(n: usize) -> (FusedFrameSequence, TriaxialSeries) {
        let g = grid_series(SensorKind::Gyroscope, n, |i| (i as f64 * 0.3).sin());
        let a = grid_series(SensorKind::Accelerometer, n, |i| i as f64);
        let f = fuse(&g, &a, &FusionConfig { interval_ms: 2, strategy: FusionStrategy::G3A3 }).unwrap();
        (f, g)
    }

    #[test]
    fn label_windows() {
        let (f, _) = frames(400);
        let labels = vec![
            LabelEvent::new(900, "1"),
            LabelEvent::new(1200, "2"),
            LabelEvent::new(1400, "3"),
            LabelEvent::new(1790, "4"),
        ];
        let segs = segment_by_labels(&f, &labels, 25);
        // 900 is before the grid, 1790 leaves no room for the right half.
        assert_eq!(segs.len(), 2);
        assert!(segs.iter().all(|s| s.len() == 50));
        assert_eq!(segs[1].center - segs[0].center, 100);
        assert_ne!(segs[0].frames, segs[1].frames);
        assert_eq!(segs[0].label.as_deref(), Some("2"));
        assert_eq!(segs[0].frame(0), f.frame(segs[0].center - 25));
    }

    #[test]
    fn mean_signal_examples() {
        let g = TriaxialSeries::new(SensorKind::Gyroscope, vec![0, 1, 2], vec![3.0, 1.0, 0.0], vec![3.0, 2.0, 0.0], vec![3.0, 3.0, 0.0]).unwrap();
        assert_eq!(mean_gyro_signal(&g), vec![3.0, 2.0, 0.0]);
    }

    #[test]
    fn papr_examples() {
        assert_eq!(papr(&[2.0; 4]).unwrap(), vec![1.0; 4]);
        let r = papr(&[0.0, 0.0, 3.0, 0.0, 0.0]).unwrap();
        assert!((r[2] - 5.0).abs() < 1e-12);
        assert!(papr(&[0.0; 3]).is_err());
    }

    #[test]
    fn peak_rule_examples() {
        assert_eq!(detect_peaks(&[0.1, 0.5, 0.3], 0.4), vec![1]);
        assert!(detect_peaks(&[0.1, 0.39, 0.1], 0.4).is_empty());
        assert!(detect_peaks(&[0.1, 0.5, 0.5, 0.1], 0.4).is_empty());
        assert!(detect_peaks(&[0.9, 0.1], 0.4).is_empty());
    }

    #[test]
    fn flat_signal_gives_no_segments() {
        let g = grid_series(SensorKind::Gyroscope, 200, |_| 0.0);
        let a = grid_series(SensorKind::Accelerometer, 200, |_| 0.0);
        let f = fuse(&g, &a, &FusionConfig::default()).unwrap();
        assert!(segment_by_peaks(&f, &g, 25, 0.4).unwrap().is_empty());
    }

    #[test]
    fn peak_windows_have_fixed_length() {
        let (f, g) = frames(1000);
        let segs = segment_by_peaks(&f, &g, 25, 0.4).unwrap();
        assert!(!segs.is_empty());
        assert!(segs.iter().all(|s| s.len() == 50 && s.label.is_none()));
    }

    fn seg(center_t: Millis) -> Segment {
        Segment { center: 0, center_t, frames: vec![0.0; 2], dim: 1, label: None }
    }

    #[test]
    fn matching_rules() {
        let labels = vec![LabelEvent::new(1000, "a"), LabelEvent::new(2000, "b")];
        let m = match_labels_to_peaks(&[seg(1000)], &labels, 60);
        assert_eq!(m[0].label.as_deref(), Some("a"));
        assert!(match_labels_to_peaks(&[seg(1200)], &labels, 60).is_empty());
        let m = match_labels_to_peaks(&[seg(1030), seg(1010)], &labels, 60);
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].center_t, 1010);
    }

    proptest! {
        #[test]
        fn peaks_are_interior_and_ascending(r in prop::collection::vec(0.0f64..3.0, 0..200)) {
            let p = detect_peaks(&r, 0.4);
            prop_assert!(p.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(p.iter().all(|&i| i >= 1 && i + 1 < r.len()));
        }

        #[test]
        fn papr_is_scale_invariant(v in prop::collection::vec(-10.0f64..10.0, 1..100), k in 0u32..20) {
            prop_assume!(rms(&v) > 0.0);
            // Power-of-two scaling is exact in binary floating point.
            let c = 2f64.powi(k as i32 - 10);
            let scaled: Vec<f64> = v.iter().map(|x| x * c).collect();
            prop_assert_eq!(papr(&v).unwrap(), papr(&scaled).unwrap());
        }

        #[test]
        fn papr_scale_invariance_is_close_for_any_factor(v in prop::collection::vec(-10.0f64..10.0, 1..100), c in 0.01f64..100.0) {
            prop_assume!(rms(&v) > 0.0);
            let scaled: Vec<f64> = v.iter().map(|x| x * c).collect();
            for (a, b) in papr(&v).unwrap().iter().zip(papr(&scaled).unwrap()) {
                prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
            }
        }
    }
}
