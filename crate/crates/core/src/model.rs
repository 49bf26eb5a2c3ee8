//! Domain types shared by every stage, and per-sensor CSV persistence of
//! recording sessions.
//!
//! A stored session is a directory holding `gyroscope.csv`,
//! `accelerometer.csv` (header `t,x,y,z`) and `labels.csv` (header
//! `t,label`), each sorted by timestamp.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Unix epoch time in milliseconds.
pub type Millis = i64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensorKind {
    Gyroscope,
    Accelerometer,
}

impl SensorKind {
    pub const ALL: [SensorKind; 2] = [SensorKind::Gyroscope, SensorKind::Accelerometer];

    pub fn name(self) -> &'static str {
        match self {
            SensorKind::Gyroscope => "gyroscope",
            SensorKind::Accelerometer => "accelerometer",
        }
    }

    fn file_name(self) -> &'static str {
        match self {
            SensorKind::Gyroscope => "gyroscope.csv",
            SensorKind::Accelerometer => "accelerometer.csv",
        }
    }
}

impl fmt::Display for SensorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SensorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gyroscope" => Ok(SensorKind::Gyroscope),
            "accelerometer" => Ok(SensorKind::Accelerometer),
            other => Err(Error::invalid(format!("unknown sensor kind {other:?}"))),
        }
    }
}

/// One timestamped triaxial measurement.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SensorEvent {
    pub t: Millis,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub sensor: SensorKind,
}

impl SensorEvent {
    pub fn new(sensor: SensorKind, t: Millis, x: f64, y: f64, z: f64) -> Result<Self> {
        let event = SensorEvent { t, x, y, z, sensor };
        event.validate()?;
        Ok(event)
    }

    pub fn validate(&self) -> Result<()> {
        if self.t < 0 {
            return Err(Error::invalid(format!("negative timestamp {}", self.t)));
        }
        if !(self.x.is_finite() && self.y.is_finite() && self.z.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite {} reading at t={}",
                self.sensor, self.t
            )));
        }
        Ok(())
    }
}

/// Ground-truth key press.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelEvent {
    pub t: Millis,
    pub label: String,
}

impl LabelEvent {
    pub fn new(t: Millis, label: impl Into<String>) -> Self {
        LabelEvent {
            t,
            label: label.into(),
        }
    }
}

/// Stable ascending sort by timestamp.
pub fn sort_events(mut events: Vec<SensorEvent>) -> Vec<SensorEvent> {
    events.sort_by_key(|e| e.t);
    events
}

/// A three-axis time series of one sensor with strictly increasing
/// timestamps.
#[derive(Clone, Debug, PartialEq)]
pub struct TriaxialSeries {
    sensor: SensorKind,
    timestamps: Vec<Millis>,
    axes: [Vec<f64>; 3],
}

impl TriaxialSeries {
    pub fn new(
        sensor: SensorKind,
        timestamps: Vec<Millis>,
        x: Vec<f64>,
        y: Vec<f64>,
        z: Vec<f64>,
    ) -> Result<Self> {
        let n = timestamps.len();
        for (name, axis) in [("x", &x), ("y", &y), ("z", &z)] {
            if axis.len() != n {
                return Err(Error::invalid(format!(
                    "{sensor} axis {name} has {} values for {n} timestamps",
                    axis.len()
                )));
            }
            if let Some(i) = axis.iter().position(|v| !v.is_finite()) {
                return Err(Error::invalid(format!(
                    "{sensor} axis {name} is non-finite at index {i}"
                )));
            }
        }
        if let Some(&t) = timestamps.first() {
            if t < 0 {
                return Err(Error::invalid(format!("negative timestamp {t}")));
            }
        }
        if let Some(w) = timestamps.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::invalid(format!(
                "{sensor} timestamps not strictly increasing: {} then {}",
                w[0], w[1]
            )));
        }
        Ok(TriaxialSeries {
            sensor,
            timestamps,
            axes: [x, y, z],
        })
    }

    pub fn empty(sensor: SensorKind) -> Self {
        TriaxialSeries {
            sensor,
            timestamps: Vec::new(),
            axes: [Vec::new(), Vec::new(), Vec::new()],
        }
    }

    /// Builds a series from events of any order. Events are sorted first.
    pub fn from_events(sensor: SensorKind, events: &[SensorEvent]) -> Result<Self> {
        let sorted = sort_events(events.to_vec());
        let mut t = Vec::with_capacity(sorted.len());
        let mut axes = [
            Vec::with_capacity(sorted.len()),
            Vec::with_capacity(sorted.len()),
            Vec::with_capacity(sorted.len()),
        ];
        for e in &sorted {
            if e.sensor != sensor {
                return Err(Error::invalid(format!(
                    "{} event in a {sensor} series",
                    e.sensor
                )));
            }
            t.push(e.t);
            axes[0].push(e.x);
            axes[1].push(e.y);
            axes[2].push(e.z);
        }
        let [x, y, z] = axes;
        Self::new(sensor, t, x, y, z)
    }

    pub fn to_events(&self) -> Vec<SensorEvent> {
        (0..self.len())
            .map(|i| SensorEvent {
                t: self.timestamps[i],
                x: self.axes[0][i],
                y: self.axes[1][i],
                z: self.axes[2][i],
                sensor: self.sensor,
            })
            .collect()
    }

    pub fn sensor(&self) -> SensorKind {
        self.sensor
    }

    pub fn timestamps(&self) -> &[Millis] {
        &self.timestamps
    }

    pub fn axes(&self) -> &[Vec<f64>; 3] {
        &self.axes
    }

    pub fn axis(&self, index: usize) -> &[f64] {
        &self.axes[index]
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    /// Time span `[first, last]`, or `None` when empty.
    pub fn span(&self) -> Option<(Millis, Millis)> {
        Some((*self.timestamps.first()?, *self.timestamps.last()?))
    }

    /// Applies `f` to each axis, keeping the timestamps.
    pub fn try_map_axes<F>(&self, mut f: F) -> Result<Self>
    where
        F: FnMut(&[f64]) -> Result<Vec<f64>>,
    {
        let x = f(&self.axes[0])?;
        let y = f(&self.axes[1])?;
        let z = f(&self.axes[2])?;
        Self::new(self.sensor, self.timestamps.clone(), x, y, z)
    }

    pub fn map_axes<F>(&self, mut f: F) -> Result<Self>
    where
        F: FnMut(&[f64]) -> Vec<f64>,
    {
        self.try_map_axes(|a| Ok(f(a)))
    }
}

/// Symbol alphabet with a fixed symbol ↔ index bijection.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelCodebook {
    symbols: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelCodebook {
    pub fn new<S: Into<String>>(symbols: impl IntoIterator<Item = S>) -> Result<Self> {
        let symbols: Vec<String> = symbols.into_iter().map(Into::into).collect();
        if symbols.is_empty() {
            return Err(Error::invalid("empty codebook"));
        }
        let mut index = HashMap::with_capacity(symbols.len());
        for (i, s) in symbols.iter().enumerate() {
            if index.insert(s.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate symbol {s:?} in codebook")));
            }
        }
        Ok(LabelCodebook { symbols, index })
    }

    /// The 12-key numeric keypad in reading order: 1..9, *, 0, #.
    pub fn keypad() -> Self {
        Self::new(["1", "2", "3", "4", "5", "6", "7", "8", "9", "*", "0", "#"])
            .expect("keypad symbols are unique")
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn index_of(&self, symbol: &str) -> Result<usize> {
        self.index
            .get(symbol)
            .copied()
            .ok_or_else(|| Error::UnknownLabel(symbol.to_string()))
    }

    pub fn symbol(&self, index: usize) -> Option<&str> {
        self.symbols.get(index).map(String::as_str)
    }

    pub fn contains(&self, symbol: &str) -> bool {
        self.index.contains_key(symbol)
    }
}

/// One recording: both sensor streams plus the labels typed meanwhile.
#[derive(Clone, Debug, PartialEq)]
pub struct RecordingSession {
    pub id: String,
    pub gyroscope: TriaxialSeries,
    pub accelerometer: TriaxialSeries,
    pub labels: Vec<LabelEvent>,
}

impl RecordingSession {
    pub fn new(
        id: impl Into<String>,
        gyroscope: TriaxialSeries,
        accelerometer: TriaxialSeries,
        mut labels: Vec<LabelEvent>,
    ) -> Result<Self> {
        if gyroscope.sensor() != SensorKind::Gyroscope
            || accelerometer.sensor() != SensorKind::Accelerometer
        {
            return Err(Error::invalid("sensor series passed in the wrong slots"));
        }
        if gyroscope.is_empty() || accelerometer.is_empty() {
            return Err(Error::invalid("a closed session needs both sensor streams"));
        }
        labels.sort_by_key(|l| l.t);
        let session = RecordingSession {
            id: id.into(),
            gyroscope,
            accelerometer,
            labels,
        };
        session.warn_on_label_range();
        Ok(session)
    }

    /// Labels whose timestamps fall outside the gyroscope span.
    pub fn labels_out_of_range(&self) -> usize {
        let Some((lo, hi)) = self.gyroscope.span() else {
            return self.labels.len();
        };
        self.labels.iter().filter(|l| l.t < lo || l.t > hi).count()
    }

    fn warn_on_label_range(&self) {
        let outside = self.labels_out_of_range();
        if outside > 0 {
            log::warn!(
                "session {}: {outside} label(s) outside the gyroscope time range",
                self.id
            );
        }
    }

    pub fn series(&self, sensor: SensorKind) -> &TriaxialSeries {
        match sensor {
            SensorKind::Gyroscope => &self.gyroscope,
            SensorKind::Accelerometer => &self.accelerometer,
        }
    }
}

fn format_real(v: f64) -> Result<String> {
    if !v.is_finite() {
        return Err(Error::invalid(format!("non-finite value {v} cannot be stored")));
    }
    // Shortest representation that parses back to the same bits.
    Ok(format!("{v}"))
}

/// Writes the three CSV files of `session` into `directory`, creating it
/// if needed.
pub fn write_session(session: &RecordingSession, directory: &Path) -> Result<()> {
    fs::create_dir_all(directory).map_err(|e| Error::io(directory, e))?;
    for sensor in SensorKind::ALL {
        let path = directory.join(sensor.file_name());
        let series = session.series(sensor);
        let mut out = csv::Writer::from_path(&path).map_err(|e| csv_io(&path, e))?;
        out.write_record(["t", "x", "y", "z"])
            .map_err(|e| csv_io(&path, e))?;
        for i in 0..series.len() {
            let row = [
                series.timestamps()[i].to_string(),
                format_real(series.axes()[0][i])?,
                format_real(series.axes()[1][i])?,
                format_real(series.axes()[2][i])?,
            ];
            out.write_record(&row).map_err(|e| csv_io(&path, e))?;
        }
        out.flush().map_err(|e| Error::io(&path, e))?;
    }

    let path = directory.join("labels.csv");
    let mut labels = session.labels.clone();
    labels.sort_by_key(|l| l.t);
    let mut out = csv::Writer::from_path(&path).map_err(|e| csv_io(&path, e))?;
    out.write_record(["t", "label"]).map_err(|e| csv_io(&path, e))?;
    for l in &labels {
        out.write_record([l.t.to_string().as_str(), l.label.as_str()])
            .map_err(|e| csv_io(&path, e))?;
    }
    out.flush().map_err(|e| Error::io(&path, e))?;
    Ok(())
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: format!("{other:?}"),
        },
    }
}

fn open_csv(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(file))
}

fn read_rows(path: &Path, expected_header: &[&str]) -> Result<Vec<(u64, csv::StringRecord)>> {
    let mut reader = open_csv(path)?;
    let mut rows = Vec::new();
    let mut saw_header = false;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::Parse {
                path: path.to_path_buf(),
                line,
                message: e.to_string(),
            }
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if !saw_header {
            saw_header = true;
            let header: Vec<&str> = record.iter().map(str::trim).collect();
            if header != expected_header {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: format!("expected header {}", expected_header.join(",")),
                });
            }
            continue;
        }
        if record.len() != expected_header.len() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!(
                    "expected {} fields, found {}",
                    expected_header.len(),
                    record.len()
                ),
            });
        }
        rows.push((line, record));
    }
    if !saw_header {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: "missing header".into(),
        });
    }
    Ok(rows)
}

fn parse_field<T: FromStr>(path: &Path, line: u64, field: &str, what: &str) -> Result<T> {
    field.trim().parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        message: format!("invalid {what} {field:?}"),
    })
}

fn read_series(directory: &Path, sensor: SensorKind) -> Result<TriaxialSeries> {
    let path = directory.join(sensor.file_name());
    let rows = read_rows(&path, &["t", "x", "y", "z"])?;
    let mut events = Vec::with_capacity(rows.len());
    for (line, r) in &rows {
        let t: Millis = parse_field(&path, *line, &r[0], "timestamp")?;
        let x: f64 = parse_field(&path, *line, &r[1], "x value")?;
        let y: f64 = parse_field(&path, *line, &r[2], "y value")?;
        let z: f64 = parse_field(&path, *line, &r[3], "z value")?;
        let event = SensorEvent::new(sensor, t, x, y, z).map_err(|e| Error::Parse {
            path: path.clone(),
            line: *line,
            message: e.to_string(),
        })?;
        events.push((*line, event));
    }
    events.sort_by_key(|(_, e)| e.t);
    if let Some(w) = events.windows(2).find(|w| w[0].1.t == w[1].1.t) {
        return Err(Error::Parse {
            path,
            line: w[1].0,
            message: format!("duplicate timestamp {}", w[1].1.t),
        });
    }
    let events: Vec<SensorEvent> = events.into_iter().map(|(_, e)| e).collect();
    TriaxialSeries::from_events(sensor, &events)
}

/// Reads a session directory written by [`write_session`]. The session id
/// is the directory name.
pub fn read_session(directory: &Path) -> Result<RecordingSession> {
    let gyroscope = read_series(directory, SensorKind::Gyroscope)?;
    let accelerometer = read_series(directory, SensorKind::Accelerometer)?;

    let path = directory.join("labels.csv");
    let rows = read_rows(&path, &["t", "label"])?;
    let mut labels = Vec::with_capacity(rows.len());
    for (line, r) in &rows {
        let t: Millis = parse_field(&path, *line, &r[0], "timestamp")?;
        if t < 0 {
            return Err(Error::Parse {
                path: path.clone(),
                line: *line,
                message: format!("negative timestamp {t}"),
            });
        }
        labels.push(LabelEvent::new(t, &r[1]));
    }

    let id = directory
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    RecordingSession::new(id, gyroscope, accelerometer, labels).map_err(|e| Error::Parse {
        path: directory.to_path_buf(),
        line: 0,
        message: e.to_string(),
    })
}
