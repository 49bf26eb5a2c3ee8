use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::sync::Arc;

use proptest::prelude::*;
use wristkey_core::server::{
    self, post_label, request_time, Connection, FixedClock, ReplayOptions, RunningServer, ServerConfig,
    SessionMessage, SystemClock, WireEvent, MAX_LINE_BYTES,
};
use wristkey_core::synth::{generate_session, SynthConfig};
use wristkey_core::{read_session, LabelEvent, RecordingSession, SensorKind, TriaxialSeries};

fn start(dir: &std::path::Path, clock: Arc<dyn server::Clock>) -> RunningServer {
    server::spawn(
        &ServerConfig {
            tcp_addr: "127.0.0.1:0".into(),
            http_addr: "127.0.0.1:0".into(),
            data_dir: dir.to_path_buf(),
        },
        clock,
    )
    .unwrap()
}

fn small_session(seed: u64) -> RecordingSession {
    generate_session(&SynthConfig {
        seed,
        instances: 2,
        ..SynthConfig::default()
    })
    .unwrap()
}

#[test]
fn replayed_sessions_come_back_identical() {
    let dir = tempfile::tempdir().unwrap();
    let srv = start(dir.path(), Arc::new(SystemClock));
    let (tcp, http) = (srv.tcp_addr.to_string(), srv.http_addr.to_string());
    for seed in 1..4 {
        let s = small_session(seed);
        let opts = ReplayOptions {
            seed,
            max_batch: 3 * seed as usize,
            session: None,
        };
        server::replay(&s, &tcp, &http, &opts).unwrap();
        assert_eq!(read_session(&dir.path().join(&s.id)).unwrap(), s);
    }
    srv.shutdown();
}

#[test]
fn session_without_labels_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let srv = start(dir.path(), Arc::new(SystemClock));
    let s = RecordingSession {
        labels: Vec::new(),
        ..small_session(9)
    };
    let opts = ReplayOptions::default();
    server::replay(&s, &srv.tcp_addr.to_string(), &srv.http_addr.to_string(), &opts).unwrap();
    let back = read_session(&dir.path().join(&s.id)).unwrap();
    assert!(back.labels.is_empty());
    assert_eq!(back, s);
    srv.shutdown();
}

#[test]
fn errors_are_acknowledged_and_the_connection_survives() {
    let dir = tempfile::tempdir().unwrap();
    let srv = start(dir.path(), Arc::new(SystemClock));
    let mut c = Connection::connect(srv.tcp_addr).unwrap();

    let on = |sensor: SensorKind, session: &str, t: i64| SessionMessage::SensorBatch {
        session: session.into(),
        sensor,
        events: vec![WireEvent { t, x: 0.0, y: 1.0, z: 2.0 }],
    };
    let batch = |session: &str, t: i64| on(SensorKind::Gyroscope, session, t);
    assert!(!c.send(&batch("nobody", 1)).unwrap().ok);
    assert!(!c.send_raw(b"{not json\n").unwrap().ok);
    assert!(!c.send_raw(b"{\"kind\":\"start_session\"}\n").unwrap().ok);

    assert!(c.send(&SessionMessage::StartSession { session: "s1".into() }).unwrap().ok);
    assert!(!c.send(&SessionMessage::StartSession { session: "s1".into() }).unwrap().ok);
    assert!(c.send(&batch("s1", 20)).unwrap().ok);
    assert!(c.send(&batch("s1", 10)).unwrap().ok);
    assert_eq!(srv.state.buffered("s1", SensorKind::Gyroscope), Some(2));

    let mut huge = vec![b' '; MAX_LINE_BYTES + 10];
    huge.push(b'\n');
    let ack = c.send_raw(&huge).unwrap();
    assert!(!ack.ok && ack.error.unwrap().contains("exceeds"));

    // Closing without accelerometer data fails and keeps the buffer open.
    let ack = c.send(&SessionMessage::EndSession { session: "s1".into() }).unwrap();
    assert!(!ack.ok && ack.error.unwrap().contains("both sensor"));
    assert_eq!(srv.state.buffered("s1", SensorKind::Gyroscope), Some(2));
    assert!(c.send(&on(SensorKind::Accelerometer, "s1", 15)).unwrap().ok);
    assert!(c.send(&SessionMessage::EndSession { session: "s1".into() }).unwrap().ok);
    assert!(!c.send(&batch("s1", 30)).unwrap().ok);
    for f in ["gyroscope.csv", "accelerometer.csv", "labels.csv"] {
        assert!(dir.path().join("s1").join(f).is_file(), "{f}");
    }
    let stored = read_session(&dir.path().join("s1")).unwrap();
    assert_eq!(stored.gyroscope.timestamps(), &[10, 20]);
    assert_eq!(stored.accelerometer.timestamps(), &[15]);
    srv.shutdown();
}

#[test]
fn one_line_per_acknowledgement_on_a_raw_socket() {
    let dir = tempfile::tempdir().unwrap();
    let srv = start(dir.path(), Arc::new(SystemClock));
    let mut s = TcpStream::connect(srv.tcp_addr).unwrap();
    let batch = |sensor: &str| {
        format!(r#"{{"kind":"sensor_batch","session":"raw","sensor":"{sensor}","events":[{{"t":5,"x":0,"y":0,"z":0}}]}}"#)
    };
    let input = format!(
        "{{\"kind\":\"start_session\",\"session\":\"raw\"}}\r\n\n{}\n{}\n{{\"kind\":\"end_session\",\"session\":\"raw\"}}\n",
        batch("gyroscope"),
        batch("accelerometer")
    );
    s.write_all(input.as_bytes()).unwrap();
    let mut r = BufReader::new(s);
    let mut lines = Vec::new();
    for _ in 0..4 {
        let mut l = String::new();
        r.read_line(&mut l).unwrap();
        lines.push(l);
    }
    assert_eq!(lines, ["{\"ok\":true}\n"; 4]);
    srv.shutdown();
}

#[test]
fn label_endpoint_statuses() {
    let dir = tempfile::tempdir().unwrap();
    let srv = start(dir.path(), Arc::new(SystemClock));
    let http = srv.http_addr.to_string();
    let post = |session: &str, body: &str| -> Result<u16, u16> {
        match ureq::post(format!("http://{http}/session/{session}/label")).send(body) {
            Ok(r) => Ok(r.status().as_u16()),
            Err(ureq::Error::StatusCode(code)) => Err(code),
            Err(e) => panic!("{e}"),
        }
    };
    assert_eq!(post("ghost", r#"{"t":1000,"l":"5"}"#), Err(404));

    let mut c = Connection::connect(srv.tcp_addr).unwrap();
    assert!(c.send(&SessionMessage::StartSession { session: "s".into() }).unwrap().ok);
    assert_eq!(post("s", r#"{"t":1000,"l":"5"}"#), Ok(200));
    assert_eq!(post("s", r#"{"t":1000}"#), Err(400));
    assert_eq!(post("s", "garbage"), Err(400));
    post_label(&http, "s", &LabelEvent::new(1000, "7")).unwrap();
    assert_eq!(srv.state.buffered_labels("s"), Some(2));

    let g = TriaxialSeries::new(SensorKind::Gyroscope, vec![900, 1100], vec![0.0; 2], vec![0.0; 2], vec![0.0; 2])
        .unwrap();
    let events: Vec<WireEvent> = g
        .to_events()
        .into_iter()
        .map(|e| WireEvent { t: e.t, x: e.x, y: e.y, z: e.z })
        .collect();
    assert!(c
        .send(&SessionMessage::SensorBatch {
            session: "s".into(),
            sensor: SensorKind::Gyroscope,
            events,
        })
        .unwrap()
        .ok);
    let a = WireEvent { t: 1000, x: 0.0, y: 0.0, z: 9.81 };
    assert!(c
        .send(&SessionMessage::SensorBatch {
            session: "s".into(),
            sensor: SensorKind::Accelerometer,
            events: vec![a],
        })
        .unwrap()
        .ok);
    assert!(c.send(&SessionMessage::EndSession { session: "s".into() }).unwrap().ok);
    // Equal timestamps keep their arrival order.
    let labels: Vec<String> = read_session(&dir.path().join("s"))
        .unwrap()
        .labels
        .into_iter()
        .map(|l| l.label)
        .collect();
    assert_eq!(labels, ["5", "7"]);
    srv.shutdown();
}

#[test]
fn time_service() {
    let dir = tempfile::tempdir().unwrap();
    let fixed = start(dir.path(), Arc::new(FixedClock(1_234_567_890_123)));
    assert_eq!(request_time(&fixed.http_addr.to_string()).unwrap(), 1_234_567_890_123);
    fixed.shutdown();

    let live = start(dir.path(), Arc::new(SystemClock));
    let http = live.http_addr.to_string();
    let t1 = request_time(&http).unwrap();
    let t2 = request_time(&http).unwrap();
    assert!(t2 >= t1 && t1.to_string().len() == 13);
    live.shutdown();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn any_batching_preserves_the_session(seed in 0u64..1000, max_batch in 1usize..200) {
        let dir = tempfile::tempdir().unwrap();
        let srv = start(dir.path(), Arc::new(SystemClock));
        let s = small_session(seed % 7 + 1);
        let opts = ReplayOptions { seed, max_batch, session: Some(format!("p{seed}")) };
        server::replay(&s, &srv.tcp_addr.to_string(), &srv.http_addr.to_string(), &opts).unwrap();
        let back = read_session(&dir.path().join(format!("p{seed}"))).unwrap();
        prop_assert_eq!(back, RecordingSession { id: format!("p{seed}"), ..s });
        srv.shutdown();
    }
}
