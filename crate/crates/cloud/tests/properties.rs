mod common;

use chrono::{DateTime, Timelike, Utc};
use common::*;
use kw_cloud::analytics::summarize;
use kw_cloud::Store;
use kw_core::api::{SessionStatus, SleepSession};
use kw_core::event::{EnvUnit, EnvironmentPayload, EventPayload, GatewayEvent};
use kw_core::pam::EnvKind;
use kw_core::SnoreClass;
use proptest::prelude::*;

const START: i64 = 1_772_402_400_000;

#[derive(Debug, Clone)]
enum Item {
    Summary(bool),
    Inst,
    Env(u8, f64),
}

fn item() -> impl Strategy<Value = Item> {
    prop_oneof![
        3 => any::<bool>().prop_map(Item::Summary),
        2 => Just(Item::Inst),
        1 => (0u8..3, 0.0f64..100.0).prop_map(|(k, v)| Item::Env(k, v)),
    ]
}

/// Event logs with strictly increasing timestamps starting at the session start.
fn log() -> impl Strategy<Value = (Vec<GatewayEvent>, Option<i64>)> {
    (prop::collection::vec((item(), 1u64..120_000), 1..60), prop::option::of(0i64..600_000)).prop_map(
        |(items, tail)| {
            let mut t = START as u64;
            let events: Vec<GatewayEvent> = items
                .into_iter()
                .enumerate()
                .map(|(seq, (it, gap))| {
                    t += gap;
                    match it {
                        Item::Summary(s) => {
                            summary(seq as u64, t, if s { SnoreClass::Snoring } else { SnoreClass::NonSnoring })
                        }
                        Item::Inst => inst(seq as u64, t, 0.5),
                        Item::Env(k, v) => {
                            let (kind, unit) = [
                                (EnvKind::Temperature, EnvUnit::Celsius),
                                (EnvKind::Humidity, EnvUnit::Percent),
                                (EnvKind::Pressure, EnvUnit::Pascal),
                            ][k as usize];
                            GatewayEvent::new(
                                "kw-01",
                                seq as u64,
                                t,
                                EventPayload::Environment(EnvironmentPayload { kind, value: v, unit }),
                            )
                        }
                    }
                })
                .collect();
            let end = tail.map(|x| t as i64 + x);
            (events, end)
        },
    )
}

fn session(end: Option<i64>) -> SleepSession {
    SleepSession {
        session_id: "s".into(),
        device_id: "kw-01".into(),
        started_at: DateTime::from_timestamp_millis(START).unwrap(),
        ended_at: end.map(|e| DateTime::from_timestamp_millis(e).unwrap()),
        status: if end.is_some() { SessionStatus::Closed } else { SessionStatus::Open },
    }
}

proptest! {
    /// Rasterises the night one millisecond at a time: a millisecond is
    /// snoring when the latest summary at or before it says so.
    #[test]
    fn summary_matches_raster_fold((events, end) in log()) {
        let s = session(end);
        let got = summarize(&s, &events).unwrap();

        // An open session ends at its last event.
        let end_ms = end.unwrap_or(events.last().unwrap().timestamp_ms as i64);
        let mut snoring_ms = 0i64;
        let mut runs = Vec::new();
        let mut state = false;
        let mut next = 0;
        let mut hist = [0u32; 24];
        for t in START..end_ms {
            while next < events.len() && events[next].timestamp_ms as i64 <= t {
                if let EventPayload::ActivitySummary(p) = events[next].payload {
                    state = p.class.is_snoring();
                }
                next += 1;
            }
            if state {
                if runs.last().is_none_or(|&(_, b): &(i64, i64)| b != t) {
                    runs.push((t, t + 1));
                } else {
                    runs.last_mut().unwrap().1 = t + 1;
                }
                snoring_ms += 1;
            }
        }
        for &(a, _) in &runs {
            hist[DateTime::<Utc>::from_timestamp_millis(a).unwrap().hour() as usize] += 1;
        }
        prop_assert_eq!(got.episode_count as usize, runs.len());
        prop_assert!((got.snore_minutes - snoring_ms as f64 / 60_000.0).abs() < 1e-9);
        prop_assert!((got.duration_min - (end_ms - START) as f64 / 60_000.0).abs() < 1e-9);
        prop_assert!(got.snore_fraction >= 0.0 && got.snore_fraction <= 1.0);
        prop_assert_eq!(got.hourly_snore_histogram, hist);
        prop_assert_eq!(got.hourly_snore_histogram.iter().sum::<u32>(), got.episode_count);

        let mut temps = Vec::new();
        for e in &events {
            if let EventPayload::Environment(p) = e.payload {
                if p.kind == EnvKind::Temperature { temps.push(p.value); }
            }
        }
        match got.env_means.temperature_c {
            Some(m) => prop_assert!((m - temps.iter().sum::<f64>() / temps.len() as f64).abs() < 1e-9),
            None => prop_assert!(temps.is_empty()),
        }
    }
}

fn dump(store: &Store, id: &str) -> String {
    serde_json::to_string(&*store.snapshot(id).unwrap().events).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    /// Any mix of replayed batch prefixes ends in the same state as one clean upload.
    #[test]
    fn replaying_prefixes_is_idempotent(
        n in 1u64..300,
        batch in 1usize..120,
        replays in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 0..12),
    ) {
        let events: Vec<GatewayEvent> = (0..n).map(|i| inst(i, START as u64 + i * 333, (i % 10) as f64 / 10.0)).collect();
        let batches: Vec<&[GatewayEvent]> = events.chunks(batch).collect();
        let started = DateTime::from_timestamp_millis(START).unwrap();

        let clean_dir = tempfile::tempdir().unwrap();
        let clean = Store::open(clean_dir.path()).unwrap();
        let (cs, _) = clean.create_session("kw-01", started, None).unwrap();
        for b in &batches {
            clean.ingest(&cs.session_id, b).unwrap();
        }

        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        let (s, _) = store.create_session("kw-01", started, None).unwrap();
        let mut sent = 0;
        for (i, b) in batches.iter().enumerate() {
            store.ingest(&s.session_id, b).unwrap();
            sent = i + 1;
            for &(a, c) in &replays {
                if c < 0.3 {
                    let k = ((a * sent as f64) as usize).min(sent - 1);
                    for pb in &batches[..=k] {
                        let r = store.ingest(&s.session_id, pb).unwrap();
                        prop_assert_eq!(r.accepted, 0);
                    }
                }
            }
        }
        prop_assert_eq!(sent, batches.len());
        prop_assert_eq!(dump(&store, &s.session_id), dump(&clean, &cs.session_id));
        let reopened = Store::open(dir.path()).unwrap();
        prop_assert_eq!(dump(&reopened, &s.session_id), dump(&clean, &cs.session_id));
    }
}
