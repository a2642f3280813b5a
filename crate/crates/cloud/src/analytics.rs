//! Session summaries and nightly trends, computed from stored events only.

use chrono::{DateTime, NaiveDate, Timelike, Utc};
use kw_core::api::{EnvMeans, SessionSummary, SleepSession, TrendPoint, TrendReport, TrendWindow};
use kw_core::event::{EventPayload, GatewayEvent};
use kw_core::pam::EnvKind;
use kw_core::SnoreClass;

const MS_PER_MIN: f64 = 60_000.0;

fn millis(t: DateTime<Utc>) -> i64 {
    t.timestamp_millis()
}

/// Where the session ends for analytics: `ended_at` once closed, else the
/// latest event.
pub fn session_end_ms(session: &SleepSession, events: &[GatewayEvent]) -> i64 {
    let start = millis(session.started_at);
    match session.ended_at {
        Some(end) => millis(end),
        None => events.iter().map(|e| e.timestamp_ms as i64).max().unwrap_or(start).max(start),
    }
}

/// Snoring episodes `[start, end)` in wall-clock ms. An episode opens at a
/// snoring summary and closes at the next non-snoring one; one still open
/// closes at the session end. Intervals are clipped to the session.
pub fn episodes(session: &SleepSession, events: &[GatewayEvent]) -> Vec<(i64, i64)> {
    let start = millis(session.started_at);
    let end = session_end_ms(session, events);
    let mut out = Vec::new();
    let mut open: Option<i64> = None;
    for ev in events {
        let EventPayload::ActivitySummary(s) = ev.payload else { continue };
        let t = ev.timestamp_ms as i64;
        match (open, s.class) {
            (None, SnoreClass::Snoring) => open = Some(t),
            (Some(a), SnoreClass::NonSnoring) => {
                out.push((a, t));
                open = None;
            }
            _ => {}
        }
    }
    out.extend(open.map(|a| (a, end)));
    out.into_iter().map(|(a, b)| (a.clamp(start, end), b.clamp(start, end))).filter(|(a, b)| b > a).collect()
}

/// `None` when the session has no events.
pub fn summarize(session: &SleepSession, events: &[GatewayEvent]) -> Option<SessionSummary> {
    if events.is_empty() {
        return None;
    }
    let start = millis(session.started_at);
    let duration_ms = (session_end_ms(session, events) - start).max(0);
    let eps = episodes(session, events);
    let snore_ms: i64 = eps.iter().map(|(a, b)| b - a).sum();

    let mut hist = [0u32; 24];
    for &(a, _) in &eps {
        if let Some(t) = DateTime::from_timestamp_millis(a) {
            hist[t.hour() as usize] += 1;
        }
    }

    let mut sums = [(0.0f64, 0u64); 3];
    for ev in events {
        if let EventPayload::Environment(e) = ev.payload {
            let i = match e.kind {
                EnvKind::Temperature => 0,
                EnvKind::Humidity => 1,
                EnvKind::Pressure => 2,
            };
            sums[i].0 += e.value;
            sums[i].1 += 1;
        }
    }
    let mean = |(s, n): (f64, u64)| (n > 0).then(|| s / n as f64);

    let count = eps.len() as u32;
    Some(SessionSummary {
        session_id: session.session_id.clone(),
        duration_min: duration_ms as f64 / MS_PER_MIN,
        episode_count: count,
        snore_minutes: snore_ms as f64 / MS_PER_MIN,
        snore_fraction: if duration_ms > 0 { (snore_ms as f64 / duration_ms as f64).clamp(0.0, 1.0) } else { 0.0 },
        mean_episode_s: if count > 0 { snore_ms as f64 / count as f64 / 1000.0 } else { 0.0 },
        env_means: EnvMeans { temperature_c: mean(sums[0]), humidity_pct: mean(sums[1]), pressure_pa: mean(sums[2]) },
        hourly_snore_histogram: hist,
    })
}

/// Ordinary least squares slope of `y` on `x`; 0 when `x` has no spread.
pub fn ls_slope(points: &[(f64, f64)]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= f64::EPSILON * n {
        0.0
    } else {
        sxy / sxx
    }
}

/// Nightly series for one device over `[from, to]` (inclusive dates of
/// `started_at`, UTC). Sessions without events are left out. The slope is
/// fitted against days since the first night in the series.
pub fn trends(
    device_id: &str,
    summaries: &[(SleepSession, SessionSummary)],
    from: Option<NaiveDate>,
    to: Option<NaiveDate>,
) -> TrendReport {
    let mut rows: Vec<&(SleepSession, SessionSummary)> = summaries
        .iter()
        .filter(|(s, _)| s.device_id == device_id)
        .filter(|(s, _)| {
            let d = s.started_at.date_naive();
            from.is_none_or(|f| d >= f) && to.is_none_or(|t| d <= t)
        })
        .collect();
    rows.sort_by(|a, b| (a.0.started_at, &a.0.session_id).cmp(&(b.0.started_at, &b.0.session_id)));
    let series: Vec<TrendPoint> = rows
        .iter()
        .map(|(s, sum)| TrendPoint {
            session_id: s.session_id.clone(),
            date: s.started_at.date_naive(),
            snore_minutes: sum.snore_minutes,
            episode_count: sum.episode_count,
        })
        .collect();
    let slope = match series.first() {
        Some(first) => {
            let pts: Vec<(f64, f64)> =
                series.iter().map(|p| ((p.date - first.date).num_days() as f64, p.snore_minutes)).collect();
            ls_slope(&pts)
        }
        None => 0.0,
    };
    TrendReport {
        window: TrendWindow {
            device_id: device_id.to_string(),
            from,
            to,
            x: "days since first night in series".into(),
        },
        series,
        slope_min_per_night: slope,
    }
}
