//! Timed detection events: ingestion, coincidence pairing by sliding window
//! or by a fixed time lattice, efficiency estimation and loophole-adjusted
//! verdicts.
//!
//! Stream files are NDJSON, one event per line:
//!
//! ```text
//! {"t_ns":1200,"wing":"A","setting":0,"outcome":1}
//! ```
//!
//! Timestamps are integer nanoseconds.

use std::collections::VecDeque;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::bounds::{larsson_coincidence_bound, larsson_detection_bound};
use crate::chsh::{ChshSummary, ObservedRun};
use crate::error::{Error, Result};
use crate::lhv::LoopholeDataset;
use crate::table::{SettingPair, Sign};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Wing {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimedEvent {
    pub t_ns: u64,
    pub wing: Wing,
    pub setting: u8,
    pub outcome: Sign,
}

/// What to do when a wing's timestamps go backwards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UnsortedPolicy {
    #[default]
    Reject,
    Sort,
}

/// Events in merged time order (ties: wing A first, then input order).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventStream {
    events: Vec<TimedEvent>,
}

impl EventStream {
    /// Builds a stream; fails if a wing's timestamps decrease.
    pub fn new(events: Vec<TimedEvent>) -> Result<Self> {
        let mut last = [None::<u64>; 2];
        for (i, e) in events.iter().enumerate() {
            let slot = &mut last[e.wing as usize];
            if slot.is_some_and(|t| e.t_ns < t) {
                return Err(Error::parse(
                    i + 1,
                    format!(
                        "timestamps of wing {:?} decrease at t_ns={}",
                        e.wing, e.t_ns
                    ),
                ));
            }
            *slot = Some(e.t_ns);
        }
        Ok(Self::sorted(events))
    }

    /// Builds a stream from events in any order.
    pub fn sorted(mut events: Vec<TimedEvent>) -> Self {
        events.sort_by_key(|e| (e.t_ns, e.wing));
        EventStream { events }
    }

    pub fn events(&self) -> &[TimedEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn write_ndjson<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for e in &self.events {
            writeln!(
                w,
                r#"{{"t_ns":{},"wing":"{:?}","setting":{},"outcome":{}}}"#,
                e.t_ns, e.wing, e.setting, e.outcome
            )?;
        }
        Ok(())
    }

    /// Emission `j` happens at `j·period + period/2`; each detected wing
    /// produces one event at that instant.
    pub fn from_loophole_dataset(data: &LoopholeDataset, period_ns: u64) -> Self {
        let mut events = Vec::new();
        for (j, r) in data.records.iter().enumerate() {
            let t = j as u64 * period_ns + period_ns / 2;
            if let Some(a) = r.a.detected() {
                events.push(TimedEvent {
                    t_ns: t,
                    wing: Wing::A,
                    setting: r.x,
                    outcome: a,
                });
            }
            if let Some(b) = r.b.detected() {
                events.push(TimedEvent {
                    t_ns: t,
                    wing: Wing::B,
                    setting: r.y,
                    outcome: b,
                });
            }
        }
        EventStream { events }
    }

    /// Perfect-detection stream for a list of runs, one run per period.
    pub fn from_runs(runs: &[ObservedRun], period_ns: u64) -> Self {
        let mut events = Vec::with_capacity(runs.len() * 2);
        for (j, r) in runs.iter().enumerate() {
            let t = j as u64 * period_ns + period_ns / 2;
            events.push(TimedEvent {
                t_ns: t,
                wing: Wing::A,
                setting: r.x,
                outcome: r.a_out,
            });
            events.push(TimedEvent {
                t_ns: t,
                wing: Wing::B,
                setting: r.y,
                outcome: r.b_out,
            });
        }
        EventStream { events }
    }

    /// Merges per-wing time-tag columns (as exported by lab time-taggers)
    /// into a stream. This is the entry point for converters of external
    /// data sets.
    pub fn from_wing_columns(a: &[(u64, u8, Sign)], b: &[(u64, u8, Sign)]) -> Result<Self> {
        let mk = |wing: Wing, cols: &[(u64, u8, Sign)]| {
            cols.iter()
                .map(move |&(t_ns, setting, outcome)| TimedEvent {
                    t_ns,
                    wing,
                    setting,
                    outcome,
                })
                .collect::<Vec<_>>()
        };
        let mut events = mk(Wing::A, a);
        events.extend(mk(Wing::B, b));
        for e in &events {
            if e.setting > 1 {
                return Err(Error::invalid(
                    "setting",
                    format!("must be 0 or 1, got {}", e.setting),
                ));
            }
        }
        for cols in [a, b] {
            if cols.windows(2).any(|w| w[1].0 < w[0].0) {
                return Err(Error::invalid(
                    "t_ns",
                    "per-wing time tags must be nondecreasing",
                ));
            }
        }
        Ok(Self::sorted(events))
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEvent {
    t_ns: i64,
    wing: String,
    setting: i64,
    outcome: i64,
}

/// Parses an NDJSON event stream; blank lines are skipped.
pub fn parse_event_stream<R: std::io::Read>(
    input: R,
    policy: UnsortedPolicy,
) -> Result<EventStream> {
    let reader = std::io::BufReader::new(input);
    let mut events = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawEvent = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            column: Some(e.column()),
            message: e.to_string(),
        })?;
        if raw.t_ns < 0 {
            return Err(Error::parse(
                line_no,
                format!("t_ns must be non-negative, got {}", raw.t_ns),
            ));
        }
        let wing = match raw.wing.as_str() {
            "A" => Wing::A,
            "B" => Wing::B,
            other => {
                return Err(Error::parse(
                    line_no,
                    format!("wing must be \"A\" or \"B\", got {other:?}"),
                ))
            }
        };
        if !(0..=1).contains(&raw.setting) {
            return Err(Error::parse(
                line_no,
                format!("setting must be 0 or 1, got {}", raw.setting),
            ));
        }
        let outcome = Sign::try_from(raw.outcome)
            .map_err(|e| Error::parse(line_no, format!("outcome: {e}")))?;
        events.push(TimedEvent {
            t_ns: raw.t_ns as u64,
            wing,
            setting: raw.setting as u8,
            outcome,
        });
    }
    match policy {
        UnsortedPolicy::Reject => EventStream::new(events),
        UnsortedPolicy::Sort => Ok(EventStream::sorted(events)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairingMethod {
    Window,
    Lattice,
    /// Rounds delimited by an external clock; no timing ambiguity.
    Clocked,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairedRun {
    pub x: u8,
    pub y: u8,
    pub a_out: Sign,
    pub b_out: Sign,
    pub t_a: u64,
    pub t_b: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairingResult {
    pub pairs: Vec<PairedRun>,
    /// Unpaired A events by Alice's setting.
    pub singles_a: [u64; 2],
    /// Unpaired B events by Bob's setting.
    pub singles_b: [u64; 2],
    pub method: PairingMethod,
    pub window_ns: u64,
    pub lattice_origin_ns: i64,
}

impl PairingResult {
    fn empty(method: PairingMethod, window_ns: u64, lattice_origin_ns: i64) -> Self {
        PairingResult {
            pairs: Vec::new(),
            singles_a: [0; 2],
            singles_b: [0; 2],
            method,
            window_ns,
            lattice_origin_ns,
        }
    }

    fn single(&mut self, e: &TimedEvent) {
        match e.wing {
            Wing::A => self.singles_a[e.setting as usize] += 1,
            Wing::B => self.singles_b[e.setting as usize] += 1,
        }
    }

    fn pair(&mut self, a: &TimedEvent, b: &TimedEvent) {
        self.pairs.push(PairedRun {
            x: a.setting,
            y: b.setting,
            a_out: a.outcome,
            b_out: b.outcome,
            t_a: a.t_ns,
            t_b: b.t_ns,
        });
    }

    /// Pairs detections that share a round of an external clock. Each entry
    /// is `(x, y, a, b)` with `None` for no detection; `t_a` and `t_b` of a
    /// pair hold the round index.
    pub fn clocked(rounds: &[(u8, u8, Option<Sign>, Option<Sign>)]) -> Self {
        let mut out = PairingResult::empty(PairingMethod::Clocked, 0, 0);
        for (i, &(x, y, a, b)) in rounds.iter().enumerate() {
            match (a, b) {
                (Some(a_out), Some(b_out)) => out.pairs.push(PairedRun {
                    x,
                    y,
                    a_out,
                    b_out,
                    t_a: i as u64,
                    t_b: i as u64,
                }),
                (Some(_), None) => out.singles_a[x as usize] += 1,
                (None, Some(_)) => out.singles_b[y as usize] += 1,
                (None, None) => {}
            }
        }
        out
    }

    /// Number of events accounted for (2 per pair plus singles).
    pub fn events_accounted(&self) -> u64 {
        2 * self.pairs.len() as u64
            + self.singles_a.iter().sum::<u64>()
            + self.singles_b.iter().sum::<u64>()
    }

    pub fn observed_runs(&self) -> Vec<ObservedRun> {
        self.pairs
            .iter()
            .enumerate()
            .map(|(i, p)| ObservedRun {
                x: p.x,
                y: p.y,
                a_out: p.a_out,
                b_out: p.b_out,
                row_index: i,
            })
            .collect()
    }

    pub fn pair_counts(&self) -> [u64; 4] {
        let mut c = [0; 4];
        for p in &self.pairs {
            c[SettingPair { x: p.x, y: p.y }.cell()] += 1;
        }
        c
    }
}

fn check_window(w_ns: u64) -> Result<()> {
    if w_ns == 0 {
        return Err(Error::invalid("window_ns", "must be positive"));
    }
    Ok(())
}

/// Greedy earliest-first matching in merged time order: each event pairs
/// with the earliest still-unmatched event of the other wing within `w_ns`,
/// otherwise waits for a later partner.
pub fn pair_by_window(stream: &EventStream, w_ns: u64) -> Result<PairingResult> {
    check_window(w_ns)?;
    let mut out = PairingResult::empty(PairingMethod::Window, w_ns, 0);
    // unmatched events of at most one wing at a time
    let mut waiting: VecDeque<&TimedEvent> = VecDeque::new();
    for e in stream.events() {
        while let Some(front) = waiting.front() {
            if front.wing != e.wing && e.t_ns - front.t_ns > w_ns {
                out.single(front);
                waiting.pop_front();
            } else {
                break;
            }
        }
        match waiting.front() {
            Some(front) if front.wing != e.wing => {
                let other = waiting.pop_front().expect("front exists");
                let (a, b) = if e.wing == Wing::A {
                    (e, other)
                } else {
                    (other, e)
                };
                out.pair(a, b);
            }
            _ => waiting.push_back(e),
        }
    }
    for e in waiting {
        out.single(e);
    }
    Ok(out)
}

/// Pairs within the intervals `[origin + k·w, origin + (k+1)·w)`: an interval
/// holding exactly one A and exactly one B event yields a pair, any other
/// occupancy leaves all its events single.
pub fn pair_by_lattice(stream: &EventStream, w_ns: u64, origin_ns: i64) -> Result<PairingResult> {
    check_window(w_ns)?;
    let mut out = PairingResult::empty(PairingMethod::Lattice, w_ns, origin_ns);
    let slot = |t: u64| (t as i128 - origin_ns as i128).div_euclid(w_ns as i128);
    let events = stream.events();
    let mut start = 0;
    while start < events.len() {
        let k = slot(events[start].t_ns);
        let end = start
            + events[start..]
                .iter()
                .take_while(|e| slot(e.t_ns) == k)
                .count();
        let group = &events[start..end];
        let a: Vec<_> = group.iter().filter(|e| e.wing == Wing::A).collect();
        let b: Vec<_> = group.iter().filter(|e| e.wing == Wing::B).collect();
        if a.len() == 1 && b.len() == 1 {
            out.pair(a[0], b[0]);
        } else {
            group.iter().for_each(|e| out.single(e));
        }
        start = end;
    }
    Ok(out)
}

/// Name of the efficiency estimator recorded in reports.
pub const GAMMA_ESTIMATOR: &str = "singles-split-equally-over-opposite-settings";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyEstimate {
    pub gamma_hat: f64,
    /// Entries 0..4: P(A detects | B detects) per cell; 4..8: P(B | A).
    pub per_cell: [f64; 8],
    pub estimator: String,
}

/// Estimates the efficiency from a pairing.
///
/// For cell `(x, y)`, the B-events that could have paired with an A-event at
/// setting `x` are the pairs in that cell plus half of B's singles at
/// setting `y` (fair settings split them evenly across Alice's two settings);
/// symmetrically for A. The estimate is the minimum of the eight rates.
pub fn estimate_gamma(result: &PairingResult) -> Result<EfficiencyEstimate> {
    let pairs = result.pair_counts();
    let mut per_cell = [0.0; 8];
    for cell in 0..4 {
        let p = SettingPair::from_cell(cell);
        if pairs[cell] == 0 {
            return Err(Error::UndefinedCorrelation { x: p.x, y: p.y });
        }
        let n = pairs[cell] as f64;
        per_cell[cell] = n / (n + result.singles_b[p.y as usize] as f64 / 2.0);
        per_cell[4 + cell] = n / (n + result.singles_a[p.x as usize] as f64 / 2.0);
    }
    let gamma_hat = per_cell.iter().copied().fold(1.0, f64::min);
    Ok(EfficiencyEstimate {
        gamma_hat,
        per_cell,
        estimator: GAMMA_ESTIMATOR.to_string(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitVerdict {
    pub limit: f64,
    /// `s > limit`
    pub violated: bool,
}

impl LimitVerdict {
    fn new(s: f64, limit: f64) -> Self {
        LimitVerdict {
            limit,
            violated: s > limit,
        }
    }

    pub fn label(&self) -> &'static str {
        if self.violated {
            "violated"
        } else {
            "not violated"
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub method: PairingMethod,
    pub window_ns: u64,
    pub summary: ChshSummary,
    pub efficiency: EfficiencyEstimate,
    pub naive: LimitVerdict,
    pub detection_adjusted: LimitVerdict,
    pub coincidence_adjusted: LimitVerdict,
}

/// Verdicts of `s` against 2 and the two efficiency-adjusted limits.
pub fn verdicts_for(s: f64, gamma: f64) -> Result<(LimitVerdict, LimitVerdict, LimitVerdict)> {
    let det = larsson_detection_bound(gamma)?;
    let coin = larsson_coincidence_bound(gamma)?;
    Ok((
        LimitVerdict::new(s, 2.0),
        LimitVerdict::new(s, det.limit),
        LimitVerdict::new(s, coin.limit),
    ))
}

pub fn analyze(result: &PairingResult) -> Result<AnalysisReport> {
    let summary = crate::chsh::observed_correlations(&result.observed_runs())?;
    let efficiency = estimate_gamma(result)?;
    let (naive, detection_adjusted, coincidence_adjusted) =
        verdicts_for(summary.s, efficiency.gamma_hat)?;
    Ok(AnalysisReport {
        method: result.method,
        window_ns: result.window_ns,
        summary,
        efficiency,
        naive,
        detection_adjusted,
        coincidence_adjusted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(t: u64, wing: Wing) -> TimedEvent {
        TimedEvent {
            t_ns: t,
            wing,
            setting: 0,
            outcome: Sign::Plus,
        }
    }

    fn stream(a: &[u64], b: &[u64]) -> EventStream {
        let mut v: Vec<_> = a.iter().map(|&t| ev(t, Wing::A)).collect();
        v.extend(b.iter().map(|&t| ev(t, Wing::B)));
        EventStream::sorted(v)
    }

    #[test]
    fn clocked_pairing_counts_singles_by_own_setting() {
        let rounds = [
            (0, 1, Some(Sign::Plus), Some(Sign::Minus)),
            (1, 0, Some(Sign::Plus), None),
            (0, 1, None, Some(Sign::Plus)),
            (1, 1, None, None),
        ];
        let r = PairingResult::clocked(&rounds);
        assert_eq!(r.pairs.len(), 1);
        assert_eq!(r.singles_a, [0, 1]);
        assert_eq!(r.singles_b, [0, 1]);
        assert_eq!(r.events_accounted(), 4);
        assert_eq!(r.method, PairingMethod::Clocked);
    }

    #[test]
    fn parse_empty_and_valid() {
        assert!(parse_event_stream("".as_bytes(), UnsortedPolicy::Reject)
            .unwrap()
            .is_empty());
        let text = "{\"t_ns\":5,\"wing\":\"A\",\"setting\":0,\"outcome\":1}\n{\"t_ns\":7,\"wing\":\"B\",\"setting\":1,\"outcome\":-1}\n";
        let s = parse_event_stream(text.as_bytes(), UnsortedPolicy::Reject).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.events()[1].outcome, Sign::Minus);
        let mut out = Vec::new();
        s.write_ndjson(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), text);
    }

    #[test]
    fn parse_rejects_zero_outcome_with_line() {
        let text = "{\"t_ns\":5,\"wing\":\"A\",\"setting\":0,\"outcome\":1}\n{\"t_ns\":6,\"wing\":\"A\",\"setting\":0,\"outcome\":0}\n";
        let err = parse_event_stream(text.as_bytes(), UnsortedPolicy::Reject).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn parse_reports_column_for_malformed_json() {
        let text = "{\"t_ns\":5,\"wing\":\"A\",\"setting\":0,\"outcome\":1\n";
        match parse_event_stream(text.as_bytes(), UnsortedPolicy::Reject).unwrap_err() {
            Error::Parse {
                line: 1,
                column: Some(_),
                ..
            } => {}
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn parse_rejects_out_of_range_fields() {
        for bad in [
            r#"{"t_ns":-1,"wing":"A","setting":0,"outcome":1}"#,
            r#"{"t_ns":1,"wing":"C","setting":0,"outcome":1}"#,
            r#"{"t_ns":1,"wing":"A","setting":2,"outcome":1}"#,
            r#"{"t_ns":1,"wing":"A","setting":0,"outcome":1,"extra":3}"#,
        ] {
            assert!(
                parse_event_stream(bad.as_bytes(), UnsortedPolicy::Reject).is_err(),
                "{bad}"
            );
        }
    }

    #[test]
    fn unsorted_policy() {
        let text = "{\"t_ns\":9,\"wing\":\"A\",\"setting\":0,\"outcome\":1}\n{\"t_ns\":3,\"wing\":\"A\",\"setting\":0,\"outcome\":1}\n";
        assert!(parse_event_stream(text.as_bytes(), UnsortedPolicy::Reject).is_err());
        let s = parse_event_stream(text.as_bytes(), UnsortedPolicy::Sort).unwrap();
        assert_eq!(s.events()[0].t_ns, 3);
        // different wings may interleave freely
        let text = "{\"t_ns\":9,\"wing\":\"A\",\"setting\":0,\"outcome\":1}\n{\"t_ns\":3,\"wing\":\"B\",\"setting\":0,\"outcome\":1}\n";
        let s = parse_event_stream(text.as_bytes(), UnsortedPolicy::Reject).unwrap();
        assert_eq!(s.events()[0].wing, Wing::B);
    }

    #[test]
    fn window_examples() {
        let r = pair_by_window(&stream(&[0], &[10]), 100).unwrap();
        assert_eq!((r.pairs.len(), r.singles_a[0] + r.singles_b[0]), (1, 0));
        let r = pair_by_window(&stream(&[0], &[200]), 100).unwrap();
        assert_eq!((r.pairs.len(), r.singles_a[0], r.singles_b[0]), (0, 1, 1));
        let r = pair_by_window(&stream(&[0, 50], &[60]), 100).unwrap();
        assert_eq!(r.pairs.len(), 1);
        assert_eq!((r.pairs[0].t_a, r.pairs[0].t_b), (0, 60));
        assert_eq!(r.singles_a[0], 1);
        assert!(pair_by_window(&stream(&[0], &[0]), 0).is_err());
    }

    #[test]
    fn lattice_examples() {
        let r = pair_by_lattice(&stream(&[10], &[20]), 100, 0).unwrap();
        assert_eq!(r.pairs.len(), 1);
        let contrast = stream(&[90], &[110]);
        assert_eq!(pair_by_lattice(&contrast, 100, 0).unwrap().pairs.len(), 0);
        assert_eq!(pair_by_window(&contrast, 100).unwrap().pairs.len(), 1);
        let r = pair_by_lattice(&stream(&[10, 20], &[30]), 100, 0).unwrap();
        assert_eq!(r.pairs.len(), 0);
        assert_eq!(r.singles_a[0] + r.singles_b[0], 3);
    }

    #[test]
    fn lattice_origin_shift() {
        let s = stream(&[90], &[110]);
        assert_eq!(pair_by_lattice(&s, 100, 50).unwrap().pairs.len(), 1);
        assert_eq!(pair_by_lattice(&s, 100, -50).unwrap().pairs.len(), 1);
    }

    #[test]
    fn gamma_full_detection() {
        let mut ev = Vec::new();
        for (j, (x, y)) in [(0u8, 0u8), (0, 1), (1, 0), (1, 1)].iter().enumerate() {
            let t = j as u64 * 1000;
            ev.push(TimedEvent {
                t_ns: t,
                wing: Wing::A,
                setting: *x,
                outcome: Sign::Plus,
            });
            ev.push(TimedEvent {
                t_ns: t + 3,
                wing: Wing::B,
                setting: *y,
                outcome: Sign::Minus,
            });
        }
        let r = pair_by_window(&EventStream::new(ev).unwrap(), 10).unwrap();
        let g = estimate_gamma(&r).unwrap();
        assert_eq!(g.gamma_hat, 1.0);
        assert_eq!(g.estimator, GAMMA_ESTIMATOR);
    }

    #[test]
    fn gamma_empty_cell_errors() {
        let r = pair_by_window(&stream(&[0], &[5]), 10).unwrap();
        assert!(estimate_gamma(&r).is_err());
        assert!(analyze(&r).is_err());
    }

    #[test]
    fn from_wing_columns_validates() {
        let a = [(5, 0, Sign::Plus), (9, 1, Sign::Minus)];
        let b = [(6, 1, Sign::Plus)];
        let s = EventStream::from_wing_columns(&a, &b).unwrap();
        assert_eq!(
            s.events().iter().map(|e| e.t_ns).collect::<Vec<_>>(),
            vec![5, 6, 9]
        );
        assert!(
            EventStream::from_wing_columns(&[(9, 0, Sign::Plus), (5, 0, Sign::Plus)], &[]).is_err()
        );
        assert!(EventStream::from_wing_columns(&[(9, 2, Sign::Plus)], &[]).is_err());
    }

    fn arb_stream() -> impl Strategy<Value = EventStream> {
        prop::collection::vec((0u64..2000, any::<bool>(), 0u8..2, any::<bool>()), 0..60).prop_map(
            |v| {
                EventStream::sorted(
                    v.into_iter()
                        .map(|(t, a, s, o)| TimedEvent {
                            t_ns: t,
                            wing: if a { Wing::A } else { Wing::B },
                            setting: s,
                            outcome: Sign::from_bool(o),
                        })
                        .collect(),
                )
            },
        )
    }

    proptest! {
        #[test]
        fn pairing_conserves_events(s in arb_stream(), w in 1u64..300) {
            let win = pair_by_window(&s, w).unwrap();
            let lat = pair_by_lattice(&s, w, 0).unwrap();
            prop_assert_eq!(win.events_accounted(), s.len() as u64);
            prop_assert_eq!(lat.events_accounted(), s.len() as u64);
            prop_assert!(lat.pairs.len() <= win.pairs.len());
            for p in win.pairs.iter() {
                prop_assert!(p.t_a.abs_diff(p.t_b) <= w);
            }
        }

        #[test]
        fn lowering_gamma_never_creates_violation(s in 1.5f64..4.0, g in 0.05f64..1.0, f in 0.1f64..1.0) {
            let hi = verdicts_for(s, g).unwrap();
            let lo = verdicts_for(s, g * f).unwrap();
            prop_assert!(!lo.1.violated || hi.1.violated);
            prop_assert!(!lo.2.violated || hi.2.violated);
        }
    }

    #[test]
    fn verdict_labels() {
        let (n, d, c) = verdicts_for(2.8, 0.5).unwrap();
        assert!(n.violated && !d.violated && !c.violated);
        assert_eq!(d.limit, 6.0);
        assert_eq!(n.label(), "violated");
    }
}
