//! Runtime monitoring simulation.
//!
//! Event traces are replayed against the suspect list: events from
//! processes outside it are dropped, which is how the foreground monitor's
//! "kill every other process" focus is modelled. Surviving events are
//! bucketed per process and time window and OR-reduced into one instance
//! per bucket. Instances are labelled by a fixed rule: an SMS sent while
//! the screen is off needs no user interaction, so it is malicious.
//!
//! Trace format, one event per line:
//!
//! ```text
//! timestamp,process,signal[;signal...],screen_wake
//! 1000,com.elite.SMSReceiver,SMSReceiver;android.telephony.SmsManager,0
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::arff::{Attribute, Dataset, Value};
use crate::features::SuspectList;

pub const DEFAULT_WINDOW_MS: u64 = 5000;

/// Process names of the collected data, in attribute order.
pub const PROCESS_NAMES: [&str; 8] = [
    "com.samsung.ui",
    "datapole.rathi.monitor",
    "com.elite.AlarmReceiver",
    "com.elite.SMSReceiver",
    "com.android.bluetooth",
    "android.telephony.SMSManager",
    "com.sec.imsservice",
    "com.elite.BootReceiver",
];

/// Processes that are always monitored alongside the ones found statically.
pub const SYSTEM_PROCESSES: [&str; 4] = [
    "com.samsung.ui",
    "com.android.bluetooth",
    "com.sec.imsservice",
    "datapole.rathi.monitor",
];

pub const RELATION: &str = "RunningProcessVectors";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Signal {
    BootReceiver,
    SmsReceiver,
    AlarmReceiver,
    SmsManager,
}

impl Signal {
    pub const ALL: [Signal; 4] = [
        Signal::BootReceiver,
        Signal::SmsReceiver,
        Signal::AlarmReceiver,
        Signal::SmsManager,
    ];

    /// Attribute name, which is also the spelling used in traces.
    pub fn name(self) -> &'static str {
        match self {
            Signal::BootReceiver => "BootReceiver",
            Signal::SmsReceiver => "SMSReceiver",
            Signal::AlarmReceiver => "AlarmReceiver",
            Signal::SmsManager => "android.telephony.SmsManager",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|sig| sig.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventRecord {
    pub timestamp: u64,
    pub process: String,
    pub signals: BTreeSet<Signal>,
    pub screen_wake: bool,
}

impl fmt::Display for EventRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sigs: Vec<&str> = self.signals.iter().map(|s| s.name()).collect();
        write!(
            f,
            "{},{},{},{}",
            self.timestamp,
            self.process,
            sigs.join(";"),
            u8::from(self.screen_wake)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Regular,
    Malicious,
    Unknown,
}

impl Label {
    pub fn name(self) -> &'static str {
        match self {
            Label::Regular => "Regular",
            Label::Malicious => "Malicious",
            Label::Unknown => "?",
        }
    }
}

/// One row of the monitoring dataset.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MonitorInstance {
    pub process_name: String,
    pub boot_receiver: bool,
    pub sms_receiver: bool,
    pub alarm_receiver: bool,
    pub sms_manager: bool,
    pub screen_wake: bool,
    pub label: Label,
}

impl MonitorInstance {
    pub fn signal(&self, s: Signal) -> bool {
        match s {
            Signal::BootReceiver => self.boot_receiver,
            Signal::SmsReceiver => self.sms_receiver,
            Signal::AlarmReceiver => self.alarm_receiver,
            Signal::SmsManager => self.sms_manager,
        }
    }

    fn set_signal(&mut self, s: Signal) {
        match s {
            Signal::BootReceiver => self.boot_receiver = true,
            Signal::SmsReceiver => self.sms_receiver = true,
            Signal::AlarmReceiver => self.alarm_receiver = true,
            Signal::SmsManager => self.sms_manager = true,
        }
    }

    pub fn labeled(mut self) -> Self {
        self.label = label_instance(&self);
        self
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TraceError {
    #[error("trace line {line}: {message}")]
    MalformedTrace { line: u64, message: String },
    #[error("trace line {line}: timestamp {timestamp} is earlier than the previous event")]
    NonMonotonicTimestamps { line: u64, timestamp: u64 },
    #[error("window length must be positive")]
    ZeroWindow,
}

pub fn parse_trace(text: &str) -> Result<Vec<EventRecord>, TraceError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut events: Vec<EventRecord> = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| TraceError::MalformedTrace {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |message: String| TraceError::MalformedTrace { line, message };
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != 4 {
            return Err(bad(format!("expected 4 fields, found {}", rec.len())));
        }
        if events.is_empty() && rec[0].eq_ignore_ascii_case("timestamp") {
            continue;
        }
        let timestamp: u64 = rec[0]
            .parse()
            .map_err(|_| bad(format!("bad timestamp `{}`", &rec[0])))?;
        let process = rec[1].to_string();
        if process.is_empty() {
            return Err(bad("empty process name".into()));
        }
        let signals = rec[2]
            .split(';')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| Signal::from_name(s).ok_or_else(|| bad(format!("unknown signal `{s}`"))))
            .collect::<Result<BTreeSet<_>, _>>()?;
        let screen_wake = match &rec[3] {
            "0" => false,
            "1" => true,
            other => return Err(bad(format!("screen_wake must be 0 or 1, got `{other}`"))),
        };
        if events.last().is_some_and(|e| e.timestamp > timestamp) {
            return Err(TraceError::NonMonotonicTimestamps { line, timestamp });
        }
        events.push(EventRecord {
            timestamp,
            process,
            signals,
            screen_wake,
        });
    }
    Ok(events)
}

pub fn emit_trace(events: &[EventRecord]) -> String {
    let mut out = String::from("timestamp,process,signals,screen_wake\n");
    for e in events {
        out.push_str(&e.to_string());
        out.push('\n');
    }
    out
}

/// Buckets suspect events per (window, process) and OR-reduces each bucket.
/// Output is ordered by window, then process name. Labels are `Unknown`.
pub fn replay_events(
    events: &[EventRecord],
    suspects: &SuspectList,
    window_ms: u64,
) -> Result<Vec<MonitorInstance>, TraceError> {
    if window_ms == 0 {
        return Err(TraceError::ZeroWindow);
    }
    // (window, process) -> (instance, awake votes, asleep votes)
    let mut buckets: BTreeMap<(u64, &str), (MonitorInstance, usize, usize)> = BTreeMap::new();
    for e in events.iter().filter(|e| suspects.contains(&e.process)) {
        let (inst, awake, asleep) = buckets
            .entry((e.timestamp / window_ms, &e.process))
            .or_insert_with(|| {
                (
                    MonitorInstance {
                        process_name: e.process.clone(),
                        boot_receiver: false,
                        sms_receiver: false,
                        alarm_receiver: false,
                        sms_manager: false,
                        screen_wake: false,
                        label: Label::Unknown,
                    },
                    0,
                    0,
                )
            });
        for s in &e.signals {
            inst.set_signal(*s);
        }
        if e.screen_wake {
            *awake += 1;
        } else {
            *asleep += 1;
        }
    }
    Ok(buckets
        .into_values()
        .map(|(mut inst, awake, asleep)| {
            inst.screen_wake = awake >= asleep;
            inst
        })
        .collect())
}

pub fn replay_trace(
    text: &str,
    suspects: &SuspectList,
    window_ms: u64,
) -> Result<Vec<MonitorInstance>, TraceError> {
    if window_ms == 0 {
        return Err(TraceError::ZeroWindow);
    }
    replay_events(&parse_trace(text)?, suspects, window_ms)
}

/// Ground truth: malicious exactly when an SMS is sent with the screen off.
pub fn label_instance(inst: &MonitorInstance) -> Label {
    if inst.sms_manager && !inst.screen_wake {
        Label::Malicious
    } else {
        Label::Regular
    }
}

/// Seeded synthetic data over the eight monitored processes. Half the rows
/// (rounded down) are malicious; the rest are drawn from the regular states.
pub fn generate_instances(seed: u64, n: usize) -> Vec<MonitorInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_malicious = n / 2;
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let want_malicious = out.len() < n_malicious;
        let mut inst = MonitorInstance {
            process_name: PROCESS_NAMES.choose(&mut rng).unwrap().to_string(),
            boot_receiver: rng.gen(),
            sms_receiver: rng.gen(),
            alarm_receiver: rng.gen(),
            sms_manager: rng.gen(),
            screen_wake: rng.gen(),
            label: Label::Unknown,
        };
        if want_malicious {
            inst.sms_manager = true;
            inst.screen_wake = false;
        } else if inst.sms_manager && !inst.screen_wake {
            continue;
        }
        out.push(inst.labeled());
    }
    out.shuffle(&mut rng);
    out
}

pub fn generate_dataset(seed: u64, n: usize) -> Dataset {
    to_dataset(&generate_instances(seed, n))
}

/// Lays instances out as a trace with one event per window, so that
/// replaying it with `window_ms` gives the instances back.
pub fn instances_to_trace(instances: &[MonitorInstance], window_ms: u64) -> Vec<EventRecord> {
    instances
        .iter()
        .enumerate()
        .map(|(i, inst)| EventRecord {
            timestamp: i as u64 * window_ms,
            process: inst.process_name.clone(),
            signals: Signal::ALL.into_iter().filter(|s| inst.signal(*s)).collect(),
            screen_wake: inst.screen_wake,
        })
        .collect()
}

/// Builds the monitoring dataset. The process attribute lists the eight
/// known processes first, then any others in order of appearance.
pub fn to_dataset(instances: &[MonitorInstance]) -> Dataset {
    let mut processes: Vec<String> = PROCESS_NAMES.iter().map(|s| s.to_string()).collect();
    for inst in instances {
        if !processes.contains(&inst.process_name) {
            processes.push(inst.process_name.clone());
        }
    }
    let mut attributes = vec![Attribute::new("ProcessName", processes.clone())];
    attributes.extend(Signal::ALL.map(|s| Attribute::new(s.name(), ["0", "1"])));
    attributes.push(Attribute::new("ScreenWake", ["0", "1"]));
    attributes.push(Attribute::new("Class", ["Regular", "Malicious"]));
    let bit = |b: bool| Value::Nominal(usize::from(b));
    let rows = instances
        .iter()
        .map(|inst| {
            let mut row = vec![Value::Nominal(
                processes.iter().position(|p| *p == inst.process_name).unwrap(),
            )];
            row.extend(Signal::ALL.map(|s| bit(inst.signal(s))));
            row.push(bit(inst.screen_wake));
            row.push(match inst.label {
                Label::Regular => Value::Nominal(0),
                Label::Malicious => Value::Nominal(1),
                Label::Unknown => Value::Missing,
            });
            row
        })
        .collect();
    Dataset {
        relation: RELATION.into(),
        attributes,
        rows,
    }
}
