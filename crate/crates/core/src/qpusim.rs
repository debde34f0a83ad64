//! A simulated QPU behind a discrete-event queue.
//!
//! Jobs submitted through the shared queue pay a fixed queue wait `W` before
//! executing; an exclusive session pays `W` once at acquisition and then runs
//! its jobs back-to-back, which is where hybrid loops recover their latency.
//! Results are synthetic: a seeded digest of the job payload expands into a
//! deterministic measurement histogram, so identical submissions always
//! produce identical results regardless of timing or reservation policy.

use crate::clock::{Clock, ClockMode, TimeMs};
use crate::engine::event::CorrelationKey;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use thiserror::Error;

/// Latency parameters of the simulated device. Configured via the runtime
/// configuration keys `queue_wait_ms`, `exec_base_ms`, `per_shot_us`, `seed`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyModel {
    #[serde(default = "default_queue_wait")]
    pub queue_wait_ms: u64,
    #[serde(default = "default_exec_base")]
    pub exec_base_ms: u64,
    #[serde(default)]
    pub per_shot_us: u64,
    #[serde(default)]
    pub seed: u64,
}

fn default_queue_wait() -> u64 {
    500
}

fn default_exec_base() -> u64 {
    100
}

impl Default for LatencyModel {
    fn default() -> Self {
        LatencyModel {
            queue_wait_ms: default_queue_wait(),
            exec_base_ms: default_exec_base(),
            per_shot_us: 0,
            seed: 0,
        }
    }
}

impl LatencyModel {
    /// Pure execution time of a job, excluding any queue wait.
    fn exec_ms(&self, shots: u64) -> u64 {
        self.exec_base_ms + (self.per_shot_us * shots) / 1000
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpuJob {
    pub payload: serde_json::Value,
    pub shots: u64,
    pub key: CorrelationKey,
    /// Set when the job runs inside a reserved session.
    pub session: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpuSession {
    pub session_id: u64,
    pub holder_instance: String,
    /// When exclusivity takes effect — one queue wait after the open call.
    pub opened_at: TimeMs,
    pub closed_at: Option<TimeMs>,
}

/// A job completion delivered by the event pump.
#[derive(Debug, Clone, PartialEq)]
pub struct QpuCompletion {
    pub job_id: u64,
    pub key: CorrelationKey,
    pub at: TimeMs,
    pub result: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QpuError {
    #[error("QPU is exclusively reserved by another session")]
    Denied,
    #[error("stale_session: session {0} is not open")]
    StaleSession(u64),
    #[error("QPU offline")]
    Offline,
    #[error("run_until requires the simulated clock")]
    WallClock,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct QpuStats {
    /// (job id, submitting instance, queue wait in ms) per delivered job.
    pub job_waits: Vec<(u64, String, u64)>,
    /// Instance id → (first submit, last completion) over delivered jobs.
    pub instance_spans: BTreeMap<String, (TimeMs, TimeMs)>,
    pub sessions_opened: u64,
    pub sessions_denied: u64,
}

impl QpuStats {
    /// Span between an instance's first submission and last completion.
    pub fn makespan(&self, instance: &str) -> Option<u64> {
        self.instance_spans
            .get(instance)
            .map(|(first, last)| last - first)
    }
}

#[derive(Debug)]
struct ScheduledJob {
    job_id: u64,
    completes_at: TimeMs,
    submitted_at: TimeMs,
    job: QpuJob,
}

#[derive(Debug)]
struct OpenSession {
    session_id: u64,
    holder_instance: String,
    grant_at: TimeMs,
}

/// The device. Single-owner: the runtime serializes all calls and drains
/// completions through [`Qpu::pop_due`].
#[derive(Debug)]
pub struct Qpu {
    latency: LatencyModel,
    scheduled: Vec<ScheduledJob>,
    /// Shared jobs that arrived while a session was open; they re-enter the
    /// queue when the session closes.
    deferred: Vec<(TimeMs, QpuJob)>,
    session: Option<OpenSession>,
    /// Completion time of the last job in the open session, so session jobs
    /// run back-to-back.
    session_tail: TimeMs,
    next_job_id: u64,
    next_session_id: u64,
    offline: bool,
    stats: QpuStats,
}

impl Qpu {
    pub fn new(latency: LatencyModel) -> Self {
        Qpu {
            latency,
            scheduled: Vec::new(),
            deferred: Vec::new(),
            session: None,
            session_tail: 0,
            next_job_id: 1,
            next_session_id: 1,
            offline: false,
            stats: QpuStats::default(),
        }
    }

    pub fn latency(&self) -> &LatencyModel {
        &self.latency
    }

    /// Injectable fault: while offline every submission errors.
    pub fn set_offline(&mut self, offline: bool) {
        self.offline = offline;
    }

    /// Submit a job at time `now`; its completion is delivered later via
    /// [`Qpu::pop_due`].
    pub fn submit(&mut self, job: QpuJob, now: TimeMs) -> Result<u64, QpuError> {
        if self.offline {
            return Err(QpuError::Offline);
        }
        let job_id = self.next_job_id;
        self.next_job_id += 1;
        let exec = self.latency.exec_ms(job.shots);

        match (&self.session, job.session) {
            (Some(open), Some(requested)) => {
                if open.session_id != requested {
                    return Err(QpuError::StaleSession(requested));
                }
                // back-to-back execution after the grant point
                let start = now.max(open.grant_at).max(self.session_tail);
                let completes_at = start + exec;
                self.session_tail = completes_at;
                self.scheduled.push(ScheduledJob {
                    job_id,
                    completes_at,
                    submitted_at: now,
                    job,
                });
            }
            (None, Some(requested)) => return Err(QpuError::StaleSession(requested)),
            (Some(_), None) => {
                // shared job during a reservation: wait for the close
                self.deferred.push((now, job));
            }
            (None, None) => {
                let completes_at = now + self.latency.queue_wait_ms + exec;
                self.scheduled.push(ScheduledJob {
                    job_id,
                    completes_at,
                    submitted_at: now,
                    job,
                });
            }
        }
        Ok(job_id)
    }

    /// Reserve exclusive access. Acquisition pays one queue wait and also
    /// drains whatever shared work is already in flight, so the grant time is
    /// the later of the two.
    pub fn open_session(
        &mut self,
        holder_instance: &str,
        now: TimeMs,
    ) -> Result<QpuSession, QpuError> {
        if self.offline {
            return Err(QpuError::Offline);
        }
        if self.session.is_some() {
            self.stats.sessions_denied += 1;
            return Err(QpuError::Denied);
        }
        let drain = self
            .scheduled
            .iter()
            .map(|s| s.completes_at)
            .max()
            .unwrap_or(0);
        let grant_at = (now + self.latency.queue_wait_ms).max(drain);
        let session_id = self.next_session_id;
        self.next_session_id += 1;
        self.session = Some(OpenSession {
            session_id,
            holder_instance: holder_instance.to_string(),
            grant_at,
        });
        self.session_tail = grant_at;
        self.stats.sessions_opened += 1;
        Ok(QpuSession {
            session_id,
            holder_instance: holder_instance.to_string(),
            opened_at: grant_at,
            closed_at: None,
        })
    }

    /// Release the reservation and let deferred shared jobs re-enter the
    /// queue: each completes one queue wait after the close (or after its own
    /// submission, whichever is later) plus its execution time.
    pub fn close_session(&mut self, session_id: u64, now: TimeMs) -> Result<(), QpuError> {
        match &self.session {
            Some(open) if open.session_id == session_id => {}
            _ => return Err(QpuError::StaleSession(session_id)),
        }
        let close_at = now.max(self.session.as_ref().unwrap().grant_at);
        self.session = None;
        for (submitted_at, job) in std::mem::take(&mut self.deferred) {
            let exec = self.latency.exec_ms(job.shots);
            let completes_at = (submitted_at + self.latency.queue_wait_ms).max(close_at) + exec;
            let job_id = self.next_job_id;
            self.next_job_id += 1;
            self.scheduled.push(ScheduledJob {
                job_id,
                completes_at,
                submitted_at,
                job,
            });
        }
        Ok(())
    }

    pub fn open_session_id(&self) -> Option<u64> {
        self.session.as_ref().map(|s| s.session_id)
    }

    /// Instance holding the open reservation, if any.
    pub fn session_holder(&self) -> Option<&str> {
        self.session.as_ref().map(|s| s.holder_instance.as_str())
    }

    /// Earliest pending completion, used by the runtime pump to advance the
    /// simulated clock (or pick a wall deadline).
    pub fn next_event_at(&self) -> Option<TimeMs> {
        self.scheduled.iter().map(|s| s.completes_at).min()
    }

    /// Deliver every completion due at or before `now`, ordered by timestamp
    /// with ties broken by job id.
    pub fn pop_due(&mut self, now: TimeMs) -> Vec<QpuCompletion> {
        let mut due: Vec<ScheduledJob> = Vec::new();
        let mut remaining = Vec::new();
        for job in self.scheduled.drain(..) {
            if job.completes_at <= now {
                due.push(job);
            } else {
                remaining.push(job);
            }
        }
        self.scheduled = remaining;
        due.sort_by_key(|s| (s.completes_at, s.job_id));

        due.into_iter()
            .map(|s| {
                let wait = s.completes_at - s.submitted_at - self.latency.exec_ms(s.job.shots);
                let instance = s.job.key.instance_id.clone();
                self.stats
                    .job_waits
                    .push((s.job_id, instance.clone(), wait));
                let span = self
                    .stats
                    .instance_spans
                    .entry(instance)
                    .or_insert((s.submitted_at, s.completes_at));
                span.0 = span.0.min(s.submitted_at);
                span.1 = span.1.max(s.completes_at);
                QpuCompletion {
                    job_id: s.job_id,
                    key: s.job.key.clone(),
                    at: s.completes_at,
                    result: pseudo_measurement(self.latency.seed, &s.job.payload, s.job.shots),
                }
            })
            .collect()
    }

    /// Advance the simulated clock to `t` and deliver every completion due by
    /// then, in timestamp order. Only meaningful under the simulated clock;
    /// wall-clock time cannot be steered, so the call is rejected there.
    pub fn run_until(
        &mut self,
        clock: &mut Clock,
        t: TimeMs,
    ) -> Result<Vec<QpuCompletion>, QpuError> {
        if clock.mode() != ClockMode::Simulated {
            return Err(QpuError::WallClock);
        }
        clock.advance_to(t);
        Ok(self.pop_due(clock.now_ms()))
    }

    pub fn stats(&self) -> &QpuStats {
        &self.stats
    }
}

/// Deterministic synthetic measurement: a SHA-256 digest of (seed, payload,
/// shots) expands into a two-outcome histogram and a value in [-1, 1]. No
/// statevector simulation — payloads are opaque to the whole runtime.
pub fn pseudo_measurement(seed: u64, payload: &serde_json::Value, shots: u64) -> serde_json::Value {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(payload.to_string().as_bytes());
    hasher.update(shots.to_le_bytes());
    let digest = hasher.finalize();
    let word = u64::from_le_bytes(digest[0..8].try_into().expect("digest is 32 bytes"));

    let zeros = if shots == 0 { 0 } else { word % (shots + 1) };
    let ones = shots - zeros;
    // map the digest word onto [-1, 1] for use as a synthetic expectation value
    let value = (word as f64 / u64::MAX as f64) * 2.0 - 1.0;
    serde_json::json!({
        "counts": {"0": zeros, "1": ones},
        "shots": shots,
        "value": value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(instance: &str, n: u64) -> CorrelationKey {
        CorrelationKey {
            instance_id: instance.to_string(),
            activity_id: "q".to_string(),
            token: format!("{instance}-q-{n}"),
        }
    }

    fn job(instance: &str, n: u64, session: Option<u64>) -> QpuJob {
        QpuJob {
            payload: serde_json::json!({"circuit": "test", "n": n}),
            shots: 0,
            key: key(instance, n),
            session,
        }
    }

    fn latency(w: u64, exec: u64) -> LatencyModel {
        LatencyModel {
            queue_wait_ms: w,
            exec_base_ms: exec,
            per_shot_us: 0,
            seed: 7,
        }
    }

    #[test]
    fn shared_job_pays_queue_wait_plus_exec() {
        // W=500, exec=100, submitted at t=0 → completes at 600
        let mut qpu = Qpu::new(latency(500, 100));
        qpu.submit(job("i-1", 1, None), 0).unwrap();
        assert_eq!(qpu.next_event_at(), Some(600));
        let done = qpu.pop_due(600);
        assert_eq!(done.len(), 1);
        assert_eq!(done[0].at, 600);
    }

    #[test]
    fn session_job_skips_the_queue_wait() {
        let mut qpu = Qpu::new(latency(500, 100));
        let session = qpu.open_session("i-1", 0).unwrap();
        assert_eq!(session.opened_at, 500);
        qpu.submit(job("i-1", 1, Some(session.session_id)), 0).unwrap();
        // grant at 500, then exec only → 600; the next runs back-to-back
        assert_eq!(qpu.next_event_at(), Some(600));
        qpu.pop_due(600);
        qpu.submit(job("i-1", 2, Some(session.session_id)), 600).unwrap();
        assert_eq!(qpu.next_event_at(), Some(700));
    }

    #[test]
    fn job_citing_closed_session_is_stale() {
        let mut qpu = Qpu::new(latency(500, 100));
        let session = qpu.open_session("i-1", 0).unwrap();
        qpu.close_session(session.session_id, 500).unwrap();
        let err = qpu.submit(job("i-1", 1, Some(session.session_id)), 500).unwrap_err();
        assert_eq!(err, QpuError::StaleSession(session.session_id));
    }

    #[test]
    fn second_open_is_denied_until_close() {
        let mut qpu = Qpu::new(latency(500, 100));
        let first = qpu.open_session("i-1", 0).unwrap();
        assert_eq!(qpu.open_session("i-2", 10).unwrap_err(), QpuError::Denied);
        qpu.close_session(first.session_id, 700).unwrap();
        qpu.open_session("i-2", 700).unwrap();
        assert_eq!(qpu.stats().sessions_denied, 1);
        assert_eq!(qpu.stats().sessions_opened, 2);
    }

    #[test]
    fn no_shared_completion_lands_inside_a_session_window() {
        let mut qpu = Qpu::new(latency(500, 100));
        // shared job in flight when the session opens: grant waits for it
        qpu.submit(job("i-0", 1, None), 0).unwrap();
        let session = qpu.open_session("i-1", 50).unwrap();
        assert_eq!(session.opened_at, 600, "grant drains in-flight shared work");
        // shared job submitted during the session is deferred past the close
        qpu.submit(job("i-2", 1, None), 100).unwrap();
        qpu.submit(job("i-1", 2, Some(session.session_id)), 600).unwrap();
        qpu.close_session(session.session_id, 700).unwrap();

        let mut completions = Vec::new();
        while let Some(t) = qpu.next_event_at() {
            completions.extend(qpu.pop_due(t));
        }
        let shared_late: Vec<_> = completions
            .iter()
            .filter(|c| c.key.instance_id == "i-2")
            .collect();
        assert_eq!(shared_late.len(), 1);
        assert!(
            shared_late[0].at >= 700 + 100,
            "deferred shared job must complete after the close, got {}",
            shared_late[0].at
        );
    }

    #[test]
    fn offline_fault_rejects_submissions() {
        let mut qpu = Qpu::new(latency(500, 100));
        qpu.set_offline(true);
        assert_eq!(qpu.submit(job("i-1", 1, None), 0).unwrap_err(), QpuError::Offline);
        qpu.set_offline(false);
        qpu.submit(job("i-1", 1, None), 0).unwrap();
    }

    #[test]
    fn empty_event_set_delivers_nothing() {
        let mut qpu = Qpu::new(latency(500, 100));
        assert_eq!(qpu.next_event_at(), None);
        assert!(qpu.pop_due(10_000).is_empty());
    }

    #[test]
    fn identical_submissions_yield_identical_results() {
        let payload = serde_json::json!({"circuit": "vqe", "theta": [0.1, 0.2]});
        let a = pseudo_measurement(42, &payload, 1024);
        let b = pseudo_measurement(42, &payload, 1024);
        assert_eq!(a, b);
        // seed and shots both enter the digest
        assert_ne!(a, pseudo_measurement(43, &payload, 1024));
        assert_ne!(a, pseudo_measurement(42, &payload, 512));
    }

    #[test]
    fn histogram_counts_sum_to_shots() {
        let payload = serde_json::json!({"circuit": "qaoa"});
        for shots in [0u64, 1, 13, 1024] {
            let result = pseudo_measurement(9, &payload, shots);
            let zeros = result["counts"]["0"].as_u64().unwrap();
            let ones = result["counts"]["1"].as_u64().unwrap();
            assert_eq!(zeros + ones, shots);
        }
    }

    #[test]
    fn per_shot_latency_scales_execution() {
        // 2000 shots at 500 us/shot adds one second
        let model = LatencyModel {
            queue_wait_ms: 0,
            exec_base_ms: 100,
            per_shot_us: 500,
            seed: 0,
        };
        let mut qpu = Qpu::new(model);
        let mut j = job("i-1", 1, None);
        j.shots = 2000;
        qpu.submit(j, 0).unwrap();
        assert_eq!(qpu.next_event_at(), Some(1100));
    }

    #[test]
    fn ties_break_by_job_id() {
        let mut qpu = Qpu::new(latency(0, 100));
        qpu.submit(job("i-1", 1, None), 0).unwrap();
        qpu.submit(job("i-2", 1, None), 0).unwrap();
        let done = qpu.pop_due(100);
        assert_eq!(done.len(), 2);
        assert!(done[0].job_id < done[1].job_id);
    }

    #[test]
    fn run_until_advances_clock_and_delivers() {
        let mut clock = Clock::new(ClockMode::Simulated);
        let mut qpu = Qpu::new(latency(50, 100));
        qpu.submit(job("i-1", 1, None), clock.now_ms()).unwrap();
        qpu.submit(job("i-1", 2, None), clock.now_ms()).unwrap();

        // completes at 150; asking for 149 yields nothing
        let early = qpu.run_until(&mut clock, 149).unwrap();
        assert!(early.is_empty());
        assert_eq!(clock.now_ms(), 149);

        let due = qpu.run_until(&mut clock, 150).unwrap();
        assert_eq!(due.len(), 2);
        assert!(due[0].at <= due[1].at);
        assert_eq!(clock.now_ms(), 150);
    }

    #[test]
    fn run_until_rejected_on_wall_clock() {
        let mut clock = Clock::new(ClockMode::Wall);
        let mut qpu = Qpu::new(latency(50, 100));
        let err = qpu.run_until(&mut clock, 1000).unwrap_err();
        assert_eq!(err, QpuError::WallClock);
    }
}
