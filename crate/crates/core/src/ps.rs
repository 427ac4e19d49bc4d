//! Processor-sharing server with lazy work accounting.
//!
//! With `n` residents each one drains at `capacity / n`. Remaining work is
//! only brought up to date when membership changes (or on request), and the
//! single provisional completion event is cancelled and rescheduled each time.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::ServerError;
use crate::kernel::{EventHandle, EventQueue, SimTime};

// Lowest remaining work (per second of elapsed virtual time) tolerated after a
// sync before it counts as a bookkeeping bug. Completion events, not the sign
// of the remaining work, decide when a clone is done.
const UNDERSHOOT: f64 = -1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CloneId {
    pub request: u64,
    pub index: u32,
}

impl CloneId {
    pub fn new(request: u64, index: u32) -> Self {
        CloneId { request, index }
    }
}

impl fmt::Display for CloneId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.request, self.index)
    }
}

/// Busy-time bookkeeping used to check work conservation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WorkAudit {
    pub busy_time: f64,
    pub drained: f64,
}

impl WorkAudit {
    /// Relative gap between drained work and `capacity × busy time`.
    pub fn relative_error(&self, capacity: f64) -> f64 {
        let expected = capacity * self.busy_time;
        if expected == 0.0 {
            return self.drained.abs();
        }
        (self.drained - expected).abs() / expected
    }
}

#[derive(Debug, Clone)]
pub struct ServerState {
    id: usize,
    capacity: f64,
    residents: BTreeMap<CloneId, f64>,
    last_update: SimTime,
    pending: Option<EventHandle>,
    // Fault injection for mutation tests; 1.0 in every real run.
    drain_scale: f64,
    audit: WorkAudit,
}

impl ServerState {
    pub fn new(id: usize, capacity: f64) -> Self {
        assert!(capacity.is_finite() && capacity > 0.0, "capacity must be positive");
        ServerState {
            id,
            capacity,
            residents: BTreeMap::new(),
            last_update: SimTime::ZERO,
            pending: None,
            drain_scale: 1.0,
            audit: WorkAudit::default(),
        }
    }

    /// Makes residents drain `factor` times faster than the capacity allows.
    /// Only meant for mutation testing of the verification suite.
    #[doc(hidden)]
    pub fn with_fault_drain_scale(mut self, factor: f64) -> Self {
        self.drain_scale = factor;
        self
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    pub fn queue_len(&self) -> usize {
        self.residents.len()
    }

    pub fn is_idle(&self) -> bool {
        self.residents.is_empty()
    }

    pub fn contains(&self, clone: CloneId) -> bool {
        self.residents.contains_key(&clone)
    }

    pub fn remaining(&self, clone: CloneId) -> Option<f64> {
        self.residents.get(&clone).copied()
    }

    pub fn residents(&self) -> impl Iterator<Item = (CloneId, f64)> + '_ {
        self.residents.iter().map(|(k, v)| (*k, *v))
    }

    pub fn last_update(&self) -> SimTime {
        self.last_update
    }

    pub fn pending_completion(&self) -> Option<EventHandle> {
        self.pending
    }

    pub fn audit(&self) -> WorkAudit {
        self.audit
    }

    fn rate_per_resident(&self) -> f64 {
        self.capacity * self.drain_scale / self.residents.len() as f64
    }

    /// Drains every resident up to time `t`.
    pub fn sync_to(&mut self, t: SimTime) -> Result<(), ServerError> {
        if t < self.last_update {
            return Err(ServerError::TimeRegression {
                last: self.last_update.seconds(),
                to: t.seconds(),
            });
        }
        let dt = t.seconds() - self.last_update.seconds();
        if dt > 0.0 && !self.residents.is_empty() {
            let drain = dt * self.rate_per_resident();
            for remaining in self.residents.values_mut() {
                *remaining -= drain;
                debug_assert!(
                    *remaining >= UNDERSHOOT * (1.0 + t.seconds()),
                    "resident drained to {remaining}"
                );
            }
            self.audit.busy_time += dt;
            self.audit.drained += drain * self.residents.len() as f64;
        }
        self.last_update = t;
        Ok(())
    }

    /// Earliest resident to finish if membership stays as it is now. Ties go
    /// to the smallest clone id.
    pub fn next_completion(&self) -> Option<(SimTime, CloneId)> {
        let rate = self.rate_per_resident();
        let mut best: Option<(f64, CloneId)> = None;
        for (&clone, &remaining) in &self.residents {
            let dt = remaining.max(0.0) / rate;
            if best.is_none_or(|(b, _)| dt < b) {
                best = Some((dt, clone));
            }
        }
        best.map(|(dt, clone)| {
            let at = SimTime::new(self.last_update.seconds() + dt)
                .expect("completion time is finite and nonnegative");
            (at, clone)
        })
    }

    /// Cancels the provisional completion and schedules a fresh one.
    pub fn reschedule<P>(
        &mut self,
        queue: &mut EventQueue<P>,
        payload: impl FnOnce(usize, CloneId) -> P,
    ) -> Option<(SimTime, CloneId)> {
        if let Some(h) = self.pending.take() {
            queue.cancel(h);
        }
        let next = self.next_completion();
        if let Some((at, clone)) = next {
            // `at` can never precede `now`: every resident has nonnegative work.
            let at = at.max(queue.now());
            let handle = queue
                .schedule(at, payload(self.id, clone))
                .expect("completion is never in the past");
            self.pending = Some(handle);
        }
        next
    }

    /// Adds a clone with `work` units of service requirement at time `t`.
    /// Zero work completes immediately at `t`.
    pub fn admit<P>(
        &mut self,
        clone: CloneId,
        work: f64,
        t: SimTime,
        queue: &mut EventQueue<P>,
        payload: impl FnOnce(usize, CloneId) -> P,
    ) -> Result<(), ServerError> {
        if self.residents.contains_key(&clone) {
            return Err(ServerError::DuplicateClone(clone.to_string()));
        }
        debug_assert!(work.is_finite() && work >= 0.0);
        self.sync_to(t)?;
        self.residents.insert(clone, work.max(0.0));
        self.reschedule(queue, payload);
        Ok(())
    }

    /// Takes a clone out (departure or cancellation) at time `t` and returns
    /// the work it still had left.
    pub fn remove<P>(
        &mut self,
        clone: CloneId,
        t: SimTime,
        queue: &mut EventQueue<P>,
        payload: impl FnOnce(usize, CloneId) -> P,
    ) -> Result<f64, ServerError> {
        if !self.residents.contains_key(&clone) {
            return Err(ServerError::NotResident(clone.to_string()));
        }
        self.sync_to(t)?;
        let left = self.residents.remove(&clone).unwrap_or_default();
        self.reschedule(queue, payload);
        Ok(left)
    }
}

/// Drives a single server through `(arrival time, work)` jobs, sorted by
/// arrival, and returns each job's departure time.
pub fn replay(capacity: f64, jobs: &[(f64, f64)], drain_scale: Option<f64>) -> Result<Vec<f64>, crate::error::Error> {
    let mut q: EventQueue<Option<CloneId>> = EventQueue::new();
    for &(at, _) in jobs {
        q.schedule(SimTime::new(at)?, None)?;
    }
    let mut server = ServerState::new(0, capacity);
    if let Some(k) = drain_scale {
        server = server.with_fault_drain_scale(k);
    }
    let mut next = 0;
    let mut departures = vec![f64::NAN; jobs.len()];
    while let Some(e) = q.next() {
        match e.payload {
            None => {
                server.admit(CloneId::new(next as u64, 0), jobs[next].1, e.time, &mut q, |_, c| Some(c))?;
                next += 1;
            }
            Some(clone) => {
                server.remove(clone, e.time, &mut q, |_, c| Some(c))?;
                departures[clone.request as usize] = e.time.seconds();
            }
        }
    }
    Ok(departures)
}
