//! One replication of a cloned PS cluster.
//!
//! Requests arrive as a Poisson stream, are cloned onto servers by the
//! [`Strategy`], and complete when their first clone does. The remaining
//! clones are cancelled, immediately in synchronized mode or after a drawn
//! cancellation delay otherwise.
//!
//! Random draws come from separate per-component streams (`arrivals`,
//! `dispatch`, `service`, `arrival-delay`, `cancel-delay`) so runs that share
//! a seed also share arrival times and service requirements.

use serde::{Deserialize, Serialize};

use crate::dispatch::{choose_targets, CancelScope, DelayConfig, Strategy};
use crate::dist::Distribution;
use crate::error::{Error, Result};
use crate::kernel::{EventQueue, SimTime};
use crate::ps::{CloneId, ServerState, WorkAudit};
use crate::rng::{derive_stream, RngStream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerSpec {
    #[serde(default = "default_capacity")]
    pub capacity: f64,
    pub service: Distribution,
}

fn default_capacity() -> f64 {
    1.0
}

impl ServerSpec {
    pub fn new(capacity: f64, service: Distribution) -> Self {
        ServerSpec { capacity, service }
    }
}

/// How per-clone service requirements relate to each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WorkCorrelation {
    #[default]
    Independent,
    /// One draw from the first target's law, shared by every clone.
    Identical,
}

/// What to do with drawn delays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DelayHandling {
    /// Clones join late and are cancelled late.
    #[default]
    Apply,
    /// Clones join and are cancelled synchronously, but each one carries
    /// `capacity · (a + c)` extra work. This gives the pessimistic
    /// upper-bound system used for delay sweeps.
    InflateWork,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub servers: Vec<ServerSpec>,
    /// Total arrival rate into the cluster (1/s).
    pub arrival_rate: f64,
    pub strategy: Strategy,
    pub delays: DelayConfig,
    pub requests: usize,
    pub work: WorkCorrelation,
    pub delay_handling: DelayHandling,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.strategy
            .validate(self.servers.len())
            .map_err(Error::Scenario)?;
        for s in &self.servers {
            if !(s.capacity.is_finite() && s.capacity > 0.0) {
                return Err(Error::Scenario(format!("capacity {} must be positive", s.capacity)));
            }
            s.service.validate()?;
        }
        if let Some(a) = &self.delays.arrival {
            a.validate()?;
        }
        if let Some(c) = &self.delays.cancellation {
            c.validate()?;
        }
        if !(self.arrival_rate.is_finite() && self.arrival_rate > 0.0) {
            return Err(Error::Scenario(format!(
                "arrival rate {} must be positive",
                self.arrival_rate
            )));
        }
        if self.requests == 0 {
            return Err(Error::Scenario("requests must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct SimOptions {
    /// Keep per-request targets and service requirements.
    pub record_requests: bool,
    /// Keep the full delivered-event trace.
    pub trace: bool,
    /// Count instants where servers in one group hold different request sets.
    pub check_group_sync: bool,
    /// Mutation-testing hook: multiplies every server's drain rate.
    #[doc(hidden)]
    pub fault_drain_scale: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    ExternalArrival,
    CloneJoin,
    /// A delayed join that was dropped because its request already finished.
    CloneSuppressed,
    CloneCompletion,
    CloneCancel,
    EndOfRun,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub time: f64,
    pub kind: EventKind,
    pub request: u64,
    pub clone: u32,
    pub server: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RequestRecord {
    pub arrival: f64,
    pub response: f64,
    pub targets: Vec<usize>,
    pub works: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    /// Response time of every request, indexed by request id (arrival order).
    pub responses: Vec<f64>,
    pub records: Option<Vec<RequestRecord>>,
    pub trace: Option<Vec<TraceEntry>>,
    pub audits: Vec<WorkAudit>,
    /// Clones still resident after the drain; always zero unless there is a bug.
    pub leaked: usize,
    pub group_sync_violations: usize,
    pub events: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Ev {
    Arrival,
    Join { request: u64, index: u32 },
    Completion { server: usize, clone: CloneId },
    Cancel { request: u64, index: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CloneState {
    Scheduled,
    Resident,
    Gone,
}

struct RequestState {
    arrival: f64,
    targets: Vec<usize>,
    works: Vec<f64>,
    cancel_delays: Vec<f64>,
    clones: Vec<CloneState>,
    done: bool,
}

struct Streams {
    arrivals: RngStream,
    dispatch: RngStream,
    service: RngStream,
    arrival_delay: RngStream,
    cancel_delay: RngStream,
}

impl Streams {
    fn new(seed: u64, replication: u64) -> Self {
        Streams {
            arrivals: derive_stream(seed, replication, "arrivals"),
            dispatch: derive_stream(seed, replication, "dispatch"),
            service: derive_stream(seed, replication, "service"),
            arrival_delay: derive_stream(seed, replication, "arrival-delay"),
            cancel_delay: derive_stream(seed, replication, "cancel-delay"),
        }
    }
}

fn completion_event(server: usize, clone: CloneId) -> Ev {
    Ev::Completion { server, clone }
}

fn time(v: f64) -> SimTime {
    SimTime::new(v).expect("event times are finite")
}

struct Engine<'a> {
    cfg: &'a SimConfig,
    opts: &'a SimOptions,
    queue: EventQueue<Ev>,
    servers: Vec<ServerState>,
    groups: Option<Vec<Vec<usize>>>,
    requests: Vec<RequestState>,
    responses: Vec<f64>,
    streams: Streams,
    trace: Vec<TraceEntry>,
    arrived: usize,
    violations: usize,
    events: u64,
}

impl<'a> Engine<'a> {
    fn log(&mut self, t: SimTime, kind: EventKind, request: u64, clone: u32, server: usize) {
        if self.opts.trace {
            self.trace.push(TraceEntry {
                time: t.seconds(),
                kind,
                request,
                clone,
                server,
            });
        }
    }

    fn schedule_next_arrival(&mut self) -> Result<()> {
        if self.arrived < self.cfg.requests {
            let gap = -self.streams.arrivals.open_uniform().ln() / self.cfg.arrival_rate;
            let at = time(self.queue.now().seconds() + gap);
            self.queue.schedule(at, Ev::Arrival)?;
        }
        Ok(())
    }

    fn on_arrival(&mut self, t: SimTime) -> Result<()> {
        let id = self.requests.len() as u64;
        self.arrived += 1;
        let lens: Vec<usize> = self.servers.iter().map(ServerState::queue_len).collect();
        let targets = choose_targets(&self.cfg.strategy, &lens, &mut self.streams.dispatch);
        let k = targets.len();

        let mut works: Vec<f64> = match self.cfg.work {
            WorkCorrelation::Independent => targets
                .iter()
                .map(|&s| self.cfg.servers[s].service.sample(&mut self.streams.service))
                .collect(),
            WorkCorrelation::Identical => {
                let w = self.cfg.servers[targets[0]].service.sample(&mut self.streams.service);
                vec![w; k]
            }
        };
        let arrival_delays: Vec<f64> = match &self.cfg.delays.arrival {
            Some(law) => (0..k).map(|_| law.sample(&mut self.streams.arrival_delay)).collect(),
            None => vec![0.0; k],
        };
        let cancel_delays: Vec<f64> = match (&self.cfg.delays.cancellation, self.cfg.delays.cancel_scope) {
            (Some(law), CancelScope::PerClone) => {
                (0..k).map(|_| law.sample(&mut self.streams.cancel_delay)).collect()
            }
            (Some(law), CancelScope::PerRequest) => vec![law.sample(&mut self.streams.cancel_delay); k],
            (None, _) => vec![0.0; k],
        };

        let (join_offsets, cancel_delays) = match self.cfg.delay_handling {
            DelayHandling::Apply => (arrival_delays, cancel_delays),
            DelayHandling::InflateWork => {
                for j in 0..k {
                    let cap = self.cfg.servers[targets[j]].capacity;
                    works[j] += cap * (arrival_delays[j] + cancel_delays[j]);
                }
                (vec![0.0; k], vec![0.0; k])
            }
        };

        self.log(t, EventKind::ExternalArrival, id, 0, targets[0]);
        for (j, offset) in join_offsets.iter().enumerate() {
            self.queue.schedule(
                time(t.seconds() + offset),
                Ev::Join {
                    request: id,
                    index: j as u32,
                },
            )?;
        }
        self.requests.push(RequestState {
            arrival: t.seconds(),
            targets,
            works,
            cancel_delays,
            clones: vec![CloneState::Scheduled; k],
            done: false,
        });
        self.responses.push(f64::NAN);
        self.schedule_next_arrival()
    }

    fn on_join(&mut self, t: SimTime, request: u64, index: u32) -> Result<()> {
        let req = &mut self.requests[request as usize];
        let server = req.targets[index as usize];
        if req.done {
            req.clones[index as usize] = CloneState::Gone;
            self.log(t, EventKind::CloneSuppressed, request, index, server);
            return Ok(());
        }
        req.clones[index as usize] = CloneState::Resident;
        let work = req.works[index as usize];
        self.servers[server].admit(CloneId::new(request, index), work, t, &mut self.queue, completion_event)?;
        self.log(t, EventKind::CloneJoin, request, index, server);
        Ok(())
    }

    fn on_completion(&mut self, t: SimTime, server: usize, clone: CloneId) -> Result<()> {
        let left = self.servers[server].remove(clone, t, &mut self.queue, completion_event)?;
        debug_assert!(left.abs() <= 1e-6 * (1.0 + t.seconds()), "completed with {left} left");
        self.log(t, EventKind::CloneCompletion, clone.request, clone.index, server);

        let req = &mut self.requests[clone.request as usize];
        req.clones[clone.index as usize] = CloneState::Gone;
        if req.done {
            // A loser that finished before its cancellation arrived.
            return Ok(());
        }
        req.done = true;
        self.responses[clone.request as usize] = t.seconds() - req.arrival;

        let mut cancels = Vec::new();
        for (j, state) in req.clones.iter().enumerate() {
            if *state == CloneState::Resident {
                cancels.push((j as u32, req.cancel_delays[j]));
            }
        }
        for (index, delay) in cancels {
            self.queue.schedule(
                time(t.seconds() + delay),
                Ev::Cancel {
                    request: clone.request,
                    index,
                },
            )?;
        }
        Ok(())
    }

    fn on_cancel(&mut self, t: SimTime, request: u64, index: u32) -> Result<()> {
        let req = &mut self.requests[request as usize];
        if req.clones[index as usize] != CloneState::Resident {
            return Ok(());
        }
        req.clones[index as usize] = CloneState::Gone;
        let server = req.targets[index as usize];
        self.servers[server].remove(CloneId::new(request, index), t, &mut self.queue, completion_event)?;
        self.log(t, EventKind::CloneCancel, request, index, server);
        Ok(())
    }

    fn groups_in_sync(&self) -> bool {
        let Some(groups) = &self.groups else {
            return true;
        };
        for group in groups {
            let sets: Vec<Vec<u64>> = group
                .iter()
                .map(|&s| {
                    let mut ids: Vec<u64> = self.servers[s].residents().map(|(c, _)| c.request).collect();
                    ids.dedup();
                    ids
                })
                .collect();
            if sets.windows(2).any(|w| w[0] != w[1]) {
                return false;
            }
        }
        true
    }

    fn run(mut self) -> Result<SimOutput> {
        self.schedule_next_arrival()?;
        while let Some(event) = self.queue.next() {
            self.events += 1;
            let t = event.time;
            match event.payload {
                Ev::Arrival => self.on_arrival(t)?,
                Ev::Join { request, index } => self.on_join(t, request, index)?,
                Ev::Completion { server, clone } => self.on_completion(t, server, clone)?,
                Ev::Cancel { request, index } => self.on_cancel(t, request, index)?,
            }
            if self.opts.check_group_sync && self.queue.peek_time().is_none_or(|next| next > t) && !self.groups_in_sync() {
                self.violations += 1;
            }
        }
        let end = self.queue.now();
        self.log(end, EventKind::EndOfRun, 0, 0, 0);
        let leaked = self.servers.iter().map(ServerState::queue_len).sum();
        let records = self.opts.record_requests.then(|| {
            self.requests
                .iter()
                .zip(&self.responses)
                .map(|(r, &resp)| RequestRecord {
                    arrival: r.arrival,
                    response: resp,
                    targets: r.targets.clone(),
                    works: r.works.clone(),
                })
                .collect()
        });
        Ok(SimOutput {
            responses: self.responses,
            records,
            trace: self.opts.trace.then_some(self.trace),
            audits: self.servers.iter().map(ServerState::audit).collect(),
            leaked,
            group_sync_violations: self.violations,
            events: self.events,
        })
    }
}

/// Runs one replication until every request has completed and every clone
/// has left its server.
pub fn simulate(cfg: &SimConfig, seed: u64, replication: u64, opts: &SimOptions) -> Result<SimOutput> {
    cfg.validate()?;
    let servers = cfg
        .servers
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let server = ServerState::new(i, s.capacity);
            match opts.fault_drain_scale {
                Some(f) => server.with_fault_drain_scale(f),
                None => server,
            }
        })
        .collect();
    let groups = if opts.check_group_sync && cfg.delays.is_synchronized() {
        cfg.strategy.groups(cfg.servers.len())
    } else {
        None
    };
    let engine = Engine {
        cfg,
        opts,
        queue: EventQueue::new(),
        servers,
        groups,
        requests: Vec::with_capacity(cfg.requests),
        responses: Vec::with_capacity(cfg.requests),
        streams: Streams::new(seed, replication),
        trace: Vec::new(),
        arrived: 0,
        violations: 0,
        events: 0,
    };
    engine.run()
}
