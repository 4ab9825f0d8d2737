//! Discrete-event simulation of a single bottleneck.
//!
//! Sources feed one FIFO queue (RED or DropTail) drained at the link
//! capacity; delivered packets reach the sink after the propagation delay.
//! UDP sources follow their departure schedule open-loop. TCP sources are
//! window-limited: each acknowledgement (returning `rtt_base` after
//! delivery) grows the window by `1/W`, and the first loss signalled per
//! window halves it. There is no slow start, no timeout and no
//! retransmission.
//!
//! Simultaneous events are ordered by kind (service completion first, then
//! arrivals, acknowledgements, loss signals), then flow, then sequence
//! number, which makes a run a pure function of its inputs and seed.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use rand::Rng;

use crate::fluid::window_per_ack;
use crate::metrics::{FlowLabel, PacketLog, PacketLogEntry};
use crate::red::{ewma_update, red_decide, Decision, DropCause, RedParams, RedState};
use crate::rng::{self, SimRng};
use crate::traffic::{generate_departures, Departure, FlowSpec, Transport};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Discipline {
    DropTail,
    Red(RedParams),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkConfig {
    /// Bottleneck rate in bit/s.
    pub capacity: f64,
    /// One-way propagation delay from the queue to the sink, seconds.
    pub prop_delay: f64,
    /// Queue capacity in packets, including the one in service.
    pub buffer: usize,
    pub discipline: Discipline,
    /// Bytes added to each payload when computing transmission time.
    pub header_bytes: u32,
    /// Delay between delivery and the acknowledgement reaching a TCP source.
    pub rtt_base: f64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            capacity: 10e6,
            prop_delay: 0.0,
            buffer: 40,
            discipline: Discipline::Red(RedParams::default()),
            header_bytes: 0,
            rtt_base: 0.1,
        }
    }
}

impl LinkConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.capacity.is_finite() && self.capacity > 0.0) {
            return Err(Error::InvalidParams(format!(
                "capacity must be positive, got {}",
                self.capacity
            )));
        }
        if !(self.prop_delay.is_finite() && self.prop_delay >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "propagation delay must be >= 0, got {}",
                self.prop_delay
            )));
        }
        if !(self.rtt_base.is_finite() && self.rtt_base >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "rtt_base must be >= 0, got {}",
                self.rtt_base
            )));
        }
        if self.buffer == 0 {
            return Err(Error::InvalidParams(
                "buffer must hold at least 1 packet".into(),
            ));
        }
        if let Discipline::Red(p) = &self.discipline {
            p.validate()?;
        }
        Ok(())
    }

    /// Seconds needed to serialise a payload of `size` bytes.
    pub fn transmission_time(&self, size: u32) -> f64 {
        (size as f64 + self.header_bytes as f64) * 8.0 / self.capacity
    }

    fn ewma_weight(&self) -> f64 {
        match &self.discipline {
            Discipline::Red(p) => p.w_q,
            Discipline::DropTail => RedParams::default().w_q,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Packet {
    /// 1-based flow number.
    pub flow: u32,
    pub seq: u64,
    pub size: u32,
    pub t_send: f64,
    pub t_recv: Option<f64>,
    pub drop_cause: Option<DropCause>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TcpSourceState {
    pub window: f64,
    pub rtt_base: f64,
    pub in_flight: u32,
    pub next_seq: u64,
    /// Losses of packets below this sequence number belong to a window that
    /// was already halved.
    pub recovery_seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueueSample {
    pub t: f64,
    pub q: f64,
    pub q_hat: f64,
}

/// Queue occupancy and EWMA recorded at every enqueue, dequeue and drop.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QueueTrace {
    pub samples: Vec<QueueSample>,
    /// End of the observation window.
    pub t_end: f64,
}

impl QueueTrace {
    /// Trace of a link that never sees traffic.
    pub fn idle(t_end: f64) -> Self {
        Self {
            samples: vec![QueueSample {
                t: 0.0,
                q: 0.0,
                q_hat: 0.0,
            }],
            t_end,
        }
    }
}

/// Piecewise-constant resampling of a queue trace onto `k·sample_dt`,
/// `k = 0..=floor(t_end/sample_dt)`. Each grid point takes the last sample
/// at or before it.
pub fn queue_timeseries(trace: &QueueTrace, sample_dt: f64) -> Result<Vec<QueueSample>> {
    if !(sample_dt.is_finite() && sample_dt > 0.0) {
        return Err(Error::InvalidParams(format!(
            "sample interval must be positive, got {sample_dt}"
        )));
    }
    let Some(last) = trace.samples.last() else {
        return Err(Error::EmptyTrace);
    };
    let horizon = if trace.t_end > 0.0 {
        trace.t_end
    } else {
        last.t
    };
    let n = (horizon / sample_dt * (1.0 + 1e-12)).floor() as usize;
    let mut out = Vec::with_capacity(n + 1);
    let mut idx = 0;
    let mut current = QueueSample {
        t: 0.0,
        q: 0.0,
        q_hat: 0.0,
    };
    for k in 0..=n {
        let t = k as f64 * sample_dt;
        while idx < trace.samples.len() && trace.samples[idx].t <= t {
            current = trace.samples[idx];
            idx += 1;
        }
        out.push(QueueSample {
            t,
            q: current.q,
            q_hat: current.q_hat,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FlowStats {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub in_system: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    /// Every packet sent, ordered by (flow, seq).
    pub packets: Vec<Packet>,
    pub trace: QueueTrace,
    pub labels: Vec<FlowLabel>,
    pub t_end: f64,
}

impl SimResult {
    pub fn packet_log(&self) -> PacketLog {
        PacketLog {
            comments: Vec::new(),
            labels: self
                .labels
                .iter()
                .enumerate()
                .map(|(i, l)| (i as u32 + 1, l.clone()))
                .collect(),
            entries: self
                .packets
                .iter()
                .map(|p| PacketLogEntry {
                    flow: p.flow,
                    seq: p.seq,
                    size: p.size,
                    t_send: p.t_send,
                    t_recv: p.t_recv,
                })
                .collect(),
        }
    }

    /// Packet accounting at time `t`: delivered means received by `t`.
    pub fn stats_at(&self, flow: Option<u32>, t: f64) -> FlowStats {
        let mut s = FlowStats::default();
        for p in self
            .packets
            .iter()
            .filter(|p| flow.is_none_or(|f| p.flow == f))
        {
            if p.t_send > t {
                continue;
            }
            s.sent += 1;
            match (p.t_recv, p.drop_cause) {
                (_, Some(_)) => s.dropped += 1,
                (Some(r), None) if r <= t => s.delivered += 1,
                _ => s.in_system += 1,
            }
        }
        s
    }

    pub fn loss_fraction(&self) -> f64 {
        let dropped = self
            .packets
            .iter()
            .filter(|p| p.drop_cause.is_some())
            .count();
        dropped as f64 / self.packets.len().max(1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EventKind {
    Departure = 0,
    Send = 1,
    Ack = 2,
    Loss = 3,
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    kind: EventKind,
    flow: u32,
    seq: u64,
    order: u64,
}

impl Event {
    fn key(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.kind.cmp(&other.kind))
            .then(self.flow.cmp(&other.flow))
            .then(self.seq.cmp(&other.seq))
            .then(self.order.cmp(&other.order))
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.key(other) == Ordering::Equal
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    // Reversed: BinaryHeap is a max-heap.
    fn cmp(&self, other: &Self) -> Ordering {
        other.key(self)
    }
}

struct Source {
    transport: Transport,
    schedule: Vec<Departure>,
    next: usize,
    tcp: TcpSourceState,
    wake_pending: bool,
}

struct Simulator<'a> {
    link: &'a LinkConfig,
    t_end: f64,
    events: BinaryHeap<Event>,
    order: u64,
    sources: Vec<Source>,
    packets: Vec<Packet>,
    /// Packet indices per flow, by sequence number.
    index: Vec<Vec<usize>>,
    queue: VecDeque<usize>,
    red: RedState,
    red_rng: SimRng,
    trace: Vec<QueueSample>,
}

impl Simulator<'_> {
    fn push(&mut self, time: f64, kind: EventKind, flow: u32, seq: u64) {
        self.order += 1;
        self.events.push(Event {
            time,
            kind,
            flow,
            seq,
            order: self.order,
        });
    }

    fn record(&mut self, t: f64) {
        self.trace.push(QueueSample {
            t,
            q: self.queue.len() as f64,
            q_hat: self.red.avg_queue,
        });
    }

    fn schedule_wake(&mut self, f: usize) {
        let src = &self.sources[f];
        if src.wake_pending {
            return;
        }
        if let Some(dep) = src.schedule.get(src.next) {
            if dep.time < self.t_end {
                let time = dep.time;
                self.sources[f].wake_pending = true;
                self.push(time, EventKind::Send, f as u32 + 1, 0);
            }
        }
    }

    /// Emits whatever the source is allowed to send at `now`.
    fn pump(&mut self, f: usize, now: f64) {
        loop {
            let src = &self.sources[f];
            let Some(dep) = src.schedule.get(src.next).copied() else {
                return;
            };
            if now >= self.t_end {
                return;
            }
            if src.transport == Transport::Tcp && src.tcp.in_flight as f64 >= src.tcp.window.ceil()
            {
                return;
            }
            if dep.time > now {
                self.schedule_wake(f);
                return;
            }
            let src = &mut self.sources[f];
            src.next += 1;
            let seq = if src.transport == Transport::Tcp {
                src.tcp.in_flight += 1;
                src.tcp.next_seq += 1;
                src.tcp.next_seq - 1
            } else {
                (src.next - 1) as u64
            };
            self.arrive(f, seq, dep.size, now);
            if self.sources[f].transport == Transport::Udp {
                self.schedule_wake(f);
                return;
            }
        }
    }

    fn arrive(&mut self, f: usize, seq: u64, size: u32, now: f64) {
        let id = self.packets.len();
        self.packets.push(Packet {
            flow: f as u32 + 1,
            seq,
            size,
            t_send: now,
            t_recv: None,
            drop_cause: None,
        });
        self.index[f].push(id);

        self.red.occupancy = self.queue.len();
        self.red.avg_queue = ewma_update(
            self.red.avg_queue,
            self.red.occupancy as f64,
            self.link.ewma_weight(),
        )
        .expect("queue lengths are non-negative");

        let decision = match &self.link.discipline {
            Discipline::Red(params) => {
                let u: f64 = self.red_rng.random();
                let (d, next) = red_decide(&self.red, params, self.link.buffer, u);
                self.red = next;
                d
            }
            Discipline::DropTail => {
                if self.queue.len() >= self.link.buffer {
                    Decision::Drop(DropCause::Forced)
                } else {
                    Decision::Enqueue
                }
            }
        };

        match decision {
            Decision::Enqueue => {
                self.queue.push_back(id);
                self.red.occupancy = self.queue.len();
                if self.queue.len() == 1 {
                    let done = now + self.link.transmission_time(size);
                    self.push(done, EventKind::Departure, f as u32 + 1, seq);
                }
            }
            Decision::Drop(cause) => {
                self.packets[id].drop_cause = Some(cause);
                if self.sources[f].transport == Transport::Tcp {
                    let t = now + self.link.prop_delay + self.link.rtt_base;
                    self.push(t, EventKind::Loss, f as u32 + 1, seq);
                }
            }
        }
        self.record(now);
    }

    fn depart(&mut self, now: f64) {
        let id = self
            .queue
            .pop_front()
            .expect("departure from an empty queue");
        let recv = now + self.link.prop_delay;
        self.packets[id].t_recv = Some(recv);
        let Packet { flow, seq, .. } = self.packets[id];
        if self.sources[flow as usize - 1].transport == Transport::Tcp {
            self.push(recv + self.link.rtt_base, EventKind::Ack, flow, seq);
        }
        if let Some(&next) = self.queue.front() {
            let p = self.packets[next];
            self.push(
                now + self.link.transmission_time(p.size),
                EventKind::Departure,
                p.flow,
                p.seq,
            );
        }
        self.red.occupancy = self.queue.len();
        self.record(now);
    }

    fn run(&mut self) {
        for f in 0..self.sources.len() {
            self.schedule_wake(f);
        }
        while let Some(ev) = self.events.pop() {
            let f = ev.flow as usize - 1;
            match ev.kind {
                EventKind::Departure => self.depart(ev.time),
                EventKind::Send => {
                    self.sources[f].wake_pending = false;
                    self.pump(f, ev.time);
                }
                EventKind::Ack => {
                    let tcp = &mut self.sources[f].tcp;
                    tcp.in_flight -= 1;
                    tcp.window = window_per_ack(tcp.window).expect("window stays >= 1");
                    self.pump(f, ev.time);
                }
                EventKind::Loss => {
                    let tcp = &mut self.sources[f].tcp;
                    tcp.in_flight -= 1;
                    if ev.seq >= tcp.recovery_seq {
                        tcp.window = (tcp.window / 2.0).max(1.0);
                        tcp.recovery_seq = tcp.next_seq;
                    }
                    self.pump(f, ev.time);
                }
            }
        }
    }
}

/// Runs the bottleneck simulation until every packet sent before `t_end` has
/// been delivered or dropped.
///
/// Flow `i` (1-based) draws its departure schedule from the stream derived
/// from `(seed, i)`; RED coin flips use a separate stream.
pub fn run_simulation(
    flows: &[FlowSpec],
    link: &LinkConfig,
    t_end: f64,
    seed: u64,
) -> Result<SimResult> {
    if flows.is_empty() {
        return Err(Error::InvalidParams("at least one flow is required".into()));
    }
    if !(t_end.is_finite() && t_end > 0.0) {
        return Err(Error::InvalidParams(format!(
            "t_end must be positive, got {t_end}"
        )));
    }
    link.validate()?;

    let mut sources = Vec::with_capacity(flows.len());
    for (i, spec) in flows.iter().enumerate() {
        let schedule = generate_departures(spec, rng::derive_seed(seed, i as u64 + 1))?;
        sources.push(Source {
            transport: spec.transport,
            schedule,
            next: 0,
            tcp: TcpSourceState {
                window: 1.0,
                rtt_base: link.rtt_base,
                in_flight: 0,
                next_seq: 0,
                recovery_seq: 0,
            },
            wake_pending: false,
        });
    }

    let mut sim = Simulator {
        link,
        t_end,
        events: BinaryHeap::new(),
        order: 0,
        sources,
        packets: Vec::new(),
        index: vec![Vec::new(); flows.len()],
        queue: VecDeque::new(),
        red: RedState::default(),
        red_rng: rng::stream(seed, rng::RED_STREAM),
        trace: vec![QueueSample {
            t: 0.0,
            q: 0.0,
            q_hat: 0.0,
        }],
    };
    sim.run();

    let packets = sim
        .index
        .iter()
        .flat_map(|ids| ids.iter().map(|&i| sim.packets[i]))
        .collect();
    let labels = flows
        .iter()
        .enumerate()
        .map(|(i, f)| FlowLabel {
            from: format!("sender:{}", i + 1),
            to: f.dest.clone(),
        })
        .collect();

    Ok(SimResult {
        packets,
        trace: QueueTrace {
            samples: sim.trace,
            t_end,
        },
        labels,
        t_end,
    })
}
