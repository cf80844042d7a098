//! Discrete-event core. One drop is a single-threaded event loop over an
//! integer microsecond clock; drops are independent and can run in parallel.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::coexistence::{end_of_cycle, SensingLedger};
use crate::config::{RunConfig, RunKind};
use crate::lte_mac::{
    lte_subframe_action, pattern_for_count, pattern_from_mode, BlockOutcome, LteTxState,
    QueueCounters, SubframeAction, SubframePattern, SUBFRAME_US,
};
use crate::metrics::cycle_throughput;
use crate::phy::{mw_to_dbm, select_mcs, CcaOutcome, LinkBudget, SinrHistory};
use crate::topology::{
    generate_floor, path_loss, place_infrastructure, place_users, received_power, resample_user,
    FloorGeometry, NodeKind, NodePosition, TopologyError,
};
use crate::traffic::{PoissonSource, RampProfile, RoundRobin};
use crate::wlan_mac::{data_duration, DcfPhase, StationCounters, WlanPacket, WlanRate, WlanStation};
use crate::Micros;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("no position with coverage found for {kind} user {node} after {attempts} draws")]
    Coverage {
        kind: &'static str,
        node: usize,
        attempts: usize,
    },
    #[error("cannot aggregate zero drops")]
    NoDrops,
    #[error("drop {index} has {got} cycles, expected {expected}")]
    CycleMismatch {
        index: usize,
        got: usize,
        expected: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum System {
    Lte,
    Wlan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    SubframeBoundary,
    CycleBoundary,
    /// Backoff countdown of an AP reaches zero. Stale generations are ignored.
    WlanSlotTick { ap: usize, generation: u64 },
    PacketArrival(System),
    TxEnd { ap: usize },
    AckEnd { ap: usize, success: bool },
    DropEnd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub time: Micros,
    pub sequence: u64,
    pub kind: EventKind,
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed: BinaryHeap is a max-heap
        (other.time, other.sequence).cmp(&(self.time, self.sequence))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Min-queue on (time, sequence).
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Event>,
    next_sequence: u64,
    now: Micros,
}

impl EventQueue {
    pub fn schedule(&mut self, time: Micros, kind: EventKind) {
        assert!(time >= self.now, "event scheduled in the past: {time} < {}", self.now);
        self.heap.push(Event {
            time,
            sequence: self.next_sequence,
            kind,
        });
        self.next_sequence += 1;
    }

    pub fn pop(&mut self) -> Option<Event> {
        let ev = self.heap.pop()?;
        self.now = ev.time;
        Some(ev)
    }

    pub fn now(&self) -> Micros {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleRecord {
    pub cycle_index: usize,
    pub lte_bits: u64,
    pub wlan_bits: u64,
    pub lte_mbps: f64,
    pub wlan_mbps: f64,
    pub spared_count: usize,
    pub gamma: f64,
    pub n_seize: u64,
    pub n_listen: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DropStats {
    pub lte: QueueCounters,
    pub wlan_stations: Vec<StationCounters>,
    pub wlan_queued: u64,
    pub wlan_in_flight: u64,
    pub lte_offered_bits: u64,
    pub wlan_offered_bits: u64,
    pub events: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DropResult {
    pub seed: u64,
    pub cycles: Vec<CycleRecord>,
    pub lte_bits: u64,
    pub wlan_bits: u64,
    pub stats: DropStats,
}

impl DropResult {
    pub fn mean_lte_mbps(&self) -> f64 {
        mean(self.cycles.iter().map(|c| c.lte_mbps))
    }

    pub fn mean_wlan_mbps(&self) -> f64 {
        mean(self.cycles.iter().map(|c| c.wlan_mbps))
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Node placement for one drop plus the derived association data.
#[derive(Debug, Clone)]
pub struct Topology {
    pub geometry: FloorGeometry,
    pub nodes: Vec<NodePosition>,
    pub budget: LinkBudget,
    pub pico: usize,
    pub aps: Vec<usize>,
    pub lte_users: Vec<usize>,
    pub wlan_users: Vec<usize>,
    /// Index into `aps` for every WLAN user.
    pub wlan_serving_ap: Vec<usize>,
    pub wlan_rates: Vec<WlanRate>,
}

fn rx_between(cfg: &RunConfig, geometry: &FloorGeometry, a: &NodePosition, b: &NodePosition) -> f64 {
    let s = &cfg.scenario;
    received_power(s.tx_power_dbm, path_loss(a, b, &s.pathloss, geometry), s.antenna_gain_db)
}

/// Places the Pico, both APs and all users. A user that cannot reach the
/// lowest MCS (LTE) or the lowest rate of its best AP (WLAN) on a clean
/// channel is redrawn uniformly.
pub fn build_topology(cfg: &RunConfig, rng: &mut ChaCha8Rng) -> Result<Topology, SimError> {
    let s = &cfg.scenario;
    let geometry = generate_floor(&s.floor)?;
    let mut nodes = place_infrastructure(&geometry, s.min_infrastructure_distance, &s.heights, rng)?;
    let first_user = nodes.len();
    let mut users = place_users(&geometry, s.n_lte_users, s.n_wlan_users, first_user, &s.heights, rng);
    let pico = nodes[0];
    let aps: Vec<NodePosition> = nodes[1..3].to_vec();

    let lte_floor = cfg.lte.mcs_table.lowest_threshold();
    let wlan_floor = cfg.wlan.rate_ladder.lowest_threshold();
    for user in users.iter_mut() {
        let mut attempts = 0;
        loop {
            let snr = match user.kind {
                NodeKind::LteUser => rx_between(cfg, &geometry, &pico, user) - s.noise_floor_dbm,
                _ => aps
                    .iter()
                    .map(|ap| rx_between(cfg, &geometry, ap, user))
                    .fold(f64::NEG_INFINITY, f64::max)
                    - s.noise_floor_dbm,
            };
            let floor = if user.kind == NodeKind::LteUser { lte_floor } else { wlan_floor };
            if snr >= floor {
                break;
            }
            attempts += 1;
            if attempts > s.coverage_attempts {
                return Err(SimError::Coverage {
                    kind: user.kind.label(),
                    node: user.node_id,
                    attempts,
                });
            }
            *user = resample_user(&geometry, user, rng);
        }
    }
    nodes.extend(users);

    let kinds: Vec<NodeKind> = nodes.iter().map(|n| n.kind).collect();
    let budget = LinkBudget::new(kinds, s.noise_floor_dbm, |tx, rx| {
        rx_between(cfg, &geometry, &nodes[tx], &nodes[rx])
    });
    let lte_users: Vec<usize> = nodes.iter().filter(|n| n.kind == NodeKind::LteUser).map(|n| n.node_id).collect();
    let wlan_users: Vec<usize> = nodes.iter().filter(|n| n.kind == NodeKind::WlanUser).map(|n| n.node_id).collect();
    let ap_ids = vec![1, 2];
    let mut wlan_serving_ap = Vec::with_capacity(wlan_users.len());
    let mut wlan_rates = Vec::with_capacity(wlan_users.len());
    for &u in &wlan_users {
        let (idx, _) = ap_ids
            .iter()
            .enumerate()
            .map(|(i, &ap)| (i, budget.rx_dbm(ap, u)))
            .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
        wlan_serving_ap.push(idx);
        let rate = cfg
            .wlan
            .rate_ladder
            .select(budget.snr(u, ap_ids[idx]))
            .expect("coverage checked above");
        wlan_rates.push(rate);
    }
    Ok(Topology {
        geometry,
        nodes,
        budget,
        pico: 0,
        aps: ap_ids,
        lte_users,
        wlan_users,
        wlan_serving_ap,
        wlan_rates,
    })
}

const STREAM_TOPOLOGY: u64 = 0;
const STREAM_LTE_TRAFFIC: u64 = 1;
const STREAM_WLAN_TRAFFIC: u64 = 2;
const STREAM_BACKOFF: u64 = 16;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

pub fn topology_for_seed(cfg: &RunConfig, seed: u64) -> Result<Topology, SimError> {
    build_topology(cfg, &mut stream(seed, STREAM_TOPOLOGY))
}

#[derive(Debug, Clone)]
struct WlanFrame {
    /// Index into `Topology::wlan_users`.
    user: usize,
    rate: WlanRate,
    in_data: bool,
    collided: bool,
    min_sinr: f64,
}

#[derive(Debug, Clone, Default)]
struct ApTimer {
    idle_since: Option<Micros>,
    expiry: Option<Micros>,
    generation: u64,
}

#[derive(Debug, Clone)]
struct SubframeState {
    action: SubframeAction,
    scheduled_user: Option<usize>,
    interference_integral: f64,
    last_change: Micros,
    mute_observed: CcaOutcome,
}

/// Full simulation state for one drop.
pub struct World<'a> {
    cfg: &'a RunConfig,
    kind: RunKind,
    topo: Topology,
    queue: EventQueue,
    active: Vec<usize>,

    lte: LteTxState,
    lte_history: Vec<SinrHistory>,
    lte_source: Option<PoissonSource>,
    lte_rr: RoundRobin,
    lte_rng: ChaCha8Rng,
    pattern: SubframePattern,
    subframe: SubframeState,
    ledger: SensingLedger,

    stations: Vec<WlanStation>,
    frames: Vec<Option<WlanFrame>>,
    timers: Vec<ApTimer>,
    backoff_rngs: Vec<ChaCha8Rng>,
    wlan_source: Option<PoissonSource>,
    wlan_rr: RoundRobin,
    wlan_rng: ChaCha8Rng,
    wlan_offered_bits: u64,

    cycle_lte_bits: u64,
    cycle_wlan_bits: u64,
    cycles: Vec<CycleRecord>,
    events: u64,
    primed: bool,
    duration: Micros,
    t_c: Micros,
}

impl<'a> World<'a> {
    pub fn new(cfg: &'a RunConfig, seed: u64) -> Result<Self, SimError> {
        let kind = cfg.coexistence.mode;
        let topo = topology_for_seed(cfg, seed)?;
        let mut lte_rng = stream(seed, STREAM_LTE_TRAFFIC);
        let mut wlan_rng = stream(seed, STREAM_WLAN_TRAFFIC);
        let mut backoff_rngs: Vec<ChaCha8Rng> =
            (0..topo.aps.len()).map(|i| stream(seed, STREAM_BACKOFF + i as u64)).collect();

        let lte_source = (kind.has_lte() && !cfg.lte.full_buffer).then(|| {
            PoissonSource::new(RampProfile::constant(cfg.lte.arrival_rate), cfg.lte.packet_bits, &mut lte_rng)
        });
        let wlan_source = (kind.has_wlan() && !cfg.wlan.full_buffer)
            .then(|| PoissonSource::new(cfg.wlan_ramp(), cfg.wlan.payload_bits, &mut wlan_rng));
        let stations = backoff_rngs
            .iter_mut()
            .map(|rng| WlanStation::new(&cfg.wlan.dcf, rng))
            .collect();

        let pattern = match kind {
            RunKind::Adaptive => pattern_for_count(cfg.coexistence.initial_spared).expect("validated"),
            RunKind::Fixed(m) => pattern_from_mode(m).expect("validated"),
            RunKind::LteOnly | RunKind::WlanOnly => SubframePattern::all_transmit(),
        };
        let n_aps = topo.aps.len();
        let n_lte = topo.lte_users.len();
        let n_wlan = topo.wlan_users.len();
        let lag_samples = (cfg.lte.mcs_lag_ms as usize) + 2;
        Ok(Self {
            cfg,
            kind,
            queue: EventQueue::default(),
            active: Vec::with_capacity(4),
            lte: LteTxState::new(n_lte, cfg.lte.packet_bits, cfg.lte.full_buffer),
            lte_history: vec![SinrHistory::with_capacity(lag_samples); n_lte],
            lte_source,
            lte_rr: RoundRobin::new(n_lte),
            lte_rng,
            pattern,
            subframe: SubframeState {
                action: SubframeAction::Transmit,
                scheduled_user: None,
                interference_integral: 0.0,
                last_change: 0,
                mute_observed: CcaOutcome::Idle,
            },
            ledger: SensingLedger::default(),
            stations,
            frames: vec![None; n_aps],
            timers: vec![ApTimer::default(); n_aps],
            backoff_rngs,
            wlan_source,
            wlan_rr: RoundRobin::new(n_wlan),
            wlan_rng,
            wlan_offered_bits: 0,
            cycle_lte_bits: 0,
            cycle_wlan_bits: 0,
            cycles: Vec::new(),
            events: 0,
            primed: false,
            duration: cfg.engine.duration_ms * 1_000,
            t_c: cfg.coexistence.t_c_ms * 1_000,
            topo,
        })
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn pattern(&self) -> SubframePattern {
        self.pattern
    }

    pub fn ledger(&self) -> SensingLedger {
        self.ledger
    }

    pub fn cycles(&self) -> &[CycleRecord] {
        &self.cycles
    }

    pub fn now(&self) -> Micros {
        self.queue.now()
    }

    pub fn schedule(&mut self, time: Micros, kind: EventKind) {
        self.queue.schedule(time, kind);
    }

    fn prime(&mut self) {
        self.primed = true;
        self.schedule(0, EventKind::SubframeBoundary);
        if let Some(t) = self.lte_source.as_ref().and_then(PoissonSource::next_arrival_us) {
            self.schedule(t, EventKind::PacketArrival(System::Lte));
        }
        if let Some(t) = self.wlan_source.as_ref().and_then(PoissonSource::next_arrival_us) {
            self.schedule(t, EventKind::PacketArrival(System::Wlan));
        }
        if self.kind.has_wlan() && self.cfg.wlan.full_buffer {
            for ap in 0..self.stations.len() {
                self.top_up_wlan(ap);
                self.try_contend(ap);
            }
        }
    }

    /// Runs the event loop to the end of the drop.
    pub fn run(mut self, seed: u64) -> DropResult {
        if !self.primed {
            self.prime();
        }
        while let Some(ev) = self.queue.pop() {
            self.events += 1;
            if ev.kind == EventKind::DropEnd {
                break;
            }
            self.step(ev);
        }
        self.finish(seed)
    }

    /// Processes events up to and including time `until`.
    pub fn run_until(&mut self, until: Micros) {
        if !self.primed {
            self.prime();
        }
        while self.queue.heap.peek().is_some_and(|e| e.time <= until) {
            let ev = self.queue.pop().expect("peeked");
            self.events += 1;
            if ev.kind == EventKind::DropEnd {
                break;
            }
            self.step(ev);
        }
    }

    fn finish(self, seed: u64) -> DropResult {
        let lte_bits = self.cycles.iter().map(|c| c.lte_bits).sum();
        let wlan_bits = self.cycles.iter().map(|c| c.wlan_bits).sum();
        let wlan_queued = self.stations.iter().map(|s| s.queue.len() as u64).sum();
        DropResult {
            seed,
            cycles: self.cycles,
            lte_bits,
            wlan_bits,
            stats: DropStats {
                lte: self.lte.counters,
                wlan_stations: self.stations.iter().map(|s| s.counters).collect(),
                wlan_queued,
                wlan_in_flight: 0,
                lte_offered_bits: self.lte.counters.arrived_bits,
                wlan_offered_bits: self.wlan_offered_bits,
                events: self.events,
            },
        }
    }

    /// Dispatches one event to the owning module.
    pub fn step(&mut self, ev: Event) {
        let now = ev.time;
        match ev.kind {
            EventKind::SubframeBoundary => self.on_subframe_boundary(now),
            EventKind::CycleBoundary => {
                self.close_cycle();
                if now < self.duration {
                    self.open_subframe(now);
                } else {
                    self.schedule(now, EventKind::DropEnd);
                }
            }
            EventKind::WlanSlotTick { ap, generation } => {
                if self.timers[ap].generation == generation && self.timers[ap].expiry == Some(now) {
                    self.on_backoff_expiry(ap, now);
                }
            }
            EventKind::PacketArrival(System::Lte) => self.on_lte_arrival(now),
            EventKind::PacketArrival(System::Wlan) => self.on_wlan_arrival(now),
            EventKind::TxEnd { ap } => self.on_tx_end(ap, now),
            EventKind::AckEnd { ap, success } => self.on_ack_end(ap, success, now),
            EventKind::DropEnd => {}
        }
    }

    // ---- medium ----

    fn set_active(&mut self, node: usize, on: bool) {
        let now = self.queue.now();
        self.accumulate_lte_interference(now);
        let present = self.active.contains(&node);
        match (on, present) {
            (true, false) => self.active.push(node),
            (false, true) => self.active.retain(|&n| n != node),
            _ => return,
        }
        self.on_medium_change(now);
    }

    fn accumulate_lte_interference(&mut self, now: Micros) {
        if let Some(u) = self.subframe.scheduled_user {
            let rx = self.topo.lte_users[u];
            let i = self.topo.budget.interference_mw(rx, self.topo.pico, &self.active);
            self.subframe.interference_integral += i * (now - self.subframe.last_change) as f64;
        }
        self.subframe.last_change = now;
    }

    fn on_medium_change(&mut self, now: Micros) {
        // ongoing WLAN data frames track their worst SINR
        for (ap_idx, frame) in self.frames.iter_mut().enumerate() {
            if let Some(f) = frame.as_mut().filter(|f| f.in_data) {
                let rx = self.topo.wlan_users[f.user];
                let sinr = self.topo.budget.sinr_at(rx, self.topo.aps[ap_idx], &self.active);
                f.min_sinr = f.min_sinr.min(sinr);
            }
        }
        if self.subframe.action == SubframeAction::Mute && self.kind.has_lte() {
            let cca = self.topo.budget.cca_assess(self.topo.pico, &self.active, &self.cfg.coexistence.cca);
            self.observe_mute(cca);
        }
        for ap in 0..self.stations.len() {
            if matches!(self.stations[ap].dcf.phase, DcfPhase::Difs | DcfPhase::Backoff) {
                let busy = self.ap_busy(ap);
                match (busy, self.timers[ap].idle_since) {
                    (true, Some(_)) => self.freeze(ap, now),
                    (false, None) => self.start_idle(ap, now),
                    _ => {}
                }
            }
        }
    }

    fn observe_mute(&mut self, cca: CcaOutcome) {
        let rank = |c: CcaOutcome| match c {
            CcaOutcome::Idle => 0,
            CcaOutcome::CarrierSensed => 1,
            CcaOutcome::EnergyBusy => 2,
            CcaOutcome::WlanDetected => 3,
        };
        if rank(cca) > rank(self.subframe.mute_observed) {
            self.subframe.mute_observed = cca;
        }
    }

    fn ap_busy(&self, ap: usize) -> bool {
        self.topo
            .budget
            .cca_assess(self.topo.aps[ap], &self.active, &self.cfg.coexistence.cca)
            .is_busy()
    }

    // ---- WLAN ----

    fn start_idle(&mut self, ap: usize, now: Micros) {
        let p = &self.cfg.wlan.dcf;
        let expiry = now + p.difs + self.stations[ap].dcf.backoff_counter as Micros * p.slot;
        let timer = &mut self.timers[ap];
        timer.idle_since = Some(now);
        timer.expiry = Some(expiry);
        timer.generation += 1;
        let generation = timer.generation;
        self.schedule(expiry, EventKind::WlanSlotTick { ap, generation });
    }

    fn freeze(&mut self, ap: usize, now: Micros) {
        let timer = &self.timers[ap];
        let (Some(t0), Some(expiry)) = (timer.idle_since, timer.expiry) else {
            return;
        };
        if now >= expiry {
            // countdown completes in this same instant: the pending tick transmits
            return;
        }
        let p = &self.cfg.wlan.dcf;
        let counted = now - t0;
        if counted > p.difs {
            let slots = ((counted - p.difs) / p.slot) as u32;
            self.stations[ap].observe_idle_slots(slots);
        }
        self.stations[ap].freeze();
        let timer = &mut self.timers[ap];
        timer.idle_since = None;
        timer.expiry = None;
        timer.generation += 1;
    }

    fn try_contend(&mut self, ap: usize) {
        let now = self.queue.now();
        if self.stations[ap].dcf.phase == DcfPhase::Difs && self.timers[ap].idle_since.is_none() && !self.ap_busy(ap) {
            self.start_idle(ap, now);
        }
    }

    fn on_backoff_expiry(&mut self, ap: usize, now: Micros) {
        let remaining = self.stations[ap].dcf.backoff_counter;
        self.stations[ap].observe_idle_slots(remaining);
        let timer = &mut self.timers[ap];
        timer.idle_since = None;
        timer.expiry = None;
        timer.generation += 1;
        self.start_frame(ap, now);
    }

    fn start_frame(&mut self, ap: usize, now: Micros) {
        let packet = *self.stations[ap].queue.front().expect("contending AP has data");
        let rate = self.topo.wlan_rates[packet.user];
        let mut collided = false;
        for other in self.frames.iter_mut().flatten() {
            if other.in_data {
                other.collided = true;
                collided = true;
            }
        }
        self.frames[ap] = Some(WlanFrame {
            user: packet.user,
            rate,
            in_data: true,
            collided,
            min_sinr: f64::INFINITY,
        });
        let station = &mut self.stations[ap];
        station.dcf.phase = DcfPhase::Transmitting;
        station.counters.attempts += 1;
        let end = now + data_duration(packet.bits, rate.rate_mbps * 1e6, &self.cfg.wlan.dcf);
        self.schedule(end, EventKind::TxEnd { ap });
        self.set_active(self.topo.aps[ap], true);
    }

    fn on_tx_end(&mut self, ap: usize, now: Micros) {
        let p = self.cfg.wlan.dcf;
        let frame = self.frames[ap].as_mut().expect("frame on air");
        frame.in_data = false;
        let success = !frame.collided && frame.min_sinr >= frame.rate.min_sinr;
        self.stations[ap].dcf.phase = DcfPhase::WaitAck;
        if !success {
            self.set_active(self.topo.aps[ap], false);
        }
        self.schedule(now + p.sifs + p.ack_duration, EventKind::AckEnd { ap, success });
    }

    fn on_ack_end(&mut self, ap: usize, success: bool, _now: Micros) {
        self.frames[ap] = None;
        let p = self.cfg.wlan.dcf;
        if success {
            let packet = self.stations[ap].succeed(&p, &mut self.backoff_rngs[ap]);
            self.cycle_wlan_bits += packet.bits;
            if self.cfg.wlan.full_buffer {
                self.top_up_wlan(ap);
            }
            self.set_active(self.topo.aps[ap], false);
        } else {
            self.stations[ap].fail(&p, &mut self.backoff_rngs[ap]);
        }
        self.try_contend(ap);
    }

    fn top_up_wlan(&mut self, ap: usize) {
        if !self.stations[ap].queue.is_empty() {
            return;
        }
        let users: Vec<usize> = (0..self.topo.wlan_users.len())
            .filter(|&u| self.topo.wlan_serving_ap[u] == ap)
            .collect();
        if users.is_empty() {
            return;
        }
        let k = self.stations[ap].counters.arrived as usize % users.len();
        let bits = self.cfg.wlan.payload_bits;
        self.stations[ap].enqueue(WlanPacket { user: users[k], bits });
        self.wlan_offered_bits += bits;
    }

    fn on_wlan_arrival(&mut self, now: Micros) {
        let source = self.wlan_source.as_mut().expect("WLAN source");
        let bits = source.packet_bits;
        source.advance(&mut self.wlan_rng);
        if let Some(t) = source.next_arrival_us() {
            self.schedule(t.max(now), EventKind::PacketArrival(System::Wlan));
        }
        let Some(user) = self.wlan_rr.next_user() else { return };
        let ap = self.topo.wlan_serving_ap[user];
        self.stations[ap].enqueue(WlanPacket { user, bits });
        self.wlan_offered_bits += bits;
        self.try_contend(ap);
    }

    // ---- LTE ----

    fn on_lte_arrival(&mut self, now: Micros) {
        let source = self.lte_source.as_mut().expect("LTE source");
        source.advance(&mut self.lte_rng);
        if let Some(t) = source.next_arrival_us() {
            self.schedule(t.max(now), EventKind::PacketArrival(System::Lte));
        }
        if let Some(user) = self.lte_rr.next_user() {
            self.lte.enqueue(user);
        }
    }

    fn on_subframe_boundary(&mut self, now: Micros) {
        if now > 0 {
            self.close_subframe(now);
        }
        if now > 0 && now.is_multiple_of(self.t_c) {
            self.schedule(now, EventKind::CycleBoundary);
        } else {
            self.open_subframe(now);
        }
    }

    fn close_subframe(&mut self, now: Micros) {
        if !self.kind.has_lte() {
            return;
        }
        match self.subframe.action {
            SubframeAction::Transmit => {
                self.accumulate_lte_interference(now);
                if let Some(u) = self.subframe.scheduled_user.take() {
                    let rx = self.topo.lte_users[u];
                    let avg_i = self.subframe.interference_integral / SUBFRAME_US as f64;
                    let b = &self.topo.budget;
                    let sinr = mw_to_dbm(b.rx_mw(self.topo.pico, rx)) - mw_to_dbm(b.noise_mw() + avg_i);
                    if let Some(BlockOutcome::Delivered { bits }) =
                        self.lte.complete(sinr, &self.cfg.lte.mcs_table)
                    {
                        self.cycle_lte_bits += bits;
                    }
                }
            }
            SubframeAction::Mute => {
                self.ledger.record_mute_subframe(self.subframe.mute_observed);
            }
        }
    }

    fn close_cycle(&mut self) {
        let n_listen = self.ledger.n_listen;
        let n_seize = self.ledger.n_seize;
        let spared_count = match self.kind {
            RunKind::WlanOnly => 0,
            _ => self.pattern.mute_count(),
        };
        let gamma = if self.kind == RunKind::Adaptive || n_listen > 0 {
            self.ledger.load_ratio()
        } else {
            0.0
        };
        let t_c_ms = self.cfg.coexistence.t_c_ms;
        self.cycles.push(CycleRecord {
            cycle_index: self.cycles.len(),
            lte_bits: self.cycle_lte_bits,
            wlan_bits: self.cycle_wlan_bits,
            lte_mbps: cycle_throughput(self.cycle_lte_bits, t_c_ms),
            wlan_mbps: cycle_throughput(self.cycle_wlan_bits, t_c_ms),
            spared_count,
            gamma,
            n_seize,
            n_listen,
        });
        self.cycle_lte_bits = 0;
        self.cycle_wlan_bits = 0;
        if self.kind == RunKind::Adaptive {
            let decision = end_of_cycle(&mut self.ledger, &self.cfg.coexistence.thresholds);
            self.pattern = decision.pattern;
        } else {
            self.ledger = SensingLedger::default();
        }
    }

    fn open_subframe(&mut self, now: Micros) {
        if !self.kind.has_lte() {
            self.schedule(now + SUBFRAME_US, EventKind::SubframeBoundary);
            return;
        }
        let pico = self.topo.pico;
        for (u, &rx) in self.topo.lte_users.iter().enumerate() {
            let sinr = self.topo.budget.sinr_at(rx, pico, &self.active);
            self.lte_history[u].push(now, sinr);
        }
        let action = lte_subframe_action(now, &self.pattern);
        self.subframe = SubframeState {
            action,
            scheduled_user: None,
            interference_integral: 0.0,
            last_change: now,
            mute_observed: CcaOutcome::Idle,
        };
        let mut transmit = false;
        if action == SubframeAction::Transmit && self.lte.has_data() {
            let lag = self.cfg.lte.mcs_lag_ms * 1_000;
            let table = &self.cfg.lte.mcs_table;
            let history = &self.lte_history;
            if let Some(block) = self.lte.prepare(
                |u| select_mcs(&history[u], now, lag, table),
                table,
                self.cfg.scenario.bandwidth_hz,
                self.cfg.lte.max_retx,
            ) {
                self.subframe.scheduled_user = Some(block.user);
                transmit = true;
            }
        }
        if action == SubframeAction::Mute {
            let cca = self.topo.budget.cca_assess(pico, &self.active, &self.cfg.coexistence.cca);
            self.observe_mute(cca);
        }
        self.set_active(pico, transmit);
        self.schedule(now + SUBFRAME_US, EventKind::SubframeBoundary);
    }
}

/// Executes one drop: topology generation, then the event loop.
pub fn run_drop(cfg: &RunConfig, seed: u64) -> Result<DropResult, SimError> {
    Ok(World::new(cfg, seed)?.run(seed))
}

pub fn drop_seeds(cfg: &RunConfig) -> Vec<u64> {
    (0..cfg.engine.drops as u64).map(|i| cfg.engine.seed_base + i).collect()
}

pub fn run_drops_sequential(cfg: &RunConfig) -> Result<Vec<DropResult>, SimError> {
    drop_seeds(cfg).into_iter().map(|s| run_drop(cfg, s)).collect()
}

#[cfg(feature = "parallel")]
pub fn run_drops_parallel(cfg: &RunConfig) -> Result<Vec<DropResult>, SimError> {
    use rayon::prelude::*;
    drop_seeds(cfg).into_par_iter().map(|s| run_drop(cfg, s)).collect()
}

/// Runs every drop of the config; results are ordered by drop index
/// whichever backend executes them.
pub fn run_drops(cfg: &RunConfig) -> Result<Vec<DropResult>, SimError> {
    #[cfg(feature = "parallel")]
    {
        run_drops_parallel(cfg)
    }
    #[cfg(not(feature = "parallel"))]
    {
        run_drops_sequential(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleMean {
    pub cycle_index: usize,
    pub lte_mbps: f64,
    pub wlan_mbps: f64,
    pub spared_count: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub drops: usize,
    pub cycles: Vec<CycleMean>,
    pub mean_lte_mbps: f64,
    pub mean_wlan_mbps: f64,
    /// Standard error of the mean across drops.
    pub se_lte_mbps: f64,
    pub se_wlan_mbps: f64,
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (m, 0.0);
    }
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Per-cycle and overall means across drops.
pub fn aggregate_drops(results: &[DropResult]) -> Result<Summary, SimError> {
    let first = results.first().ok_or(SimError::NoDrops)?;
    let n_cycles = first.cycles.len();
    for (index, r) in results.iter().enumerate() {
        if r.cycles.len() != n_cycles {
            return Err(SimError::CycleMismatch {
                index,
                got: r.cycles.len(),
                expected: n_cycles,
            });
        }
    }
    let n = results.len() as f64;
    let cycles = (0..n_cycles)
        .map(|c| {
            let sum = |f: fn(&CycleRecord) -> f64| results.iter().map(|r| f(&r.cycles[c])).sum::<f64>() / n;
            CycleMean {
                cycle_index: c,
                lte_mbps: sum(|r| r.lte_mbps),
                wlan_mbps: sum(|r| r.wlan_mbps),
                spared_count: sum(|r| r.spared_count as f64),
                gamma: sum(|r| r.gamma),
            }
        })
        .collect();
    let lte: Vec<f64> = results.iter().map(DropResult::mean_lte_mbps).collect();
    let wlan: Vec<f64> = results.iter().map(DropResult::mean_wlan_mbps).collect();
    let (mean_lte_mbps, se_lte_mbps) = mean_and_se(&lte);
    let (mean_wlan_mbps, se_wlan_mbps) = mean_and_se(&wlan);
    Ok(Summary {
        drops: results.len(),
        cycles,
        mean_lte_mbps,
        mean_wlan_mbps,
        se_lte_mbps,
        se_wlan_mbps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(kind: RunKind, duration_ms: u64) -> RunConfig {
        let mut c = RunConfig::default();
        c.coexistence.mode = kind;
        c.engine.duration_ms = duration_ms;
        c.engine.drops = 2;
        c
    }

    #[test]
    fn event_queue_orders_by_time_then_sequence() {
        let mut q = EventQueue::default();
        q.schedule(5, EventKind::DropEnd);
        q.schedule(3, EventKind::CycleBoundary);
        q.schedule(3, EventKind::SubframeBoundary);
        let order: Vec<_> = std::iter::from_fn(|| q.pop()).map(|e| (e.time, e.kind)).collect();
        assert_eq!(
            order,
            vec![
                (3, EventKind::CycleBoundary),
                (3, EventKind::SubframeBoundary),
                (5, EventKind::DropEnd)
            ]
        );
    }

    #[test]
    #[should_panic(expected = "in the past")]
    fn scheduling_in_the_past_panics() {
        let mut q = EventQueue::default();
        q.schedule(10, EventKind::DropEnd);
        q.pop();
        q.schedule(5, EventKind::DropEnd);
    }

    #[test]
    fn one_record_per_cycle() {
        let c = cfg(RunKind::Adaptive, 1_000);
        assert_eq!(run_drop(&c, 1).unwrap().cycles.len(), 1);
        let c = cfg(RunKind::Adaptive, 3_000);
        let r = run_drop(&c, 1).unwrap();
        assert_eq!(r.cycles.len(), 3);
        assert_eq!(r.lte_bits, r.cycles.iter().map(|c| c.lte_bits).sum::<u64>());
    }

    #[test]
    fn drops_are_deterministic() {
        let c = cfg(RunKind::Adaptive, 2_000);
        assert_eq!(run_drop(&c, 7).unwrap(), run_drop(&c, 7).unwrap());
        assert_ne!(run_drop(&c, 7).unwrap().cycles, run_drop(&c, 8).unwrap().cycles);
    }

    #[test]
    fn cycle_boundary_installs_single_spare_when_quiet() {
        let mut c = cfg(RunKind::Adaptive, 2_000);
        c.wlan.ramp = RampProfile::constant(0.0);
        c.coexistence.initial_spared = 5;
        let mut w = World::new(&c, 3).unwrap();
        w.run_until(999_999);
        assert_eq!(w.pattern().mute_count(), 5);
        assert_eq!(w.ledger().n_seize, 0);
        w.run_until(1_000_000);
        assert_eq!(w.pattern().mute_count(), 1);
        assert_eq!(w.cycles()[0].n_listen, 500);
        assert_eq!(w.cycles()[0].gamma, 0.0);
    }

    #[test]
    fn mute_subframe_carries_no_lte_energy() {
        let mut c = cfg(RunKind::Fixed(4), 1_000);
        c.lte.full_buffer = true;
        c.wlan.ramp = RampProfile::constant(0.0);
        let mut w = World::new(&c, 3).unwrap();
        w.run_until(0);
        assert!(w.active.contains(&w.topo.pico));
        w.run_until(1_000);
        assert!(!w.active.contains(&w.topo.pico));
        w.run_until(1_999);
        assert!(!w.active.contains(&w.topo.pico));
        w.run_until(9_000);
        assert!(w.active.contains(&w.topo.pico));
    }

    #[test]
    fn aggregation() {
        let c = cfg(RunKind::Adaptive, 2_000);
        let r = run_drops_sequential(&c).unwrap();
        let s = aggregate_drops(&r[..1]).unwrap();
        assert_eq!(s.cycles[1].lte_mbps, r[0].cycles[1].lte_mbps);
        let s = aggregate_drops(&r).unwrap();
        let expect = (r[0].cycles[0].wlan_mbps + r[1].cycles[0].wlan_mbps) / 2.0;
        assert!((s.cycles[0].wlan_mbps - expect).abs() < 1e-12);
        assert!(matches!(aggregate_drops(&[]), Err(SimError::NoDrops)));
        let mut short = r[1].clone();
        short.cycles.pop();
        assert!(matches!(
            aggregate_drops(&[r[0].clone(), short]),
            Err(SimError::CycleMismatch { index: 1, .. })
        ));
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn parallel_matches_sequential() {
        let c = cfg(RunKind::Fixed(2), 1_000);
        assert_eq!(run_drops_parallel(&c).unwrap(), run_drops_sequential(&c).unwrap());
    }
}
