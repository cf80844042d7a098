//! LTE downlink MAC: 10 x 1 ms subframe frame, mute-subframe patterns and
//! per-subframe transport blocks with HARQ.

use std::collections::VecDeque;
use std::fmt;

use thiserror::Error;

use crate::phy::{DecodeOutcome, HarqProcess, McsTable};
use crate::Micros;

pub const SUBFRAME_US: Micros = 1_000;
pub const SUBFRAMES_PER_FRAME: usize = 10;
pub const FRAME_US: Micros = SUBFRAME_US * SUBFRAMES_PER_FRAME as Micros;

/// Order in which subframes are handed to WLAN as the spared count grows.
/// Prefixes of length 2, 4, 6 and 8 give the four preset mute patterns.
pub const MUTE_PRECEDENCE: [usize; 9] = [1, 6, 2, 7, 4, 5, 3, 8, 9];

/// Mute sets of the five preset configurations.
const PRESET_MODES: [&[usize]; 5] = [
    &[],
    &[1, 6],
    &[1, 2, 6, 7],
    &[1, 2, 4, 5, 6, 7],
    &[1, 2, 3, 4, 5, 6, 7, 8],
];

#[derive(Debug, Error, PartialEq)]
pub enum LteMacError {
    #[error("subframe mode {0} out of range 0..=4")]
    UnknownMode(u8),
    #[error("spared subframe count {0} out of range 0..=9")]
    SparedOutOfRange(usize),
}

/// Which subframes of a frame LTE leaves silent. Subframe 0 always transmits.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct SubframePattern {
    mute: u16,
}

impl SubframePattern {
    fn from_indices(indices: &[usize]) -> Self {
        let mute = indices.iter().fold(0u16, |m, &i| m | (1 << i));
        debug_assert!(mute & 1 == 0);
        Self { mute }
    }

    pub fn all_transmit() -> Self {
        Self::default()
    }

    pub fn is_mute(&self, subframe: usize) -> bool {
        subframe < SUBFRAMES_PER_FRAME && self.mute & (1 << subframe) != 0
    }

    pub fn mute_count(&self) -> usize {
        self.mute.count_ones() as usize
    }

    pub fn mute_indices(&self) -> Vec<usize> {
        (0..SUBFRAMES_PER_FRAME).filter(|&i| self.is_mute(i)).collect()
    }
}

impl fmt::Debug for SubframePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: String = (0..SUBFRAMES_PER_FRAME)
            .map(|i| if self.is_mute(i) { 'L' } else { 'T' })
            .collect();
        write!(f, "SubframePattern({s})")
    }
}

pub fn subframe_index(t: Micros) -> usize {
    ((t / SUBFRAME_US) % SUBFRAMES_PER_FRAME as Micros) as usize
}

pub fn pattern_from_mode(mode: u8) -> Result<SubframePattern, LteMacError> {
    PRESET_MODES
        .get(mode as usize)
        .map(|idx| SubframePattern::from_indices(idx))
        .ok_or(LteMacError::UnknownMode(mode))
}

pub fn pattern_for_count(k: usize) -> Result<SubframePattern, LteMacError> {
    if k > MUTE_PRECEDENCE.len() {
        return Err(LteMacError::SparedOutOfRange(k));
    }
    Ok(SubframePattern::from_indices(&MUTE_PRECEDENCE[..k]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubframeAction {
    Transmit,
    Mute,
}

pub fn lte_subframe_action(t: Micros, pattern: &SubframePattern) -> SubframeAction {
    if pattern.is_mute(subframe_index(t)) {
        SubframeAction::Mute
    } else {
        SubframeAction::Transmit
    }
}

#[derive(Debug, Clone, PartialEq)]
struct LtePacket {
    id: u64,
    remaining_bits: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub packet: u64,
    pub bits: u64,
    /// Last piece of its packet.
    pub completes: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportBlock {
    pub user: usize,
    pub bits: u64,
    pub segments: Vec<Segment>,
    pub harq: HarqProcess,
}

/// Outcome of one transmitted subframe.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockOutcome {
    Delivered { bits: u64 },
    Retransmit,
    Dropped { bits: u64 },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct QueueCounters {
    pub arrived_packets: u64,
    pub arrived_bits: u64,
    pub delivered_packets: u64,
    pub delivered_bits: u64,
    pub dropped_packets: u64,
    pub dropped_bits: u64,
}

/// Pico-side downlink state: one FIFO per user plus at most one HARQ
/// process in flight.
#[derive(Debug, Clone)]
pub struct LteTxState {
    queues: Vec<VecDeque<LtePacket>>,
    in_flight: Option<TransportBlock>,
    next_packet: u64,
    packet_bits: u64,
    full_buffer: bool,
    pub counters: QueueCounters,
}

impl LteTxState {
    pub fn new(n_users: usize, packet_bits: u64, full_buffer: bool) -> Self {
        Self {
            queues: vec![VecDeque::new(); n_users],
            in_flight: None,
            next_packet: 0,
            packet_bits,
            full_buffer,
            counters: QueueCounters::default(),
        }
    }

    pub fn n_users(&self) -> usize {
        self.queues.len()
    }

    pub fn enqueue(&mut self, user: usize) {
        self.enqueue_bits(user, self.packet_bits);
    }

    pub fn enqueue_bits(&mut self, user: usize, bits: u64) {
        self.queues[user].push_back(LtePacket {
            id: self.next_packet,
            remaining_bits: bits,
        });
        self.next_packet += 1;
        self.counters.arrived_packets += 1;
        self.counters.arrived_bits += bits;
    }

    pub fn has_data(&self) -> bool {
        self.full_buffer
            || self.in_flight.is_some()
            || self.queues.iter().any(|q| !q.is_empty())
    }

    /// Packets waiting (including any partially sent).
    pub fn queued_packets(&self) -> u64 {
        self.queues.iter().map(|q| q.len() as u64).sum()
    }

    /// Packets that are neither queued nor finished: only segments of a
    /// packet whose tail is already inside the in-flight block.
    pub fn in_flight_only_packets(&self) -> u64 {
        self.in_flight
            .as_ref()
            .map(|b| b.segments.iter().filter(|s| s.completes).count() as u64)
            .unwrap_or(0)
    }

    pub fn queued_bits(&self) -> u64 {
        self.queues
            .iter()
            .flat_map(|q| q.iter())
            .map(|p| p.remaining_bits)
            .sum::<u64>()
    }

    pub fn in_flight_bits(&self) -> u64 {
        self.in_flight.as_ref().map(|b| b.bits).unwrap_or(0)
    }

    pub fn in_flight(&self) -> Option<&TransportBlock> {
        self.in_flight.as_ref()
    }

    fn top_up(&mut self, user: usize, target_bits: u64) {
        let mut have: u64 = self.queues[user].iter().map(|p| p.remaining_bits).sum();
        while have < target_bits {
            self.enqueue(user);
            have += self.packet_bits;
        }
    }

    /// Picks the block to send this subframe: the pending HARQ retransmission
    /// if any, otherwise new data for the user owning the oldest packet.
    /// Returns `None` when there is nothing to send.
    pub fn prepare(
        &mut self,
        mcs_for_user: impl Fn(usize) -> usize,
        table: &McsTable,
        bandwidth_hz: f64,
        max_retx: u32,
    ) -> Option<&TransportBlock> {
        if self.in_flight.is_some() {
            return self.in_flight.as_ref();
        }
        if self.full_buffer {
            let max_tb = table.transport_block_bits(table.len() - 1, bandwidth_hz, SUBFRAME_US);
            for u in 0..self.queues.len() {
                self.top_up(u, max_tb.max(1));
            }
        }
        let user = self
            .queues
            .iter()
            .enumerate()
            .filter_map(|(u, q)| q.front().map(|p| (p.id, u)))
            .min()?
            .1;
        let mcs = mcs_for_user(user);
        let capacity = table.transport_block_bits(mcs, bandwidth_hz, SUBFRAME_US);
        let mut segments = Vec::new();
        let mut bits = 0;
        let queue = &mut self.queues[user];
        while bits < capacity {
            let Some(head) = queue.front_mut() else { break };
            let take = head.remaining_bits.min(capacity - bits);
            head.remaining_bits -= take;
            bits += take;
            let completes = head.remaining_bits == 0;
            segments.push(Segment {
                packet: head.id,
                bits: take,
                completes,
            });
            if completes {
                queue.pop_front();
            }
        }
        if bits == 0 {
            return None;
        }
        self.in_flight = Some(TransportBlock {
            user,
            bits,
            segments,
            harq: HarqProcess::new(mcs, max_retx),
        });
        self.in_flight.as_ref()
    }

    /// Decodes the in-flight block at the given SINR for this attempt.
    pub fn complete(&mut self, sinr_db: f64, table: &McsTable) -> Option<BlockOutcome> {
        let block = self.in_flight.as_mut()?;
        match block.harq.attempt(sinr_db, table) {
            DecodeOutcome::Success => {
                let block = self.in_flight.take().expect("checked above");
                self.counters.delivered_bits += block.bits;
                self.counters.delivered_packets +=
                    block.segments.iter().filter(|s| s.completes).count() as u64;
                Some(BlockOutcome::Delivered { bits: block.bits })
            }
            DecodeOutcome::Failure if block.harq.exhausted() => {
                let block = self.in_flight.take().expect("checked above");
                let mut dropped_bits = block.bits;
                for seg in &block.segments {
                    if !seg.completes {
                        // the unsent tail of this packet is at the head of the user's queue
                        let q = &mut self.queues[block.user];
                        let head = q.pop_front().expect("partial packet tail queued");
                        debug_assert_eq!(head.id, seg.packet);
                        dropped_bits += head.remaining_bits;
                    }
                    self.counters.dropped_packets += 1;
                }
                self.counters.dropped_bits += dropped_bits;
                Some(BlockOutcome::Dropped { bits: block.bits })
            }
            DecodeOutcome::Failure => Some(BlockOutcome::Retransmit),
        }
    }

    /// One transmit subframe at a fixed MCS and SINR. Returns delivered bits;
    /// zero when the queue and HARQ buffer are empty.
    pub fn transmit_subframe(
        &mut self,
        mcs: usize,
        sinr_db: f64,
        table: &McsTable,
        bandwidth_hz: f64,
        max_retx: u32,
    ) -> u64 {
        if self.prepare(|_| mcs, table, bandwidth_hz, max_retx).is_none() {
            return 0;
        }
        match self.complete(sinr_db, table) {
            Some(BlockOutcome::Delivered { bits }) => bits,
            _ => 0,
        }
    }
}
