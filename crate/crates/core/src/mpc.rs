//! Deterministic simulated MPC substrate.
//!
//! Machines have a fixed capacity of `S = ⌈n^δ⌉` words. Computation proceeds
//! in barrier-synchronized rounds; in each round every machine may send and
//! receive at most `S` words, and at every round boundary every machine holds
//! at most `S` resident words. All violations are reported as errors rather
//! than clamped, since they indicate an algorithm bug or a violated bound.
//!
//! One word holds one vertex id, one degree, one color or one bounded scalar.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;

pub type MachineId = u64;

/// Anything with a word size.
pub trait WordSized {
    fn words(&self) -> u64;
}

impl WordSized for u64 {
    fn words(&self) -> u64 {
        1
    }
}

impl WordSized for Vec<u64> {
    fn words(&self) -> u64 {
        self.len() as u64
    }
}

impl<A: WordSized, B: WordSized> WordSized for (A, B) {
    fn words(&self) -> u64 {
        self.0.words() + self.1.words()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Send,
    Receive,
    Resident,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Send => "send",
            Direction::Receive => "receive",
            Direction::Resident => "resident",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MpcError {
    CapacityExceeded { machine: MachineId, direction: Direction, words: u64, capacity: u64 },
    UnknownMachine { machine: MachineId },
    GlobalBudgetExceeded { demand: u64, budget: u64 },
    InvalidConfig(&'static str),
}

impl fmt::Display for MpcError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MpcError::CapacityExceeded { machine, direction, words, capacity } => {
                write!(f, "machine {machine} exceeded capacity ({direction}): {words} words > {capacity}")
            }
            MpcError::UnknownMachine { machine } => write!(f, "unknown machine {machine}"),
            MpcError::GlobalBudgetExceeded { demand, budget } => {
                write!(f, "global budget exceeded: {demand} words > {budget}")
            }
            MpcError::InvalidConfig(why) => write!(f, "invalid configuration: {why}"),
        }
    }
}

/// `⌈log₂ x⌉` for `x ≥ 1`, and 0 for `x ≤ 1`.
pub fn ceil_log2(x: u64) -> u64 {
    if x <= 1 {
        0
    } else {
        u64::from(64 - (x - 1).leading_zeros())
    }
}

/// `⌈x⌉` with a relative guard against `pow`/`log` rounding noise, so that
/// e.g. `4096^0.5` is 64 and not 65.
pub fn ceil_guarded(x: f64) -> u64 {
    let r = libm::round(x);
    if libm::fabs(x - r) <= 1e-9 * libm::fmax(1.0, libm::fabs(x)) {
        r as u64
    } else {
        libm::ceil(x) as u64
    }
}

/// `⌊x⌋` with the same guard as [`ceil_guarded`].
pub fn floor_guarded(x: f64) -> u64 {
    let r = libm::round(x);
    if libm::fabs(x - r) <= 1e-9 * libm::fmax(1.0, libm::fabs(x)) {
        r as u64
    } else {
        libm::floor(x) as u64
    }
}

/// Simulation parameters. Construct with [`SimConfig::new`] and adjust with
/// the `with_*` builders; every builder re-validates.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n: u64,
    pub delta: f64,
    pub capacity: u64,
    pub machine_count: u64,
    pub global_budget_words: u64,
    /// Pipeline lag between phase starts.
    pub lag_t: u32,
    /// LOCAL rounds per execution of the degree-reduction step.
    pub r_local: u32,
    /// `⌈10/δ⌉`.
    pub s_param: u32,
    pub seed: u64,
    pub round_charge_sort: u32,
    pub round_charge_broadcast: u32,
    /// Overrides the low-degree threshold `max(α², ⌈log² n⌉)` that ends the
    /// phase schedule.
    pub low_degree_threshold: Option<u64>,
}

impl SimConfig {
    /// Defaults for a graph with `n` vertices and `m` edges: the global
    /// budget is `8·(n+m)·⌈log₂ n⌉³` words and the machine count is the
    /// smallest that covers it.
    pub fn new(n: u64, m: u64, delta: f64, seed: u64) -> Result<Self, MpcError> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(MpcError::InvalidConfig("delta must lie in (0, 1)"));
        }
        let n = n.max(1);
        let capacity = ceil_guarded(libm::pow(n as f64, delta)).max(1);
        let lg = ceil_log2(n).max(1);
        let global_budget_words = 8 * (n + m) * lg * lg * lg;
        let cfg = SimConfig {
            n,
            delta,
            capacity,
            machine_count: global_budget_words.div_ceil(capacity),
            global_budget_words,
            lag_t: 4,
            r_local: 4,
            s_param: ceil_guarded(10.0 / delta) as u32,
            seed,
            round_charge_sort: 2,
            round_charge_broadcast: 2,
            low_degree_threshold: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), MpcError> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(MpcError::InvalidConfig("delta must lie in (0, 1)"));
        }
        if self.capacity == 0 || self.machine_count == 0 {
            return Err(MpcError::InvalidConfig("capacity and machine count must be positive"));
        }
        if self.machine_count.saturating_mul(self.capacity) < self.global_budget_words {
            return Err(MpcError::InvalidConfig("machine_count * capacity < global budget"));
        }
        if self.lag_t == 0 || self.r_local == 0 {
            return Err(MpcError::InvalidConfig("lag_t and r_local must be positive"));
        }
        if self.round_charge_sort == 0 || self.round_charge_broadcast == 0 {
            return Err(MpcError::InvalidConfig("primitive round charges must be positive"));
        }
        Ok(())
    }

    pub fn with_lag(mut self, lag_t: u32) -> Result<Self, MpcError> {
        self.lag_t = lag_t;
        self.validate().map(|_| self)
    }

    pub fn with_capacity(mut self, capacity: u64) -> Result<Self, MpcError> {
        self.capacity = capacity;
        self.machine_count = self.global_budget_words.div_ceil(capacity.max(1));
        self.validate().map(|_| self)
    }

    pub fn with_machine_count(mut self, machine_count: u64) -> Result<Self, MpcError> {
        self.machine_count = machine_count;
        self.global_budget_words = self.global_budget_words.min(machine_count.saturating_mul(self.capacity));
        self.validate().map(|_| self)
    }

    pub fn with_global_budget(mut self, words: u64) -> Result<Self, MpcError> {
        self.global_budget_words = words;
        self.machine_count = words.div_ceil(self.capacity).max(1);
        self.validate().map(|_| self)
    }

    pub fn with_s_param(mut self, s: u32) -> Result<Self, MpcError> {
        if s == 0 {
            return Err(MpcError::InvalidConfig("s must be positive"));
        }
        self.s_param = s;
        Ok(self)
    }

    pub fn with_low_degree_threshold(mut self, threshold: Option<u64>) -> Self {
        self.low_degree_threshold = threshold;
        self
    }

    pub fn log2_n(&self) -> u64 {
        ceil_log2(self.n).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct RecordKey(pub u64, pub u64);

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Machine {
    pub resident_words: u64,
    pub store: BTreeMap<RecordKey, u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LedgerEntry {
    pub round: u64,
    pub tag: String,
    pub max_sent: u64,
    pub max_recv: u64,
    pub max_resident: u64,
    pub global_words: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RoundLedger {
    pub entries: Vec<LedgerEntry>,
    pub peak_global_words: u64,
}

impl RoundLedger {
    pub fn total_rounds(&self) -> u64 {
        self.entries.len() as u64
    }

    pub fn rounds_tagged(&self, prefix: &str) -> u64 {
        self.entries.iter().filter(|e| e.tag.starts_with(prefix)).count() as u64
    }

    /// Round indices are `0, 1, 2, …` without gaps and no entry exceeds the
    /// per-machine capacity.
    pub fn within_budget(&self, capacity: u64) -> bool {
        self.entries.iter().enumerate().all(|(i, e)| {
            e.round == i as u64 && e.max_sent <= capacity && e.max_recv <= capacity && e.max_resident <= capacity
        })
    }
}

/// A simulated MPC cluster. Machines are materialized lazily, so very large
/// machine counts cost nothing until a machine is touched.
#[derive(Debug, Clone)]
pub struct Cluster {
    config: SimConfig,
    machines: BTreeMap<MachineId, Machine>,
    ledger: RoundLedger,
    global_words: u64,
    fill_cursor: MachineId,
    next_record: u64,
}

/// Records created by [`Cluster::place_spread`]; hand back to release them.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Allocation {
    pub records: Vec<(MachineId, RecordKey)>,
}

impl Allocation {
    pub fn merge(&mut self, other: Allocation) {
        self.records.extend(other.records);
    }
}

impl Cluster {
    pub fn new(config: SimConfig) -> Self {
        Self {
            config,
            machines: BTreeMap::new(),
            ledger: RoundLedger::default(),
            global_words: 0,
            fill_cursor: 0,
            next_record: 0,
        }
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn capacity(&self) -> u64 {
        self.config.capacity
    }

    pub fn ledger(&self) -> &RoundLedger {
        &self.ledger
    }

    pub fn into_ledger(self) -> RoundLedger {
        self.ledger
    }

    pub fn machine(&self, id: MachineId) -> Option<&Machine> {
        self.machines.get(&id)
    }

    pub fn machines(&self) -> &BTreeMap<MachineId, Machine> {
        &self.machines
    }

    pub fn global_words(&self) -> u64 {
        self.global_words
    }

    pub fn rounds(&self) -> u64 {
        self.ledger.total_rounds()
    }

    fn check_machine(&self, id: MachineId) -> Result<(), MpcError> {
        if id >= self.config.machine_count {
            Err(MpcError::UnknownMachine { machine: id })
        } else {
            Ok(())
        }
    }

    /// Stores a record of `words` words on machine `id`.
    pub fn store(&mut self, id: MachineId, key: RecordKey, words: u64) -> Result<(), MpcError> {
        self.check_machine(id)?;
        let capacity = self.config.capacity;
        let machine = self.machines.entry(id).or_default();
        let previous = machine.store.get(&key).copied().unwrap_or(0);
        let resident = machine.resident_words - previous + words;
        if resident > capacity {
            return Err(MpcError::CapacityExceeded {
                machine: id,
                direction: Direction::Resident,
                words: resident,
                capacity,
            });
        }
        machine.store.insert(key, words);
        machine.resident_words = resident;
        self.global_words = self.global_words - previous + words;
        Ok(())
    }

    /// Removes a record, returning its word size.
    pub fn delete(&mut self, id: MachineId, key: RecordKey) -> u64 {
        let Some(machine) = self.machines.get_mut(&id) else { return 0 };
        let words = machine.store.remove(&key).unwrap_or(0);
        machine.resident_words -= words;
        self.global_words -= words;
        if machine.store.is_empty() {
            self.machines.remove(&id);
        }
        words
    }

    fn fresh_key(&mut self, tag: u64) -> RecordKey {
        self.next_record += 1;
        RecordKey(tag, self.next_record)
    }

    /// Places one record of `words` words on the first machine (from a
    /// moving cursor) with room for it.
    pub fn place(&mut self, tag: u64, words: u64) -> Result<(MachineId, RecordKey), MpcError> {
        let capacity = self.config.capacity;
        if words > capacity {
            return Err(MpcError::CapacityExceeded {
                machine: self.fill_cursor,
                direction: Direction::Resident,
                words,
                capacity,
            });
        }
        let start = self.fill_cursor;
        let mut id = start;
        loop {
            let used = self.machines.get(&id).map_or(0, |m| m.resident_words);
            if used + words <= capacity {
                break;
            }
            id = (id + 1) % self.config.machine_count;
            if id == start {
                return Err(MpcError::GlobalBudgetExceeded {
                    demand: self.global_words + words,
                    budget: self.config.machine_count * capacity,
                });
            }
        }
        self.fill_cursor = id;
        let key = self.fresh_key(tag);
        self.store(id, key, words)?;
        Ok((id, key))
    }

    /// Spreads `words` words over as many capacity-sized records as needed.
    pub fn place_spread(&mut self, tag: u64, mut words: u64) -> Result<Allocation, MpcError> {
        let mut alloc = Allocation::default();
        let chunk = self.config.capacity;
        while words > 0 {
            let used = self.machines.get(&self.fill_cursor).map_or(0, |m| m.resident_words);
            let room = chunk - used;
            let piece = if room > 0 { words.min(room) } else { words.min(chunk) };
            match self.place(tag, piece) {
                Ok(rec) => alloc.records.push(rec),
                Err(e) => {
                    self.release(alloc);
                    return Err(e);
                }
            }
            words -= piece;
        }
        Ok(alloc)
    }

    pub fn release(&mut self, alloc: Allocation) {
        for (id, key) in alloc.records {
            self.delete(id, key);
        }
    }

    fn max_resident(&self) -> u64 {
        self.machines.values().map(|m| m.resident_words).max().unwrap_or(0)
    }

    fn push_entry(&mut self, tag: &str, max_sent: u64, max_recv: u64) {
        let entry = LedgerEntry {
            round: self.ledger.entries.len() as u64,
            tag: String::from(tag),
            max_sent,
            max_recv,
            max_resident: self.max_resident(),
            global_words: self.global_words,
        };
        self.ledger.peak_global_words = self.ledger.peak_global_words.max(self.global_words);
        self.ledger.entries.push(entry);
    }

    /// Charges `rounds` rounds whose traffic was computed by the caller.
    pub fn charge(&mut self, tag: &str, rounds: u64, max_sent: u64, max_recv: u64) -> Result<(), MpcError> {
        let capacity = self.config.capacity;
        if max_sent > capacity {
            return Err(MpcError::CapacityExceeded {
                machine: 0,
                direction: Direction::Send,
                words: max_sent,
                capacity,
            });
        }
        if max_recv > capacity {
            return Err(MpcError::CapacityExceeded {
                machine: 0,
                direction: Direction::Receive,
                words: max_recv,
                capacity,
            });
        }
        for _ in 0..rounds {
            self.push_entry(tag, max_sent, max_recv);
        }
        Ok(())
    }

    fn check_traffic(
        &self,
        sent: &BTreeMap<MachineId, u64>,
        recv: &BTreeMap<MachineId, u64>,
    ) -> Result<(u64, u64), MpcError> {
        let capacity = self.config.capacity;
        for (&machine, &words) in sent {
            if words > capacity {
                return Err(MpcError::CapacityExceeded { machine, direction: Direction::Send, words, capacity });
            }
        }
        for (&machine, &words) in recv {
            if words > capacity {
                return Err(MpcError::CapacityExceeded { machine, direction: Direction::Receive, words, capacity });
            }
        }
        Ok((sent.values().copied().max().unwrap_or(0), recv.values().copied().max().unwrap_or(0)))
    }

    /// Executes one synchronous round. Each inbox lists `(sender, payload)`
    /// ordered by sender id and then by the sender's outbox order.
    pub fn exec_round<P: WordSized>(
        &mut self,
        tag: &str,
        outboxes: BTreeMap<MachineId, Vec<(MachineId, P)>>,
    ) -> Result<BTreeMap<MachineId, Vec<(MachineId, P)>>, MpcError> {
        let mut sent: BTreeMap<MachineId, u64> = BTreeMap::new();
        let mut recv: BTreeMap<MachineId, u64> = BTreeMap::new();
        for (&src, out) in &outboxes {
            self.check_machine(src)?;
            for (dst, payload) in out {
                self.check_machine(*dst)?;
                *sent.entry(src).or_default() += payload.words();
                *recv.entry(*dst).or_default() += payload.words();
            }
        }
        let (max_sent, max_recv) = self.check_traffic(&sent, &recv)?;
        let mut inboxes: BTreeMap<MachineId, Vec<(MachineId, P)>> = BTreeMap::new();
        for (src, out) in outboxes {
            for (dst, payload) in out {
                inboxes.entry(dst).or_default().push((src, payload));
            }
        }
        self.push_entry(tag, max_sent, max_recv);
        Ok(inboxes)
    }

    /// Sorts `items` lexicographically by key, ties broken by origin.
    /// The item of rank `i` ends on machine `⌊i·machine_count/len⌋`.
    pub fn sort(&mut self, items: &[KeyedItem]) -> Result<SortOutcome, MpcError> {
        let len = items.len() as u64;
        let machine_count = self.config.machine_count;
        self.sort_with(items, |order, _| {
            order
                .iter()
                .enumerate()
                .map(|(rank, _)| (rank as u128 * machine_count as u128 / len.max(1) as u128) as MachineId)
                .collect()
        })
    }

    /// Like [`Cluster::sort`], but machine `i` receives the next run of
    /// ranks that fits in `S` words, so the output occupies consecutive
    /// machines starting at 0.
    pub fn sort_packed(&mut self, items: &[KeyedItem]) -> Result<SortOutcome, MpcError> {
        let capacity = self.config.capacity;
        self.sort_with(items, |order, items| {
            let mut machine: MachineId = 0;
            let mut load = 0u64;
            order
                .iter()
                .map(|&idx| {
                    let w = items[idx].words;
                    if load + w > capacity && load > 0 {
                        machine += 1;
                        load = 0;
                    }
                    load += w;
                    machine
                })
                .collect()
        })
    }

    /// `place(order, items)` maps each rank to its destination machine.
    fn sort_with(
        &mut self,
        items: &[KeyedItem],
        place: impl Fn(&[usize], &[KeyedItem]) -> Vec<MachineId>,
    ) -> Result<SortOutcome, MpcError> {
        let capacity = self.config.capacity;
        let total: u64 = items.iter().map(|it| it.words).sum();
        if total > self.config.global_budget_words {
            return Err(MpcError::GlobalBudgetExceeded { demand: total, budget: self.config.global_budget_words });
        }
        if let Some(it) = items.iter().find(|it| it.words > capacity) {
            return Err(MpcError::CapacityExceeded {
                machine: it.origin.0,
                direction: Direction::Resident,
                words: it.words,
                capacity,
            });
        }
        let mut order: Vec<usize> = (0..items.len()).collect();
        order.sort_by(|&a, &b| items[a].key.cmp(&items[b].key).then(items[a].origin.cmp(&items[b].origin)));
        let mut ranks = alloc::vec![0usize; items.len()];
        for (rank, &idx) in order.iter().enumerate() {
            ranks[idx] = rank;
        }
        let by_rank = place(&order, items);
        for &m in by_rank.iter().rev().take(1) {
            self.check_machine(m)?;
        }
        let machine_of_rank = |rank: usize| by_rank[rank];

        // Routing round: each item travels from its origin to its final slot.
        let mut sent: BTreeMap<MachineId, u64> = BTreeMap::new();
        let mut recv: BTreeMap<MachineId, u64> = BTreeMap::new();
        for (idx, it) in items.iter().enumerate() {
            self.check_machine(it.origin.0)?;
            *sent.entry(it.origin.0).or_default() += it.words;
            *recv.entry(machine_of_rank(ranks[idx])).or_default() += it.words;
        }
        let (s1, r1) = self.check_traffic(&sent, &recv)?;
        // Rank notification round: one word back to every origin.
        let mut sent2: BTreeMap<MachineId, u64> = BTreeMap::new();
        let mut recv2: BTreeMap<MachineId, u64> = BTreeMap::new();
        for (idx, it) in items.iter().enumerate() {
            *sent2.entry(machine_of_rank(ranks[idx])).or_default() += 1;
            *recv2.entry(it.origin.0).or_default() += 1;
        }
        let (s2, r2) = self.check_traffic(&sent2, &recv2)?;
        let charge = u64::from(self.config.round_charge_sort);
        self.push_entry("sort", s1, r1);
        if charge >= 2 {
            self.push_entry("sort", s2, r2);
        }
        for _ in 2..charge {
            self.push_entry("sort", 0, 0);
        }
        let placement = ranks.iter().map(|&r| machine_of_rank(r)).collect();
        Ok(SortOutcome { ranks, placement })
    }

    /// Concurrent constant-depth broadcast trees, one per request. Each
    /// holder forwards to at most `⌊S / words⌋` new machines per level.
    pub fn broadcast_many(&mut self, requests: &[BroadcastRequest]) -> Result<BroadcastOutcome, MpcError> {
        let capacity = self.config.capacity;
        let mut states = Vec::with_capacity(requests.len());
        for req in requests {
            self.check_machine(req.source)?;
            if req.words > capacity {
                return Err(MpcError::CapacityExceeded {
                    machine: req.source,
                    direction: Direction::Send,
                    words: req.words,
                    capacity,
                });
            }
            if !req.recipients.is_empty() {
                self.check_machine(req.recipients.end - 1)?;
            }
            let fanout = (capacity / req.words.max(1)).max(1);
            let holders: Vec<MachineId> = alloc::vec![req.source];
            // Recipients still waiting for the value, in order.
            let pending: Vec<MachineId> = req.recipients.clone().filter(|&m| m != req.source).collect();
            states.push((holders, pending, 0usize, fanout));
        }
        let mut levels = 0u64;
        let mut max_fanout = 0u64;
        loop {
            let mut sent: BTreeMap<MachineId, u64> = BTreeMap::new();
            let mut recv: BTreeMap<MachineId, u64> = BTreeMap::new();
            let mut any = false;
            for (req, (holders, pending, next, fanout)) in requests.iter().zip(states.iter_mut()) {
                if *next >= pending.len() {
                    continue;
                }
                any = true;
                let current = holders.len();
                for h in 0..current {
                    let take = (*fanout as usize).min(pending.len() - *next);
                    if take == 0 {
                        break;
                    }
                    let src = holders[h];
                    *sent.entry(src).or_default() += take as u64 * req.words;
                    max_fanout = max_fanout.max(take as u64);
                    for &dst in &pending[*next..*next + take] {
                        *recv.entry(dst).or_default() += req.words;
                        holders.push(dst);
                    }
                    *next += take;
                }
            }
            if !any {
                break;
            }
            let (s, r) = self.check_traffic(&sent, &recv)?;
            self.push_entry("broadcast", s, r);
            levels += 1;
        }
        for _ in levels..u64::from(self.config.round_charge_broadcast) {
            self.push_entry("broadcast", 0, 0);
        }
        let delivered = states
            .into_iter()
            .zip(requests)
            .map(|((holders, _, _, _), req)| holders.into_iter().filter(|m| req.recipients.contains(m)).collect())
            .collect();
        Ok(BroadcastOutcome { levels, max_fanout, delivered })
    }

    /// Single-source broadcast to a contiguous machine range.
    pub fn broadcast(
        &mut self,
        source: MachineId,
        words: u64,
        recipients: Range<MachineId>,
    ) -> Result<BroadcastOutcome, MpcError> {
        self.broadcast_many(&[BroadcastRequest { source, words, recipients }])
    }

    /// Assigns machine ranges to components in proportion to their size.
    /// Components with `size ≥ S` get a contiguous range with total capacity
    /// at least `c_alloc·size·⌈log₂ n⌉²` words; smaller components (one word
    /// per vertex) are packed first-fit by descending size.
    pub fn assign_machines(
        &self,
        component_sizes: &[(u64, u64)],
        c_alloc: u64,
    ) -> Result<BTreeMap<u64, Range<MachineId>>, MpcError> {
        let capacity = self.config.capacity;
        let lg = self.config.log2_n();
        let mut out = BTreeMap::new();
        let mut cursor: MachineId = 0;
        let mut demand = 0u64;
        let mut small: Vec<(u64, u64)> = Vec::new();
        for &(id, size) in component_sizes {
            if size >= capacity {
                let words = c_alloc * size * lg * lg;
                let count = words.div_ceil(capacity);
                demand += count * capacity;
                out.insert(id, cursor..cursor + count);
                cursor += count;
            } else {
                small.push((id, size));
            }
        }
        small.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let first_small = cursor;
        let mut loads: Vec<u64> = Vec::new();
        for (id, size) in small {
            let slot = match loads.iter().position(|&l| l + size <= capacity) {
                Some(slot) => slot,
                None => {
                    loads.push(0);
                    loads.len() - 1
                }
            };
            loads[slot] += size;
            let m = first_small + slot as u64;
            out.insert(id, m..m + 1);
        }
        demand += loads.len() as u64 * capacity;
        let total = first_small + loads.len() as u64;
        if total > self.config.machine_count {
            return Err(MpcError::GlobalBudgetExceeded { demand, budget: self.config.machine_count * capacity });
        }
        Ok(out)
    }
}

/// Sort key component. `NegInf < Val(_) < PosInf`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum KeyPart {
    NegInf,
    Val(u64),
    PosInf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyedItem {
    pub key: Vec<KeyPart>,
    pub words: u64,
    /// `(origin machine, origin sequence)`, the stable tie-break.
    pub origin: (MachineId, u64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SortOutcome {
    pub ranks: Vec<usize>,
    /// Machine holding each item after the sort, indexed like the input.
    pub placement: Vec<MachineId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BroadcastRequest {
    pub source: MachineId,
    pub words: u64,
    pub recipients: Range<MachineId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BroadcastOutcome {
    pub levels: u64,
    pub max_fanout: u64,
    /// Recipient machines holding the value, per request.
    pub delivered: Vec<Vec<MachineId>>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn cluster(n: u64, delta: f64) -> Cluster {
        Cluster::new(SimConfig::new(n, n, delta, 1).unwrap())
    }

    #[test]
    fn capacity_is_ceil_of_power() {
        let c = SimConfig::new(4096, 4096, 0.5, 0).unwrap();
        assert_eq!(c.capacity, 64);
        assert_eq!(c.s_param, 20);
        assert_eq!(SimConfig::new(1000, 0, 0.5, 0).unwrap().capacity, 32);
        assert_eq!(SimConfig::new(10, 0, 0.3, 0).unwrap().s_param, 34);
        assert!(SimConfig::new(10, 0, 1.0, 0).is_err());
        assert!(SimConfig::new(10, 0, 0.0, 0).is_err());
    }

    #[test]
    fn vacuous_round() {
        let mut c = cluster(100, 0.5);
        let inboxes = c.exec_round::<u64>("noop", BTreeMap::new()).unwrap();
        assert!(inboxes.is_empty());
        let e = &c.ledger().entries[0];
        assert_eq!((e.max_sent, e.max_recv), (0, 0));
        assert_eq!(c.rounds(), 1);
    }

    #[test]
    fn oversend_is_rejected() {
        let mut c = cluster(100, 0.5);
        let s = c.capacity();
        let out = BTreeMap::from([(0, vec![(1, vec![0u64; s as usize + 1])])]);
        assert_eq!(
            c.exec_round("x", out).unwrap_err(),
            MpcError::CapacityExceeded { machine: 0, direction: Direction::Send, words: s + 1, capacity: s }
        );
        let out = BTreeMap::from([(0, vec![(u64::MAX, 1u64)])]);
        assert!(matches!(c.exec_round("x", out), Err(MpcError::UnknownMachine { .. })));
    }

    #[test]
    fn ring_round() {
        let mut c = cluster(100, 0.5);
        let out: BTreeMap<_, _> = (0..3u64).map(|m| (m, vec![((m + 1) % 3, m)])).collect();
        let inboxes = c.exec_round("ring", out).unwrap();
        for m in 0..3u64 {
            assert_eq!(inboxes[&m], vec![((m + 2) % 3, (m + 2) % 3)]);
        }
        let e = &c.ledger().entries[0];
        assert_eq!((e.max_sent, e.max_recv), (1, 1));
    }

    #[test]
    fn inbox_order_is_sender_then_sequence() {
        let mut c = cluster(100, 0.5);
        let out = BTreeMap::from([(2, vec![(0, 20u64), (0, 21)]), (1, vec![(0, 10u64)])]);
        let inboxes = c.exec_round("o", out).unwrap();
        assert_eq!(inboxes[&0], vec![(1, 10), (2, 20), (2, 21)]);
    }

    #[test]
    fn exec_round_conserves_resident_words() {
        let mut c = cluster(100, 0.5);
        c.store(0, RecordKey(1, 1), 5).unwrap();
        c.store(3, RecordKey(1, 2), 7).unwrap();
        let before = c.global_words();
        c.exec_round("m", BTreeMap::from([(0, vec![(3, 4u64)])])).unwrap();
        assert_eq!(c.global_words(), before);
        assert_eq!(c.ledger().entries[0].max_resident, 7);
    }

    #[test]
    fn store_respects_capacity() {
        let mut c = cluster(100, 0.5);
        c.store(0, RecordKey(0, 0), 10).unwrap();
        assert!(c.store(0, RecordKey(0, 1), 1).is_err());
        assert_eq!(c.delete(0, RecordKey(0, 0)), 10);
        assert_eq!(c.global_words(), 0);
    }

    #[test]
    fn sort_small_examples() {
        let mut c = cluster(100, 0.5);
        let item = |a: u64, b: u64, seq: u64| KeyedItem {
            key: vec![KeyPart::Val(a), KeyPart::Val(b)],
            words: 2,
            origin: (0, seq),
        };
        // (2,b), (1,c), (1,a) with a < b < c.
        let out = c.sort(&[item(2, 1, 0), item(1, 2, 1), item(1, 0, 2)]).unwrap();
        assert_eq!(out.ranks, vec![2, 1, 0]);
        assert_eq!(c.ledger().rounds_tagged("sort"), 2);
        let out = c.sort(&[item(5, 5, 0)]).unwrap();
        assert_eq!(out.ranks, vec![0]);
    }

    #[test]
    fn sort_places_by_rank() {
        let mut c = Cluster::new(SimConfig::new(100, 100, 0.5, 1).unwrap().with_machine_count(40).unwrap());
        let items: Vec<_> =
            (0..20u64).map(|i| KeyedItem { key: vec![KeyPart::Val(19 - i)], words: 1, origin: (i % 40, i) }).collect();
        let out = c.sort(&items).unwrap();
        for (idx, &r) in out.ranks.iter().enumerate() {
            assert_eq!(r, 19 - idx);
            assert_eq!(out.placement[idx], (r as u64 * 40) / 20);
        }
    }

    #[test]
    fn packed_sort_fills_machines_in_rank_order() {
        // S = 10: ranks 0..=2 (3 words each) on machine 0, 3..=5 on 1, and so on.
        let mut c = cluster(100, 0.5);
        let items: Vec<_> =
            (0..10u64).map(|i| KeyedItem { key: vec![KeyPart::Val(i)], words: 3, origin: (i, 0) }).collect();
        let out = c.sort_packed(&items).unwrap();
        assert_eq!(out.placement, vec![0, 0, 0, 1, 1, 1, 2, 2, 2, 3]);
    }

    #[test]
    fn sort_ties_are_stable_by_origin() {
        let mut c = cluster(100, 0.5);
        let items: Vec<_> = [(3, 1), (0, 9), (0, 2)]
            .iter()
            .map(|&o| KeyedItem { key: vec![KeyPart::Val(1)], words: 1, origin: o })
            .collect();
        assert_eq!(c.sort(&items).unwrap().ranks, vec![2, 1, 0]);
    }

    #[test]
    fn sentinels_bracket_values() {
        assert!(KeyPart::NegInf < KeyPart::Val(0));
        assert!(KeyPart::Val(u64::MAX) < KeyPart::PosInf);
    }

    #[test]
    fn broadcast_examples() {
        let mut c = cluster(100, 0.5);
        let out = c.broadcast(0, 1, 1..2).unwrap();
        assert_eq!(out.delivered, vec![vec![1]]);
        assert_eq!(c.rounds(), 2);
        let out = c.broadcast(0, 1, 5..5).unwrap();
        assert!(out.delivered[0].is_empty());
        assert_eq!(c.rounds(), 4);
        assert!(c.broadcast(0, 11, 0..3).is_err());
    }

    #[test]
    fn broadcast_to_ten_thousand_machines() {
        let cfg = SimConfig::new(10_000, 10_000, 0.5, 1).unwrap();
        assert_eq!(cfg.capacity, 100);
        let mut c = Cluster::new(cfg);
        let out = c.broadcast(0, 1, 0..10_000).unwrap();
        assert_eq!(out.delivered[0].len(), 10_000);
        assert!(out.max_fanout <= 100);
        assert!(c.ledger().within_budget(100));
        assert_eq!(out.levels, 2);
    }

    #[test]
    fn assign_machines_examples() {
        let c = Cluster::new(SimConfig::new(4096, 4096, 0.5, 1).unwrap());
        let a = c.assign_machines(&[(7, 64)], 4).unwrap();
        let r = &a[&7];
        assert!((r.end - r.start) * 64 >= 4 * 64 * 144);
        let a = c.assign_machines(&[(1, 1), (2, 1)], 4).unwrap();
        assert_eq!(a[&1], a[&2]);
        let tiny = Cluster::new(SimConfig::new(4096, 4096, 0.5, 1).unwrap().with_machine_count(3).unwrap());
        assert!(matches!(tiny.assign_machines(&[(1, 64)], 4), Err(MpcError::GlobalBudgetExceeded { .. })));
    }

    #[test]
    fn place_spread_and_release() {
        let mut c = cluster(100, 0.5);
        let a = c.place_spread(9, 35).unwrap();
        assert_eq!(c.global_words(), 35);
        assert!(c.machines().values().all(|m| m.resident_words <= 10));
        c.release(a);
        assert_eq!(c.global_words(), 0);
    }
}
