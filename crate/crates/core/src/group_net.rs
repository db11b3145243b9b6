//! Device-to-device groups with a star topology, manually declared
//! multi-group bridges, and per-flow throughput models.
//!
//! A group has one owner and a set of clients. Clients only talk to the
//! owner, so a client-to-client flow takes two hops. Throughput comes either
//! from a measured lookup table ([`EmpiricalTable`]) or from an
//! airtime-sharing rule ([`AnalyticParams`]): flow `f` with weight `w_f` and
//! hop count `h_f` receives `t_f = (w_f / Σw) · C / h_f`, so that
//! `Σ h_f · t_f = C` for the group's medium capacity `C`.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PeerId(pub u32);

impl fmt::Display for PeerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroupId(pub u32);

impl fmt::Display for GroupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub const DEFAULT_MAX_GROUP_SIZE: usize = 4;
pub const DEFAULT_BRIDGE_RATE_MBPS: f64 = 6.8;
pub const MAX_INTENT: u8 = 15;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GroupError {
    #[error("no candidates for group owner election")]
    NoCandidates,
    #[error("intent {0} outside 0..=15")]
    BadIntent(u8),
    #[error("group {group} is full ({max_size} peers)")]
    Capacity { group: GroupId, max_size: usize },
    #[error("peer {0} already belongs to a group")]
    AlreadyGrouped(PeerId),
    #[error("peer {0} is not a member of the group")]
    NotMember(PeerId),
    #[error("owner {0} cannot also be a client of its own group")]
    OwnerIsClient(PeerId),
    #[error("max_size must be at least 1")]
    BadMaxSize,
    #[error("unknown group {0}")]
    UnknownGroup(GroupId),
    #[error("invalid flow {index}: {reason}")]
    InvalidFlow { index: usize, reason: &'static str },
    #[error("invalid bridge: {0}")]
    InvalidBridge(&'static str),
    #[error("multi-group links can only be created from a scenario declaration")]
    AutomaticBridge,
    #[error("invalid throughput parameters: {0}")]
    InvalidParams(&'static str),
    #[error("calibration failed: {0}")]
    Calibration(&'static str),
}

/// Highest intent wins; ties go to the smallest peer id.
pub fn elect_group_owner(candidates: &[(PeerId, u8)]) -> Result<PeerId, GroupError> {
    let mut best: Option<(PeerId, u8)> = None;
    for &(peer, intent) in candidates {
        if intent > MAX_INTENT {
            return Err(GroupError::BadIntent(intent));
        }
        best = match best {
            Some((bp, bi)) if bi > intent || (bi == intent && bp < peer) => Some((bp, bi)),
            _ => Some((peer, intent)),
        };
    }
    best.map(|(p, _)| p).ok_or(GroupError::NoCandidates)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Group {
    pub id: GroupId,
    pub owner: PeerId,
    pub clients: BTreeSet<PeerId>,
    pub max_size: usize,
}

/// Outcome of removing a peer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Removal {
    Updated(Group),
    /// The owner left; every client is released.
    Dissolved { released: Vec<PeerId> },
}

impl Group {
    pub fn form(id: GroupId, owner: PeerId, clients: BTreeSet<PeerId>, max_size: usize) -> Result<Group, GroupError> {
        if max_size == 0 {
            return Err(GroupError::BadMaxSize);
        }
        if clients.contains(&owner) {
            return Err(GroupError::OwnerIsClient(owner));
        }
        if 1 + clients.len() > max_size {
            return Err(GroupError::Capacity { group: id, max_size });
        }
        Ok(Group { id, owner, clients, max_size })
    }

    pub fn size(&self) -> usize {
        1 + self.clients.len()
    }

    pub fn contains(&self, peer: PeerId) -> bool {
        self.owner == peer || self.clients.contains(&peer)
    }

    pub fn members(&self) -> impl Iterator<Item = PeerId> + '_ {
        core::iter::once(self.owner).chain(self.clients.iter().copied())
    }

    pub fn admit(mut self, peer: PeerId) -> Result<Group, GroupError> {
        if self.contains(peer) {
            return Err(GroupError::AlreadyGrouped(peer));
        }
        if self.size() + 1 > self.max_size {
            return Err(GroupError::Capacity { group: self.id, max_size: self.max_size });
        }
        self.clients.insert(peer);
        Ok(self)
    }

    pub fn remove(mut self, peer: PeerId) -> Result<Removal, GroupError> {
        if peer == self.owner {
            return Ok(Removal::Dissolved { released: self.clients.into_iter().collect() });
        }
        if !self.clients.remove(&peer) {
            return Err(GroupError::NotMember(peer));
        }
        Ok(Removal::Updated(self))
    }

    /// Direct links of the star: owner to each client.
    pub fn links(&self) -> impl Iterator<Item = (PeerId, PeerId)> + '_ {
        self.clients.iter().map(move |&c| (self.owner, c))
    }
}

/// All groups of a scenario plus the membership index that keeps a peer in
/// at most one group.
#[derive(Debug, Clone, Default)]
pub struct Topology {
    groups: BTreeMap<GroupId, Group>,
    membership: BTreeMap<PeerId, GroupId>,
    next_id: u32,
}

impl Topology {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn groups(&self) -> impl Iterator<Item = &Group> {
        self.groups.values()
    }

    pub fn group(&self, id: GroupId) -> Option<&Group> {
        self.groups.get(&id)
    }

    pub fn group_of(&self, peer: PeerId) -> Option<&Group> {
        self.membership.get(&peer).and_then(|g| self.groups.get(g))
    }

    pub fn is_grouped(&self, peer: PeerId) -> bool {
        self.membership.contains_key(&peer)
    }

    pub fn form_group(&mut self, owner: PeerId, clients: BTreeSet<PeerId>, max_size: usize) -> Result<GroupId, GroupError> {
        for p in core::iter::once(&owner).chain(clients.iter()) {
            if self.is_grouped(*p) {
                return Err(GroupError::AlreadyGrouped(*p));
            }
        }
        let id = GroupId(self.next_id);
        let group = Group::form(id, owner, clients, max_size)?;
        self.next_id += 1;
        for p in group.members() {
            self.membership.insert(p, id);
        }
        self.groups.insert(id, group);
        Ok(id)
    }

    pub fn admit_client(&mut self, id: GroupId, peer: PeerId) -> Result<(), GroupError> {
        if self.is_grouped(peer) {
            return Err(GroupError::AlreadyGrouped(peer));
        }
        let group = self.groups.get(&id).ok_or(GroupError::UnknownGroup(id))?.clone();
        let group = group.admit(peer)?;
        self.membership.insert(peer, id);
        self.groups.insert(id, group);
        Ok(())
    }

    /// Removes `peer` from its group. Returns the peers released when the
    /// owner leaves (the group is then gone).
    pub fn remove_peer(&mut self, peer: PeerId) -> Result<Option<Vec<PeerId>>, GroupError> {
        let id = *self.membership.get(&peer).ok_or(GroupError::NotMember(peer))?;
        let group = self.groups.remove(&id).ok_or(GroupError::UnknownGroup(id))?;
        self.membership.remove(&peer);
        match group.remove(peer)? {
            Removal::Updated(g) => {
                self.groups.insert(id, g);
                Ok(None)
            }
            Removal::Dissolved { released } => {
                for c in &released {
                    self.membership.remove(c);
                }
                Ok(Some(released))
            }
        }
    }

    /// Dissolves group `id`, returning its former members.
    pub fn dissolve(&mut self, id: GroupId) -> Result<Vec<PeerId>, GroupError> {
        let group = self.groups.remove(&id).ok_or(GroupError::UnknownGroup(id))?;
        let members: Vec<PeerId> = group.members().collect();
        for p in &members {
            self.membership.remove(p);
        }
        Ok(members)
    }

    /// Checks every group and membership invariant. Used by tests and debug
    /// assertions in the engine.
    pub fn check(&self) -> Result<(), &'static str> {
        let mut seen = BTreeSet::new();
        for (id, g) in &self.groups {
            if g.id != *id {
                return Err("group stored under wrong id");
            }
            if g.clients.contains(&g.owner) {
                return Err("owner listed as client");
            }
            if g.size() > g.max_size {
                return Err("group exceeds max_size");
            }
            for p in g.members() {
                if !seen.insert(p) {
                    return Err("peer in two groups");
                }
                if self.membership.get(&p) != Some(id) {
                    return Err("membership index out of sync");
                }
            }
        }
        if seen.len() != self.membership.len() {
            return Err("stale membership entries");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowKind {
    G2c,
    C2c,
    Bridge,
}

impl FlowKind {
    pub fn hop_count(self) -> u32 {
        match self {
            FlowKind::G2c | FlowKind::Bridge => 1,
            FlowKind::C2c => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FlowKind::G2c => "g2c",
            FlowKind::C2c => "c2c",
            FlowKind::Bridge => "bridge",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Flow {
    pub src: PeerId,
    pub dst: PeerId,
    pub kind: FlowKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FlowPattern {
    pub flows: Vec<Flow>,
}

/// Lookup key of one flow inside a pattern signature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FlowKey {
    pub kind: FlowKind,
    /// Another flow of the same group ends at this flow's destination.
    #[serde(default)]
    pub shares_sink: bool,
}

/// Keys of `flows`, in order.
pub fn flow_keys(flows: &[Flow]) -> Vec<FlowKey> {
    flows
        .iter()
        .enumerate()
        .map(|(i, f)| FlowKey {
            kind: f.kind,
            shares_sink: flows.iter().enumerate().any(|(j, g)| j != i && g.dst == f.dst),
        })
        .collect()
}

fn same_multiset(a: &[FlowKey], b: &[FlowKey]) -> bool {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort();
    b.sort();
    a == b
}

/// Maps each query key to a distinct position of `table_keys` with the same
/// key, first unused first.
fn align(query: &[FlowKey], table_keys: &[FlowKey]) -> Option<Vec<usize>> {
    let mut used = vec![false; table_keys.len()];
    query
        .iter()
        .map(|k| {
            let pos = (0..table_keys.len()).find(|&j| !used[j] && table_keys[j] == *k)?;
            used[pos] = true;
            Some(pos)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalEntry {
    pub group_size: usize,
    pub flows: Vec<FlowKey>,
    /// Mbps, one per flow.
    pub rates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EmpiricalTable {
    #[serde(default, rename = "entry")]
    pub entries: Vec<EmpiricalEntry>,
}

const fn key(kind: FlowKind, shares_sink: bool) -> FlowKey {
    FlowKey { kind, shares_sink }
}

impl EmpiricalTable {
    /// Measured WiFi-Direct throughputs for groups of two to four peers.
    pub fn measured_default() -> Self {
        let g = key(FlowKind::G2c, false);
        let c = key(FlowKind::C2c, false);
        let gs = key(FlowKind::G2c, true);
        let cs = key(FlowKind::C2c, true);
        let e = |group_size, flows: &[FlowKey], rates: &[f64]| EmpiricalEntry {
            group_size,
            flows: flows.to_vec(),
            rates: rates.to_vec(),
        };
        EmpiricalTable {
            entries: vec![
                e(2, &[g], &[54.4]),
                e(3, &[g], &[52.6]),
                e(3, &[c], &[22.3]),
                e(3, &[g, c], &[44.3, 4.24]),
                e(4, &[g], &[52.75]),
                e(4, &[c], &[17.0]),
                e(4, &[g, c], &[40.0, 5.41]),
                e(4, &[cs, cs], &[12.7, 9.07]),
                e(4, &[gs, cs, cs], &[37.4, 2.9, 3.22]),
            ],
        }
    }

    pub fn validate(&self) -> Result<(), GroupError> {
        for e in &self.entries {
            if e.flows.is_empty() || e.flows.len() != e.rates.len() {
                return Err(GroupError::InvalidParams("every table entry needs one rate per flow"));
            }
            if e.group_size < 2 {
                return Err(GroupError::InvalidParams("table group sizes start at 2"));
            }
            if e.rates.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
                return Err(GroupError::InvalidParams("table rates must be positive"));
            }
            if e.flows.iter().any(|k| k.kind == FlowKind::Bridge) {
                return Err(GroupError::InvalidParams("bridge flows use bridge_rate, not the table"));
            }
        }
        Ok(())
    }

    /// Per-flow rates for an intra-group pattern, if measured.
    pub fn lookup(&self, group_size: usize, keys: &[FlowKey]) -> Option<Vec<f64>> {
        let entry = self
            .entries
            .iter()
            .find(|e| e.group_size == group_size && same_multiset(&e.flows, keys))?;
        let pos = align(keys, &entry.flows)?;
        Some(pos.into_iter().map(|j| entry.rates[j]).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KindWeights {
    pub g2c: f64,
    pub c2c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternWeights {
    pub group_size: usize,
    pub flows: Vec<FlowKey>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityEntry {
    pub group_size: usize,
    pub mbps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticParams {
    /// Medium capacity for sizes without a fitted entry.
    pub default_capacity: f64,
    #[serde(default)]
    pub capacity: Vec<CapacityEntry>,
    pub kind_weights: KindWeights,
    #[serde(default)]
    pub patterns: Vec<PatternWeights>,
}

impl AnalyticParams {
    /// Same capacity at every size and unit weights for both kinds.
    pub fn uniform(capacity: f64) -> Self {
        AnalyticParams {
            default_capacity: capacity,
            capacity: Vec::new(),
            kind_weights: KindWeights { g2c: 1.0, c2c: 1.0 },
            patterns: Vec::new(),
        }
    }

    pub fn capacity_for(&self, group_size: usize) -> f64 {
        self.capacity
            .iter()
            .find(|c| c.group_size == group_size)
            .map_or(self.default_capacity, |c| c.mbps)
    }

    pub fn validate(&self) -> Result<(), GroupError> {
        let pos = |x: f64| x.is_finite() && x > 0.0;
        if !pos(self.default_capacity) || self.capacity.iter().any(|c| !pos(c.mbps)) {
            return Err(GroupError::InvalidParams("capacity must be positive"));
        }
        if !pos(self.kind_weights.g2c) || !pos(self.kind_weights.c2c) {
            return Err(GroupError::InvalidParams("weights must be positive"));
        }
        for p in &self.patterns {
            if p.flows.len() != p.weights.len() || p.weights.iter().any(|w| !pos(*w)) {
                return Err(GroupError::InvalidParams("pattern weights must be positive, one per flow"));
            }
        }
        Ok(())
    }

    fn weights_for(&self, group_size: usize, keys: &[FlowKey]) -> Vec<f64> {
        let fitted = self
            .patterns
            .iter()
            .find(|p| p.group_size == group_size && same_multiset(&p.flows, keys))
            .and_then(|p| align(keys, &p.flows).map(|pos| pos.into_iter().map(|j| p.weights[j]).collect()));
        fitted.unwrap_or_else(|| {
            keys.iter()
                .map(|k| match k.kind {
                    FlowKind::C2c => self.kind_weights.c2c,
                    _ => self.kind_weights.g2c,
                })
                .collect()
        })
    }
}

/// Airtime-share throughput for one group's intra-group flows.
pub fn analytic_rates(capacity: f64, keys: &[FlowKey], weights: &[f64]) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    keys.iter()
        .zip(weights)
        .map(|(k, w)| (w / total) * capacity / f64::from(k.kind.hop_count()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThroughputMode {
    #[default]
    Empirical,
    Analytic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThroughputModelParams {
    pub mode: ThroughputMode,
    pub empirical: EmpiricalTable,
    pub analytic: AnalyticParams,
    pub bridge_rate: f64,
}

impl Default for ThroughputModelParams {
    fn default() -> Self {
        let empirical = EmpiricalTable::measured_default();
        let analytic = calibrate(&empirical).map(|r| r.params).unwrap_or_else(|_| AnalyticParams::uniform(54.4));
        ThroughputModelParams { mode: ThroughputMode::Empirical, empirical, analytic, bridge_rate: DEFAULT_BRIDGE_RATE_MBPS }
    }
}

impl ThroughputModelParams {
    pub fn validate(&self) -> Result<(), GroupError> {
        self.empirical.validate()?;
        self.analytic.validate()?;
        if !(self.bridge_rate.is_finite() && self.bridge_rate > 0.0) {
            return Err(GroupError::InvalidParams("bridge_rate must be positive"));
        }
        Ok(())
    }
}

/// Whether a multi-group link came from the scenario declaration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkOrigin {
    Declared,
    Automatic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BridgeDecl {
    pub bridge: PeerId,
    pub remote_owner: PeerId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct MultiGroupLink {
    bridge: PeerId,
    remote_owner: PeerId,
    local_group: GroupId,
    remote_group: GroupId,
}

impl MultiGroupLink {
    pub fn bridge(&self) -> PeerId {
        self.bridge
    }

    pub fn remote_owner(&self) -> PeerId {
        self.remote_owner
    }

    pub fn local_group(&self) -> GroupId {
        self.local_group
    }

    pub fn remote_group(&self) -> GroupId {
        self.remote_group
    }

    pub fn manually_configured(&self) -> bool {
        true
    }
}

/// Validates a declared bridge against the current topology.
pub fn create_bridge(decl: &BridgeDecl, origin: LinkOrigin, topology: &Topology) -> Result<MultiGroupLink, GroupError> {
    if origin == LinkOrigin::Automatic {
        return Err(GroupError::AutomaticBridge);
    }
    let local = topology
        .group_of(decl.bridge)
        .ok_or(GroupError::InvalidBridge("bridge peer is not in a group"))?;
    if local.owner == decl.bridge {
        return Err(GroupError::InvalidBridge("bridge peer must be a client, not an owner"));
    }
    let remote = topology
        .group_of(decl.remote_owner)
        .ok_or(GroupError::InvalidBridge("remote owner is not in a group"))?;
    if remote.owner != decl.remote_owner {
        return Err(GroupError::InvalidBridge("remote peer does not own its group"));
    }
    if remote.id == local.id {
        return Err(GroupError::InvalidBridge("bridge must join two different groups"));
    }
    Ok(MultiGroupLink { bridge: decl.bridge, remote_owner: decl.remote_owner, local_group: local.id, remote_group: remote.id })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThroughputResult {
    /// Mbps, aligned with the pattern's flows.
    pub rates: Vec<f64>,
    /// Some group's pattern was not measured and the analytic rule filled in.
    pub extrapolated: bool,
}

fn group_index(groups: &[&Group], a: PeerId, b: PeerId) -> Option<usize> {
    groups.iter().position(|g| g.contains(a) && g.contains(b))
}

fn validate_flow(index: usize, flow: &Flow, groups: &[&Group], links: &[MultiGroupLink]) -> Result<Option<usize>, GroupError> {
    let bad = |reason| GroupError::InvalidFlow { index, reason };
    if flow.src == flow.dst {
        return Err(bad("flow endpoints must differ"));
    }
    match flow.kind {
        FlowKind::G2c | FlowKind::C2c => {
            let gi = group_index(groups, flow.src, flow.dst).ok_or(bad("endpoints are not in one group"))?;
            let owner = groups[gi].owner;
            let owner_ends = usize::from(flow.src == owner) + usize::from(flow.dst == owner);
            match (flow.kind, owner_ends) {
                (FlowKind::G2c, 1) | (FlowKind::C2c, 0) => Ok(Some(gi)),
                (FlowKind::G2c, _) => Err(bad("g2c flow must have the owner as exactly one endpoint")),
                _ => Err(bad("c2c flow endpoints must both be clients")),
            }
        }
        FlowKind::Bridge => {
            let ok = links.iter().any(|l| {
                let remote = groups.iter().find(|g| g.id == l.remote_group);
                let crosses = |here: PeerId, there: PeerId| here == l.bridge && remote.is_some_and(|g| g.contains(there));
                crosses(flow.src, flow.dst) || crosses(flow.dst, flow.src)
            });
            if ok {
                Ok(None)
            } else {
                Err(bad("bridge flow must join a declared bridge to its remote group"))
            }
        }
    }
}

/// Throughput of every flow in `pattern`.
///
/// Intra-group flows are evaluated per group. In empirical mode a group whose
/// (size, signature) is not in the table falls back to the analytic rule and
/// the result is flagged as extrapolated. Bridge flows ride a separate
/// interface and always get `bridge_rate`.
pub fn flow_throughputs(
    groups: &[&Group],
    links: &[MultiGroupLink],
    pattern: &FlowPattern,
    params: &ThroughputModelParams,
) -> Result<ThroughputResult, GroupError> {
    let mut per_group: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut rates = vec![0.0; pattern.flows.len()];
    for (i, flow) in pattern.flows.iter().enumerate() {
        match validate_flow(i, flow, groups, links)? {
            Some(g) => per_group.entry(g).or_default().push(i),
            None => rates[i] = params.bridge_rate,
        }
    }
    let mut extrapolated = false;
    for (g, idx) in per_group {
        let flows: Vec<Flow> = idx.iter().map(|&i| pattern.flows[i]).collect();
        let keys = flow_keys(&flows);
        let size = groups[g].size();
        let measured = match params.mode {
            ThroughputMode::Empirical => params.empirical.lookup(size, &keys),
            ThroughputMode::Analytic => None,
        };
        let group_rates = measured.unwrap_or_else(|| {
            extrapolated |= params.mode == ThroughputMode::Empirical;
            let weights = params.analytic.weights_for(size, &keys);
            analytic_rates(params.analytic.capacity_for(size), &keys, &weights)
        });
        for (&i, r) in idx.iter().zip(group_rates) {
            rates[i] = r;
        }
    }
    Ok(ThroughputResult { rates, extrapolated })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFit {
    pub group_size: usize,
    pub entry: usize,
    pub flow: usize,
    pub kind: FlowKind,
    pub observed: f64,
    pub fitted: f64,
    pub relative_error: f64,
    /// Part of a pattern with more than one concurrent flow.
    pub concurrent: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    pub params: AnalyticParams,
    pub cells: Vec<CellFit>,
}

impl CalibrationReport {
    pub fn worst_concurrent_error(&self) -> f64 {
        self.cells
            .iter()
            .filter(|c| c.concurrent)
            .map(|c| libm::fabs(c.relative_error))
            .fold(0.0, f64::max)
    }
}

/// Fits the analytic model to a measured table by least squares on relative
/// error: one capacity per group size, one weight per flow of each
/// concurrent entry.
///
/// For a fixed capacity `C`, the optimal weights of an entry have a closed
/// form and its residuals are linear in `C`: with `b_i = 1/(h_i·o_i)`,
/// `B1 = Σ h_i·o_i` and `B2 = Σ 1/b_i²`, each residual is
/// `(C − B1)/(b_i·B2)`. The total error `Σ (C − B1)²/B2` is then minimised by
/// the weighted mean `C* = Σ(B1/B2) / Σ(1/B2)`.
pub fn calibrate(table: &EmpiricalTable) -> Result<CalibrationReport, GroupError> {
    table.validate()?;
    if table.entries.is_empty() {
        return Err(GroupError::Calibration("empty table"));
    }
    let stats = |e: &EmpiricalEntry| {
        let b: Vec<f64> = e
            .flows
            .iter()
            .zip(&e.rates)
            .map(|(k, o)| 1.0 / (f64::from(k.kind.hop_count()) * o))
            .collect();
        let b1: f64 = b.iter().map(|x| 1.0 / x).sum();
        let b2: f64 = b.iter().map(|x| 1.0 / (x * x)).sum();
        (b, b1, b2)
    };

    let sizes: BTreeSet<usize> = table.entries.iter().map(|e| e.group_size).collect();
    let mut capacity = Vec::new();
    for &size in &sizes {
        let (num, den) = table
            .entries
            .iter()
            .filter(|e| e.group_size == size)
            .map(stats)
            .fold((0.0, 0.0), |(n, d), (_, b1, b2)| (n + b1 / b2, d + 1.0 / b2));
        capacity.push(CapacityEntry { group_size: size, mbps: num / den });
    }

    let mut cells = Vec::new();
    let mut patterns = Vec::new();
    let mut kind_sums = [(0.0, 0usize); 2];
    for (ei, e) in table.entries.iter().enumerate() {
        let c = capacity.iter().find(|c| c.group_size == e.group_size).map(|c| c.mbps).unwrap_or(0.0);
        let (b, b1, b2) = stats(e);
        let mu_over = (c - b1) / b2;
        let weights: Vec<f64> = b
            .iter()
            .map(|bi| {
                let a = c * bi;
                1.0 / a + (c * mu_over) / (a * a)
            })
            .collect();
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(GroupError::Calibration("fit produced a nonpositive weight"));
        }
        let fitted = analytic_rates(c, &e.flows, &weights);
        let concurrent = e.flows.len() > 1;
        for (fi, ((k, o), t)) in e.flows.iter().zip(&e.rates).zip(&fitted).enumerate() {
            cells.push(CellFit {
                group_size: e.group_size,
                entry: ei,
                flow: fi,
                kind: k.kind,
                observed: *o,
                fitted: *t,
                relative_error: t / o - 1.0,
                concurrent,
            });
        }
        if concurrent {
            for (k, w) in e.flows.iter().zip(&weights) {
                let slot = usize::from(k.kind == FlowKind::C2c);
                kind_sums[slot].0 += w;
                kind_sums[slot].1 += 1;
            }
            patterns.push(PatternWeights { group_size: e.group_size, flows: e.flows.clone(), weights });
        }
    }
    let mean = |(s, n): (f64, usize)| if n == 0 { 1.0 } else { s / n as f64 };
    let g2c_capacities: Vec<f64> = table
        .entries
        .iter()
        .filter(|e| e.flows.len() == 1 && e.flows[0].kind == FlowKind::G2c)
        .map(|e| e.rates[0])
        .collect();
    let default_capacity = if g2c_capacities.is_empty() {
        capacity.iter().map(|c| c.mbps).sum::<f64>() / capacity.len() as f64
    } else {
        g2c_capacities.iter().sum::<f64>() / g2c_capacities.len() as f64
    };
    let params = AnalyticParams {
        default_capacity,
        capacity,
        kind_weights: KindWeights { g2c: mean(kind_sums[0]), c2c: mean(kind_sums[1]) },
        patterns,
    };
    params.validate()?;
    Ok(CalibrationReport { params, cells })
}
