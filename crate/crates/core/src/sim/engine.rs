use alloc::boxed::Box;
use core::cell::Cell;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::config::{ConfigError, ScenarioConfig};
use super::metrics::{compute_metrics, Metrics};
use super::trace::{TraceEvent, TraceKind};
use crate::dissemination::{
    content_utility, handle_contact, select_items, ContactEvent, ContactWindow, ContentId, ContentItem, ContentKind, PeerState,
    UserProfile,
};
use crate::group_net::{
    create_bridge, elect_group_owner, flow_throughputs, Flow, FlowKind, FlowPattern, GroupError, GroupId, LinkOrigin, MultiGroupLink,
    PeerId, Topology,
};
use crate::mobility::{self, NodeState};
use crate::rng::{SplitMix64, Stream};
use crate::sensor_service::{BreakpointTable, Mode, Observations, Role, SensorService, ServiceDescription, ServiceError};
use crate::sme::{estimate_payload_size, TimeWindow};
use crate::time::{SimTime, UtcMillis};
use crate::workload::{generate_workload, EventKind, Workload, WorkloadError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Service(#[from] ServiceError),
    #[error("invariant violated at {time}: {what}")]
    Invariant { time: SimTime, what: String },
}

/// Inputs that come from files rather than the scenario itself.
#[derive(Debug, Clone, Default)]
pub struct EngineInputs {
    pub sensor_service: Option<SensorService>,
    /// Replaces any generated workload. Users map to peers in id order.
    pub workload: Option<Workload>,
}

#[derive(Debug, Clone)]
struct NewContent {
    author: PeerId,
    kind: ContentKind,
    tags: BTreeSet<String>,
    size: u64,
    /// Workload id of the parent, resolved at creation.
    workload_parent: Option<u64>,
    workload_id: Option<u64>,
    share_in_proximity: bool,
    store_remotely: bool,
    experts_only: bool,
}

#[derive(Debug, Clone)]
enum Action {
    Tick,
    Create(Box<NewContent>),
    TagCreated { user: PeerId, tag: String },
    Upload(PeerId),
    End,
}

/// Output of a complete run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub trace: Vec<TraceEvent>,
    pub metrics: Metrics,
}

fn pair(a: PeerId, b: PeerId) -> (PeerId, PeerId) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

fn mode_tag(mode: Mode) -> u8 {
    match mode {
        Mode::Raw => 0,
        Mode::Index => 1,
    }
}

/// Discrete-event engine. Scheduled actions run in `(time, seq)` order;
/// a `Tick` action moves peers, maintains groups and runs exchanges.
pub struct Engine {
    config: ScenarioConfig,
    now: SimTime,
    queue: BTreeMap<(SimTime, u64), Action>,
    next_seq: u64,
    trace: Vec<TraceEvent>,
    nodes: Vec<NodeState>,
    peers: BTreeMap<PeerId, PeerState>,
    roles: BTreeMap<PeerId, Role>,
    intents: BTreeMap<PeerId, u8>,
    topology: Topology,
    links: BTreeMap<(PeerId, PeerId), FlowKind>,
    /// Pairs that have ever met, with pairing time still owed.
    setup_left: BTreeMap<(PeerId, PeerId), f64>,
    mobility_rng: SplitMix64,
    last_move: SimTime,
    items: BTreeMap<ContentId, ContentItem>,
    next_content: u64,
    workload_ids: BTreeMap<u64, ContentId>,
    service: SensorService,
    /// (epoch, mode) -> item, or None when the service had no data.
    sensor_items: BTreeMap<(u64, u8), Option<ContentId>>,
    pending_uploads: BTreeMap<PeerId, BTreeSet<ContentId>>,
    uploaded: BTreeSet<ContentId>,
    /// Trace prefix already checked for ordering.
    trace_checked: Cell<usize>,
    done: bool,
}

impl Engine {
    pub fn new(config: ScenarioConfig, inputs: EngineInputs) -> Result<Self, SimError> {
        config.validate()?;
        let peer_cfgs = config.resolved_peers();
        let ids: Vec<PeerId> = peer_cfgs.iter().map(|p| p.id).collect();

        let mut placement = SplitMix64::derive(config.seed, Stream::Placement);
        let mut profiles_rng = SplitMix64::derive(config.seed, Stream::Profiles);
        let mut nodes = Vec::new();
        let mut peers = BTreeMap::new();
        let mut roles = BTreeMap::new();
        let mut intents = BTreeMap::new();
        for p in &peer_cfgs {
            nodes.push(match p.position {
                Some(at) => NodeState::stationary(p.id, at),
                None => NodeState::random(p.id, &config.mobility, &mut placement),
            });
            let interests = match &p.interests {
                Some(ws) => ws.clone(),
                None if config.profiles.random => {
                    config.profiles.vocabulary.iter().map(|t| (t.clone(), profiles_rng.next_f64())).collect()
                }
                None => config.profiles.interests.clone(),
            };
            let category = match p.role {
                Role::Citizen => "citizen",
                Role::Expert => "expert",
            };
            let mut profile = UserProfile::new(p.id, category, interests).map_err(|e| ConfigError::Invalid {
                field: "peers.interests",
                reason: e.to_string(),
            })?;
            profile.share_in_proximity = p.share_in_proximity;
            let capacity = p.buffer.unwrap_or(config.dissemination.buffer_capacity);
            peers.insert(p.id, PeerState::new(profile, capacity));
            roles.insert(p.id, p.role);
            intents.insert(p.id, p.intent);
        }

        let service = match inputs.sensor_service {
            Some(s) => s,
            None => SensorService::new(ServiceDescription::default(), BreakpointTable::default())?,
        };

        let mut engine = Engine {
            mobility_rng: SplitMix64::derive(config.seed, Stream::Mobility),
            config,
            now: SimTime(0),
            queue: BTreeMap::new(),
            next_seq: 0,
            trace: Vec::new(),
            nodes,
            peers,
            roles,
            intents,
            topology: Topology::new(),
            links: BTreeMap::new(),
            setup_left: BTreeMap::new(),
            last_move: SimTime(0),
            items: BTreeMap::new(),
            next_content: 1,
            workload_ids: BTreeMap::new(),
            service,
            sensor_items: BTreeMap::new(),
            pending_uploads: BTreeMap::new(),
            uploaded: BTreeSet::new(),
            trace_checked: Cell::new(0),
            done: false,
        };

        let duration = SimTime::from_secs_f64(engine.config.duration);
        let workload = match inputs.workload {
            Some(w) => Some(w),
            None => match &engine.config.workload {
                Some(params) => {
                    let mut params = params.clone();
                    params.n_users = ids.len() as u32;
                    Some(generate_workload(&params, &mut SplitMix64::derive(engine.config.seed, Stream::Workload))?)
                }
                None => None,
            },
        };
        if let Some(w) = workload {
            w.validate()?;
            for e in &w.events {
                let Some(&user) = ids.get(e.user.0 as usize) else {
                    return Err(ConfigError::Invalid { field: "workload", reason: format!("user {} has no peer", e.user) }.into());
                };
                if e.time > duration {
                    continue;
                }
                let action = match e.kind.content_kind() {
                    None => Action::TagCreated { user, tag: e.tags.iter().next().cloned().unwrap_or_default() },
                    Some(kind) => Action::Create(Box::new(NewContent {
                        author: user,
                        kind,
                        tags: e.tags.clone(),
                        size: e.size.max(1),
                        workload_parent: e.parent.map(|p| p.0),
                        workload_id: Some(e.id.0),
                        share_in_proximity: true,
                        store_remotely: true,
                        experts_only: false,
                    })),
                };
                if e.kind == EventKind::TagCreated && e.tags.is_empty() {
                    continue;
                }
                engine.schedule(e.time, action);
            }
        }
        for c in engine.config.content.clone() {
            let at = SimTime::from_secs_f64(c.time);
            if at > duration {
                continue;
            }
            engine.schedule(
                at,
                Action::Create(Box::new(NewContent {
                    author: c.author,
                    kind: c.kind,
                    tags: c.tags,
                    size: c.size,
                    workload_parent: None,
                    workload_id: None,
                    share_in_proximity: c.share_in_proximity,
                    store_remotely: c.store_remotely,
                    experts_only: c.experts_only,
                })),
            );
        }
        for u in engine.config.uploads.clone() {
            let at = SimTime::from_secs_f64(u.time);
            if at <= duration {
                engine.schedule(at, Action::Upload(u.peer));
            }
        }
        engine.schedule(SimTime(0), Action::Tick);
        engine.schedule(duration, Action::End);
        Ok(engine)
    }

    fn schedule(&mut self, at: SimTime, action: Action) {
        self.queue.insert((at, self.next_seq), action);
        self.next_seq += 1;
    }

    fn emit(&mut self, kind: TraceKind) -> &mut TraceEvent {
        let seq = self.trace.len() as u64;
        self.trace.push(TraceEvent::new(self.now, seq, kind));
        self.trace.last_mut().expect("just pushed")
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn trace(&self) -> &[TraceEvent] {
        &self.trace
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn peer(&self, id: PeerId) -> Option<&PeerState> {
        self.peers.get(&id)
    }

    pub fn peers(&self) -> impl Iterator<Item = &PeerState> {
        self.peers.values()
    }

    pub fn links(&self) -> &BTreeMap<(PeerId, PeerId), FlowKind> {
        &self.links
    }

    pub fn service(&self) -> &SensorService {
        &self.service
    }

    /// Runs the next scheduled action. Returns `false` once the run is over.
    pub fn advance(&mut self) -> Result<bool, SimError> {
        if self.done {
            return Ok(false);
        }
        let Some(((at, _), action)) = self.queue.pop_first() else {
            self.done = true;
            return Ok(false);
        };
        self.now = at;
        match action {
            Action::Tick => self.tick()?,
            Action::Create(c) => self.create(*c),
            Action::TagCreated { user, tag } => {
                if let Some(p) = self.peers.get_mut(&user) {
                    p.profile.interests.insert(tag, 1.0);
                }
            }
            Action::Upload(peer) => self.queue_uploads(peer),
            Action::End => {
                self.emit(TraceKind::RunEnd);
                self.done = true;
                self.queue.clear();
            }
        }
        Ok(!self.done)
    }

    pub fn run_to_end(&mut self) -> Result<(), SimError> {
        while self.advance()? {}
        Ok(())
    }

    /// Group, link and cache invariants of the current state.
    pub fn check_invariants(&self) -> Result<(), SimError> {
        let fail = |what: &str| Err(SimError::Invariant { time: self.now, what: what.into() });
        if let Err(e) = self.topology.check() {
            return fail(e);
        }
        for p in self.peers.values() {
            if let Err(e) = p.cache.check() {
                return fail(e);
            }
        }
        for (&(a, b), kind) in &self.links {
            let same = self.topology.group_of(a).zip(self.topology.group_of(b)).is_some_and(|(x, y)| x.id == y.id);
            if same == (*kind == FlowKind::Bridge) {
                return fail("link kind disagrees with group membership");
            }
        }
        let from = self.trace_checked.get().saturating_sub(1);
        if self.trace[from..].windows(2).any(|w| (w[0].time, w[0].seq) >= (w[1].time, w[1].seq)) {
            return fail("trace out of order");
        }
        self.trace_checked.set(self.trace.len());
        Ok(())
    }

    fn interested(&self, item: &ContentItem) -> Vec<PeerId> {
        if !item.share_in_proximity && item.kind != ContentKind::SensorData {
            return Vec::new();
        }
        self.peers
            .values()
            .filter(|p| p.peer() != item.author)
            .filter(|p| !item.experts_only || p.profile.is_expert())
            .filter(|p| content_utility(&p.profile, item) >= self.config.dissemination.theta)
            .map(|p| p.peer())
            .collect()
    }

    /// Stores a new item in its author's cache and records it.
    fn publish(&mut self, item: ContentItem) -> bool {
        let author = item.author;
        let Some(state) = self.peers.get_mut(&author) else { return false };
        let profile = state.profile.clone();
        match state.cache.evict(item.clone(), &profile) {
            Ok(evicted) => {
                for e in evicted {
                    let ev = self.emit(TraceKind::Evict);
                    ev.peer = Some(author);
                    ev.id = Some(e.id.0);
                }
                let interested = self.interested(&item);
                let ev = self.emit(TraceKind::ContentCreated);
                ev.peer = Some(author);
                ev.id = Some(item.id.0);
                ev.bytes = Some(item.size);
                ev.label = item.kind.as_str().into();
                ev.list = interested;
                self.items.insert(item.id, item);
                true
            }
            Err(_) => {
                let ev = self.emit(TraceKind::ContentRejected);
                ev.peer = Some(author);
                ev.id = Some(item.id.0);
                ev.bytes = Some(item.size);
                ev.label = item.kind.as_str().into();
                false
            }
        }
    }

    fn fresh_id(&mut self) -> ContentId {
        let id = ContentId(self.next_content);
        self.next_content += 1;
        id
    }

    fn create(&mut self, c: NewContent) {
        let id = self.fresh_id();
        if let Some(w) = c.workload_id {
            self.workload_ids.insert(w, id);
        }
        let item = ContentItem {
            id,
            author: c.author,
            kind: c.kind,
            parent: c.workload_parent.and_then(|p| self.workload_ids.get(&p).copied()),
            tags: c.tags,
            size: c.size,
            created_at: self.now,
            share_in_proximity: c.share_in_proximity,
            store_remotely: c.store_remotely,
            experts_only: c.experts_only,
        };
        self.publish(item);
    }

    fn queue_uploads(&mut self, peer: PeerId) {
        let Some(state) = self.peers.get(&peer) else { return };
        let own: Vec<ContentId> = state
            .cache
            .items()
            .filter(|i| i.author == peer && i.store_remotely && !self.uploaded.contains(&i.id))
            .map(|i| i.id)
            .collect();
        self.pending_uploads.entry(peer).or_default().extend(own);
    }

    fn in_wlan(&self, node: &NodeState) -> bool {
        self.config.access_points.iter().any(|ap| node.position.distance_sq(ap.position) <= ap.range * ap.range)
    }

    fn tick(&mut self) -> Result<(), SimError> {
        let tick_ms = self.config.tick_ms();
        // (1) movement since the previous tick
        let dt = self.now.saturating_sub(self.last_move);
        if dt.0 > 0 {
            mobility::step(&mut self.nodes, &self.config.mobility, self.last_move.as_secs_f64(), dt.as_secs_f64(), &mut self.mobility_rng);
        }
        self.last_move = self.now;
        // (2) contacts
        let contacts = mobility::contacts(&self.nodes, self.config.mobility.range);
        let mut adjacency: BTreeMap<PeerId, BTreeSet<PeerId>> = BTreeMap::new();
        for &(a, b) in &contacts {
            adjacency.entry(a).or_default().insert(b);
            adjacency.entry(b).or_default().insert(a);
        }
        // (3) groups
        self.maintain_groups(&contacts, &adjacency)?;
        // (4) links and contact boundaries
        let mut bridges: Vec<MultiGroupLink> = Vec::new();
        let mut links: BTreeMap<(PeerId, PeerId), FlowKind> = BTreeMap::new();
        for g in self.topology.groups() {
            let members: Vec<PeerId> = g.members().collect();
            for (i, &a) in members.iter().enumerate() {
                for &b in &members[i + 1..] {
                    let kind = if a == g.owner || b == g.owner { FlowKind::G2c } else { FlowKind::C2c };
                    links.insert(pair(a, b), kind);
                }
            }
        }
        for decl in &self.config.bridges {
            if let Ok(link) = create_bridge(decl, LinkOrigin::Declared, &self.topology) {
                if contacts.contains(&pair(decl.bridge, decl.remote_owner)) {
                    links.insert(pair(decl.bridge, decl.remote_owner), FlowKind::Bridge);
                    bridges.push(link);
                }
            }
        }
        let ended: Vec<((PeerId, PeerId), FlowKind)> =
            self.links.iter().filter(|(k, _)| !links.contains_key(*k)).map(|(k, v)| (*k, *v)).collect();
        for ((a, b), kind) in ended {
            let ev = self.emit(TraceKind::ContactEnd);
            ev.peer = Some(a);
            ev.other = Some(b);
            ev.label = kind.as_str().into();
        }
        let setup = self.config.network.pairing_setup;
        for (&(a, b), kind) in &links {
            if !self.links.contains_key(&(a, b)) {
                self.setup_left.entry((a, b)).or_insert(setup);
                let seq = self.trace.len() as u64;
                let mut ev = TraceEvent::new(self.now, seq, TraceKind::ContactBegin);
                ev.peer = Some(a);
                ev.other = Some(b);
                ev.label = kind.as_str().into();
                self.trace.push(ev);
            }
        }
        self.links = links;
        // (5) flows over links with something to send, then exchanges
        for p in self.peers.values_mut() {
            p.fresh.clear();
        }
        let theta = self.config.dissemination.theta;
        let nothing = BTreeSet::new();
        let pending = |x: &PeerState, y: &PeerState| {
            let unheld = x.cache.items().filter(|it| !y.cache.contains(it.id));
            !select_items(unheld, &y.profile, &nothing, u64::MAX, theta).is_empty()
        };
        let busy: Vec<((PeerId, PeerId), FlowKind)> = self
            .links
            .iter()
            .filter(|((a, b), _)| {
                let (x, y) = (&self.peers[a], &self.peers[b]);
                pending(x, y) || pending(y, x)
            })
            .map(|(k, v)| (*k, *v))
            .collect();
        let rates: Vec<f64> = if self.config.network.unbounded {
            alloc::vec![f64::INFINITY; busy.len()]
        } else {
            let flows: Vec<Flow> = busy
                .iter()
                .map(|&((a, b), kind)| match kind {
                    FlowKind::G2c => {
                        let owner = self.topology.group_of(a).map(|g| g.owner);
                        if owner == Some(a) {
                            Flow { src: a, dst: b, kind }
                        } else {
                            Flow { src: b, dst: a, kind }
                        }
                    }
                    FlowKind::C2c => Flow { src: b, dst: a, kind },
                    FlowKind::Bridge => {
                        let a_is_bridge = bridges.iter().any(|l| l.bridge() == a);
                        if a_is_bridge {
                            Flow { src: a, dst: b, kind }
                        } else {
                            Flow { src: b, dst: a, kind }
                        }
                    }
                })
                .collect();
            let groups: Vec<&crate::group_net::Group> = self.topology.groups().collect();
            flow_throughputs(&groups, &bridges, &FlowPattern { flows }, &self.config.network.throughput)?.rates
        };
        let tick_s = self.config.tick;
        for (((a, b), _), rate) in busy.into_iter().zip(rates) {
            let window = ContactWindow { now: self.now, duration: tick_s, setup: self.setup_left[&(a, b)], throughput: rate };
            let mut pa = self.peers.remove(&a).expect("link endpoint");
            let mut pb = self.peers.remove(&b).expect("link endpoint");
            let log = handle_contact(&mut pa, &mut pb, window, &self.config.dissemination);
            self.peers.insert(a, pa);
            self.peers.insert(b, pb);
            for e in log.events {
                match e {
                    ContactEvent::Evict { peer, content } => {
                        let ev = self.emit(TraceKind::Evict);
                        ev.peer = Some(peer);
                        ev.id = Some(content.0);
                    }
                    ContactEvent::Transfer(t) => {
                        let ev = self.emit(TraceKind::Transfer);
                        ev.peer = Some(t.sender);
                        ev.other = Some(t.receiver);
                        ev.id = Some(t.content.0);
                        ev.bytes = Some(t.bytes);
                        ev.value = Some(t.utility);
                    }
                    ContactEvent::Consume { peer, content, utility } => {
                        let ev = self.emit(TraceKind::Consume);
                        ev.peer = Some(peer);
                        ev.id = Some(content.0);
                        ev.value = Some(utility);
                    }
                }
            }
        }
        for k in self.links.keys() {
            if let Some(left) = self.setup_left.get_mut(k) {
                *left = (*left - tick_s).max(0.0);
            }
        }
        // (6) WLAN sensor fetches, (7) uploads
        self.fetch_sensor_data()?;
        self.process_uploads()?;

        let next = SimTime(self.now.0 + tick_ms);
        if next < SimTime::from_secs_f64(self.config.duration) {
            self.schedule(next, Action::Tick);
        }
        Ok(())
    }

    fn maintain_groups(&mut self, contacts: &BTreeSet<(PeerId, PeerId)>, adjacency: &BTreeMap<PeerId, BTreeSet<PeerId>>) -> Result<(), SimError> {
        let linked = |a: PeerId, b: PeerId| contacts.contains(&pair(a, b));
        let ids: Vec<GroupId> = self.topology.groups().map(|g| g.id).collect();
        for gid in ids {
            let Some(g) = self.topology.group(gid).cloned() else { continue };
            for c in g.clients.iter().copied().filter(|&c| !linked(g.owner, c)) {
                self.topology.remove_peer(c)?;
                let ev = self.emit(TraceKind::GroupLeft);
                ev.peer = Some(c);
                ev.id = Some(u64::from(gid.0));
            }
            if self.topology.group(gid).is_some_and(|g| g.clients.is_empty()) {
                let released = self.topology.dissolve(gid)?;
                let ev = self.emit(TraceKind::GroupDissolved);
                ev.id = Some(u64::from(gid.0));
                ev.list = released;
            }
        }
        let max_size = self.config.network.max_group_size;
        let peer_ids: Vec<PeerId> = self.peers.keys().copied().collect();
        let none = BTreeSet::new();
        for p in peer_ids {
            if self.topology.is_grouped(p) {
                continue;
            }
            let join = self.topology.groups().find(|g| g.size() < g.max_size && linked(g.owner, p)).map(|g| g.id);
            if let Some(gid) = join {
                self.topology.admit_client(gid, p)?;
                let ev = self.emit(TraceKind::GroupJoined);
                ev.peer = Some(p);
                ev.id = Some(u64::from(gid.0));
                continue;
            }
            let mut candidates: Vec<PeerId> = alloc::vec![p];
            candidates.extend(adjacency.get(&p).unwrap_or(&none).iter().copied().filter(|q| !self.topology.is_grouped(*q)));
            if candidates.len() < 2 {
                continue;
            }
            let with_intent: Vec<(PeerId, u8)> = candidates.iter().map(|c| (*c, self.intents[c])).collect();
            let owner = elect_group_owner(&with_intent)?;
            let clients: BTreeSet<PeerId> =
                candidates.iter().copied().filter(|&c| c != owner && linked(owner, c)).take(max_size - 1).collect();
            if clients.is_empty() {
                continue;
            }
            let gid = self.topology.form_group(owner, clients.clone(), max_size)?;
            let ev = self.emit(TraceKind::GroupFormed);
            ev.peer = Some(owner);
            ev.id = Some(u64::from(gid.0));
            ev.value = Some((1 + clients.len()) as f64);
            ev.list = clients.into_iter().collect();
        }
        Ok(())
    }

    fn sensor_item(&mut self, epoch: u64, mode: Mode, fetcher: PeerId) -> Result<Option<ContentId>, SimError> {
        if let Some(known) = self.sensor_items.get(&(epoch, mode_tag(mode))) {
            return Ok(*known);
        }
        let interval_ms = libm::round(self.config.sensing.fetch_interval * 1000.0) as i64;
        let window_ms = libm::round(self.config.sensing.window * 1000.0) as i64;
        let end = UtcMillis(self.config.start_utc.0 + epoch as i64 * interval_ms);
        let window = TimeWindow { start: UtcMillis(end.0 - window_ms), end };
        let ids: Vec<String> = if self.config.sensing.sensor_ids.is_empty() {
            self.service.sensor_ids().map(String::from).collect()
        } else {
            self.config.sensing.sensor_ids.clone()
        };
        let id_refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        let role = match mode {
            Mode::Raw => Role::Expert,
            Mode::Index => Role::Citizen,
        };
        let size: usize = match self.service.get_observations(&id_refs, window, mode, role)? {
            Observations::Raw(sets) => sets.iter().map(|s| estimate_payload_size(s.records.len())).sum(),
            // One single-record observation per station.
            Observations::Index(idx) => idx.len() * estimate_payload_size(1),
        };
        if size == 0 {
            self.sensor_items.insert((epoch, mode_tag(mode)), None);
            return Ok(None);
        }
        let id = self.fresh_id();
        let item = ContentItem {
            id,
            author: fetcher,
            kind: ContentKind::SensorData,
            parent: None,
            tags: self.config.sensing.tags.iter().cloned().collect(),
            size: size as u64,
            created_at: self.now,
            share_in_proximity: true,
            store_remotely: false,
            experts_only: mode == Mode::Raw,
        };
        if self.publish(item) {
            self.sensor_items.insert((epoch, mode_tag(mode)), Some(id));
            Ok(Some(id))
        } else {
            Ok(None)
        }
    }

    fn fetch_sensor_data(&mut self) -> Result<(), SimError> {
        if self.config.access_points.is_empty() || self.service.sensor_ids().next().is_none() {
            return Ok(());
        }
        let interval_ms = libm::round(self.config.sensing.fetch_interval * 1000.0).max(1.0) as u64;
        let epoch = self.now.0 / interval_ms;
        let in_range: Vec<PeerId> = self.nodes.iter().filter(|n| self.in_wlan(n)).map(|n| n.peer).collect();
        for peer in in_range {
            let mode = match self.roles[&peer] {
                Role::Expert => Mode::Raw,
                Role::Citizen => Mode::Index,
            };
            if let Some(Some(id)) = self.sensor_items.get(&(epoch, mode_tag(mode))) {
                if self.peers[&peer].cache.contains(*id) {
                    continue;
                }
            }
            let created_now = !self.sensor_items.contains_key(&(epoch, mode_tag(mode)));
            let Some(id) = self.sensor_item(epoch, mode, peer)? else { continue };
            let item = self.items[&id].clone();
            if !created_now || item.author != peer {
                let state = self.peers.get_mut(&peer).expect("known peer");
                let profile = state.profile.clone();
                let Ok(evicted) = state.cache.evict(item.clone(), &profile) else { continue };
                for e in evicted {
                    let ev = self.emit(TraceKind::Evict);
                    ev.peer = Some(peer);
                    ev.id = Some(e.id.0);
                }
            }
            let ev = self.emit(TraceKind::SensorFetch);
            ev.peer = Some(peer);
            ev.id = Some(id.0);
            ev.bytes = Some(item.size);
            ev.label = match mode {
                Mode::Raw => "raw".into(),
                Mode::Index => "index".into(),
            };
        }
        Ok(())
    }

    fn process_uploads(&mut self) -> Result<(), SimError> {
        let waiting: Vec<PeerId> = self.pending_uploads.iter().filter(|(_, s)| !s.is_empty()).map(|(p, _)| *p).collect();
        for peer in waiting {
            let Some(node) = self.nodes.iter().find(|n| n.peer == peer) else { continue };
            if !self.in_wlan(node) {
                continue;
            }
            let ids = core::mem::take(self.pending_uploads.get_mut(&peer).expect("listed"));
            for id in ids {
                if !self.uploaded.insert(id) {
                    continue;
                }
                let item = self.items[&id].clone();
                let size = item.size;
                let receipt = self.service.upload_user_content(item, Vec::new())?;
                let ev = self.emit(TraceKind::Upload);
                ev.peer = Some(peer);
                ev.id = Some(id.0);
                ev.bytes = Some(size);
                ev.value = Some(receipt as f64);
            }
        }
        Ok(())
    }

    /// Finishes the run and computes metrics from the trace.
    pub fn finish(mut self) -> Result<RunOutput, SimError> {
        self.run_to_end()?;
        let metrics = compute_metrics(&self.trace);
        Ok(RunOutput { trace: self.trace, metrics })
    }
}

/// Builds an engine, runs it to the end and returns trace and metrics.
pub fn run(config: ScenarioConfig, inputs: EngineInputs) -> Result<RunOutput, SimError> {
    Engine::new(config, inputs)?.finish()
}
