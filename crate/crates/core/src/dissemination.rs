//! Tag-based, interest-driven content dissemination between peers.
//!
//! Each peer carries a [`UserProfile`] of interest weights in `[0, 1]` and a
//! bounded [`Cache`]. The utility of an item for a user is the mean interest
//! weight over the item's tags. When two peers meet, profiles and holdings
//! are exchanged for free; each side then pushes the items the other does
//! not hold whose utility for the receiver reaches `theta`, best first, as
//! far as the contact's byte budget allows.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::group_net::PeerId;
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContentId(pub u64);

impl fmt::Display for ContentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContentKind {
    Post,
    Comment,
    Photo,
    SensorData,
}

impl ContentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ContentKind::Post => "post",
            ContentKind::Comment => "comment",
            ContentKind::Photo => "photo",
            ContentKind::SensorData => "sensor_data",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "post" => ContentKind::Post,
            "comment" => ContentKind::Comment,
            "photo" => ContentKind::Photo,
            "sensor_data" => ContentKind::SensorData,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContentItem {
    pub id: ContentId,
    pub author: PeerId,
    pub kind: ContentKind,
    pub parent: Option<ContentId>,
    pub tags: BTreeSet<String>,
    /// Bytes.
    pub size: u64,
    pub created_at: SimTime,
    /// May be pushed to peers in proximity.
    pub share_in_proximity: bool,
    /// May be uploaded to the observation service.
    pub store_remotely: bool,
    /// Only forwarded to peers whose category is `expert`.
    pub experts_only: bool,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DisseminationError {
    #[error("content must carry at least one tag")]
    Untagged,
    #[error("content size must be positive")]
    EmptyContent,
    #[error("interest weight for '{0}' outside [0, 1]")]
    BadWeight(String),
    #[error("tags must be nonempty strings")]
    EmptyTag,
    #[error("item of {size} bytes exceeds cache capacity {capacity}")]
    TooLarge { size: u64, capacity: u64 },
    #[error("no room: only owner content or higher-utility items remain")]
    NoRoom,
    #[error("invalid parameters: {0}")]
    Params(&'static str),
}

impl ContentItem {
    pub fn validate(&self) -> Result<(), DisseminationError> {
        if self.tags.is_empty() {
            return Err(DisseminationError::Untagged);
        }
        if self.tags.iter().any(|t| t.is_empty()) {
            return Err(DisseminationError::EmptyTag);
        }
        if self.size == 0 {
            return Err(DisseminationError::EmptyContent);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub peer: PeerId,
    pub category: String,
    pub interests: BTreeMap<String, f64>,
    /// Whether the profile is advertised to peers in proximity.
    pub share_in_proximity: bool,
}

impl UserProfile {
    pub fn new(peer: PeerId, category: impl Into<String>, interests: BTreeMap<String, f64>) -> Result<Self, DisseminationError> {
        let p = UserProfile { peer, category: category.into(), interests, share_in_proximity: true };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), DisseminationError> {
        for (tag, w) in &self.interests {
            if tag.is_empty() {
                return Err(DisseminationError::EmptyTag);
            }
            if !(0.0..=1.0).contains(w) {
                return Err(DisseminationError::BadWeight(tag.clone()));
            }
        }
        Ok(())
    }

    pub fn weight(&self, tag: &str) -> f64 {
        self.interests.get(tag).copied().unwrap_or(0.0)
    }

    pub fn is_expert(&self) -> bool {
        self.category == "expert"
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DisseminationParams {
    /// Interest adaptation rate, in (0, 1].
    pub alpha: f64,
    /// Utility threshold for transfer and consumption, in [0, 1].
    pub theta: f64,
    /// Default per-peer buffer in bytes.
    pub buffer_capacity: u64,
}

impl Default for DisseminationParams {
    fn default() -> Self {
        DisseminationParams { alpha: 0.1, theta: 0.2, buffer_capacity: 50_000_000 }
    }
}

impl DisseminationParams {
    pub fn validate(&self) -> Result<(), DisseminationError> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(DisseminationError::Params("alpha must be in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(DisseminationError::Params("theta must be in [0, 1]"));
        }
        Ok(())
    }
}

/// Mean interest weight over the item's tags. Unknown tags count as 0.
pub fn content_utility(profile: &UserProfile, item: &ContentItem) -> f64 {
    if item.tags.is_empty() {
        return 0.0;
    }
    let sum: f64 = item.tags.iter().map(|t| profile.weight(t)).sum();
    (sum / item.tags.len() as f64).clamp(0.0, 1.0)
}

/// Moves the weight of every consumed tag toward 1 by a factor `alpha`:
/// `w' = (1 - alpha)·w + alpha`. Tags new to the profile enter at `alpha`.
pub fn update_interests(profile: &mut UserProfile, consumed: &ContentItem, alpha: f64) {
    for tag in &consumed.tags {
        let w = profile.interests.entry(tag.clone()).or_insert(0.0);
        *w = ((1.0 - alpha) * *w + alpha).min(1.0);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cache {
    owner: PeerId,
    capacity: u64,
    used: u64,
    items: BTreeMap<ContentId, ContentItem>,
}

impl Cache {
    pub fn new(owner: PeerId, capacity: u64) -> Self {
        Cache { owner, capacity, used: 0, items: BTreeMap::new() }
    }

    pub fn owner(&self) -> PeerId {
        self.owner
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    pub fn used(&self) -> u64 {
        self.used
    }

    pub fn contains(&self, id: ContentId) -> bool {
        self.items.contains_key(&id)
    }

    pub fn get(&self, id: ContentId) -> Option<&ContentItem> {
        self.items.get(&id)
    }

    pub fn items(&self) -> impl Iterator<Item = &ContentItem> {
        self.items.values()
    }

    pub fn ids(&self) -> BTreeSet<ContentId> {
        self.items.keys().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Inserts `incoming`, dropping the lowest-utility foreign items (oldest
    /// first on ties) until it fits. The incoming item competes on the same
    /// terms: if it would be the next to go, it is refused and the cache is
    /// left untouched. Items authored by the owner are never dropped.
    ///
    /// Returns the evicted items.
    pub fn evict(&mut self, incoming: ContentItem, owner_profile: &UserProfile) -> Result<Vec<ContentItem>, DisseminationError> {
        if incoming.size > self.capacity {
            return Err(DisseminationError::TooLarge { size: incoming.size, capacity: self.capacity });
        }
        if self.items.contains_key(&incoming.id) {
            return Ok(Vec::new());
        }
        let mut need = (self.used + incoming.size).saturating_sub(self.capacity);
        if need == 0 {
            self.used += incoming.size;
            self.items.insert(incoming.id, incoming);
            return Ok(Vec::new());
        }
        let incoming_key = (content_utility(owner_profile, &incoming), incoming.created_at, incoming.id);
        let incoming_protected = incoming.author == self.owner;
        let mut victims: Vec<(f64, SimTime, ContentId)> = self
            .items
            .values()
            .filter(|it| it.author != self.owner)
            .map(|it| (content_utility(owner_profile, it), it.created_at, it.id))
            .collect();
        victims.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut chosen = Vec::new();
        for v in victims {
            if need == 0 {
                break;
            }
            let before_incoming = v.0.total_cmp(&incoming_key.0).then(v.1.cmp(&incoming_key.1)).then(v.2.cmp(&incoming_key.2)).is_lt();
            if !incoming_protected && !before_incoming {
                return Err(DisseminationError::NoRoom);
            }
            need = need.saturating_sub(self.items[&v.2].size);
            chosen.push(v.2);
        }
        if need > 0 {
            return Err(DisseminationError::NoRoom);
        }
        let mut evicted = Vec::with_capacity(chosen.len());
        for id in chosen {
            if let Some(it) = self.items.remove(&id) {
                self.used -= it.size;
                evicted.push(it);
            }
        }
        self.used += incoming.size;
        self.items.insert(incoming.id, incoming);
        debug_assert!(self.used <= self.capacity);
        Ok(evicted)
    }

    /// Whether `item` would be admitted, without changing the cache.
    pub fn would_admit(&self, item: &ContentItem, owner_profile: &UserProfile) -> bool {
        let mut probe = self.clone();
        probe.evict(item.clone(), owner_profile).is_ok()
    }

    pub fn check(&self) -> Result<(), &'static str> {
        let sum: u64 = self.items.values().map(|i| i.size).sum();
        if sum != self.used {
            return Err("cache accounting drift");
        }
        if sum > self.capacity {
            return Err("cache over capacity");
        }
        Ok(())
    }
}

fn eligible(item: &ContentItem, remote: &UserProfile) -> bool {
    item.share_in_proximity && (!item.experts_only || remote.is_expert())
}

/// Orders `items` for pushing to `remote`: those not held remotely with
/// utility at least `theta`, by utility descending, then oldest, then
/// smallest id. Takes items while the running size stays within `budget`.
pub fn select_items<'a>(
    items: impl Iterator<Item = &'a ContentItem>,
    remote_profile: &UserProfile,
    remote_holdings: &BTreeSet<ContentId>,
    budget: u64,
    theta: f64,
) -> Vec<(&'a ContentItem, f64)> {
    if !remote_profile.share_in_proximity {
        return Vec::new();
    }
    let mut candidates: Vec<(&ContentItem, f64)> = items
        .filter(|it| !remote_holdings.contains(&it.id) && eligible(it, remote_profile))
        .map(|it| (it, content_utility(remote_profile, it)))
        .filter(|(_, u)| *u >= theta)
        .collect();
    candidates.sort_by(|(a, ua), (b, ub)| ub.total_cmp(ua).then(a.created_at.cmp(&b.created_at)).then(a.id.cmp(&b.id)));
    let mut spent = 0u64;
    let mut out = Vec::new();
    for (it, u) in candidates {
        match spent.checked_add(it.size) {
            Some(total) if total <= budget => {
                spent = total;
                out.push((it, u));
            }
            _ => break,
        }
    }
    out
}

/// [`select_items`] over a whole cache.
pub fn select_items_for_transfer<'a>(
    local: &'a Cache,
    remote_profile: &UserProfile,
    remote_holdings: &BTreeSet<ContentId>,
    budget: u64,
    theta: f64,
) -> Vec<&'a ContentItem> {
    select_items(local.items(), remote_profile, remote_holdings, budget, theta)
        .into_iter()
        .map(|(it, _)| it)
        .collect()
}

/// Everything one peer contributes to a contact.
#[derive(Debug, Clone)]
pub struct PeerState {
    pub profile: UserProfile,
    pub cache: Cache,
    /// Items received during the current tick; not forwarded until the next.
    pub fresh: BTreeSet<ContentId>,
}

impl PeerState {
    pub fn new(profile: UserProfile, capacity: u64) -> Self {
        let cache = Cache::new(profile.peer, capacity);
        PeerState { profile, cache, fresh: BTreeSet::new() }
    }

    pub fn peer(&self) -> PeerId {
        self.profile.peer
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferRecord {
    pub time: SimTime,
    pub sender: PeerId,
    pub receiver: PeerId,
    pub content: ContentId,
    pub bytes: u64,
    pub utility: f64,
}

impl TransferRecord {
    /// `time,sender,receiver,content_id,bytes,utility` with time in seconds.
    pub fn csv_line(&self) -> String {
        alloc::format!(
            "{:.3},{},{},{},{},{}",
            self.time.as_secs_f64(),
            self.sender,
            self.receiver,
            self.content,
            self.bytes,
            self.utility
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ContactEvent {
    /// Dropped from `peer`'s cache to make room for an incoming item.
    Evict { peer: PeerId, content: ContentId },
    Transfer(TransferRecord),
    /// The receiver found the item relevant and its interests moved.
    Consume { peer: PeerId, content: ContentId, utility: f64 },
}

/// Everything that happened during one contact, in order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ContactLog {
    pub events: Vec<ContactEvent>,
}

impl ContactLog {
    pub fn transfers(&self) -> impl Iterator<Item = &TransferRecord> {
        self.events.iter().filter_map(|e| match e {
            ContactEvent::Transfer(t) => Some(t),
            _ => None,
        })
    }

    pub fn consumed(&self) -> usize {
        self.events.iter().filter(|e| matches!(e, ContactEvent::Consume { .. })).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactWindow {
    pub now: SimTime,
    /// Seconds of contact in this exchange.
    pub duration: f64,
    /// Seconds of pairing still owed before data can flow.
    pub setup: f64,
    /// Mbps; infinite means an unbounded budget.
    pub throughput: f64,
}

impl ContactWindow {
    /// Bytes available in each direction: half of the post-setup capacity.
    pub fn budget_per_direction(&self) -> u64 {
        let usable = (self.duration - self.setup).max(0.0);
        if usable == 0.0 || !(self.throughput > 0.0) {
            return 0;
        }
        if self.throughput.is_infinite() {
            return u64::MAX;
        }
        let total = usable * self.throughput * 1e6 / 8.0;
        libm::floor(total / 2.0) as u64
    }
}

fn push(from: &PeerState, to: &mut PeerState, budget: u64, params: &DisseminationParams, now: SimTime, log: &mut ContactLog) {
    let holdings = to.cache.ids();
    let offered = select_items(
        from.cache.items().filter(|it| !from.fresh.contains(&it.id)),
        &to.profile,
        &holdings,
        budget,
        params.theta,
    );
    for (item, utility) in offered {
        let evicted = match to.cache.evict(item.clone(), &to.profile) {
            Ok(ev) => ev,
            // The receiver declines during the offer; nothing is sent.
            Err(_) => continue,
        };
        for e in evicted {
            to.fresh.remove(&e.id);
            log.events.push(ContactEvent::Evict { peer: to.peer(), content: e.id });
        }
        log.events.push(ContactEvent::Transfer(TransferRecord {
            time: now,
            sender: from.peer(),
            receiver: to.peer(),
            content: item.id,
            bytes: item.size,
            utility,
        }));
        to.fresh.insert(item.id);
        let u = content_utility(&to.profile, item);
        if u >= params.theta {
            update_interests(&mut to.profile, item, params.alpha);
            log.events.push(ContactEvent::Consume { peer: to.peer(), content: item.id, utility: u });
        }
    }
}

/// One exchange between two peers in contact.
///
/// Both sides learn each other's profile and holdings up front. `a` pushes
/// to `b` first, then `b` to `a`, each within half of the window's budget.
pub fn handle_contact(a: &mut PeerState, b: &mut PeerState, window: ContactWindow, params: &DisseminationParams) -> ContactLog {
    let mut log = ContactLog::default();
    let budget = window.budget_per_direction();
    if budget == 0 {
        return log;
    }
    push(a, b, budget, params, window.now, &mut log);
    push(b, a, budget, params, window.now, &mut log);
    log
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn tags(ts: &[&str]) -> BTreeSet<String> {
        ts.iter().map(|t| t.to_string()).collect()
    }

    fn profile(peer: u32, ws: &[(&str, f64)]) -> UserProfile {
        UserProfile::new(PeerId(peer), "citizen", ws.iter().map(|(t, w)| (t.to_string(), *w)).collect()).unwrap()
    }

    fn item(id: u64, author: u32, ts: &[&str], size: u64, at: u64) -> ContentItem {
        ContentItem {
            id: ContentId(id),
            author: PeerId(author),
            kind: ContentKind::Post,
            parent: None,
            tags: tags(ts),
            size,
            created_at: SimTime(at),
            share_in_proximity: true,
            store_remotely: true,
            experts_only: false,
        }
    }

    #[test]
    fn utility_examples() {
        assert_eq!(content_utility(&profile(0, &[("air", 1.0)]), &item(1, 1, &["air"], 1, 0)), 1.0);
        assert_eq!(content_utility(&profile(0, &[]), &item(1, 1, &["air"], 1, 0)), 0.0);
        let u = content_utility(&profile(0, &[("air", 0.8), ("sport", 0.4)]), &item(1, 1, &["air", "sport"], 1, 0));
        assert!((u - 0.6).abs() < 1e-15);
    }

    #[test]
    fn interest_update_examples() {
        let mut p = profile(0, &[("air", 0.0)]);
        update_interests(&mut p, &item(1, 1, &["air"], 1, 0), 0.1);
        assert!((p.weight("air") - 0.1).abs() < 1e-15);

        let mut p = profile(0, &[("air", 1.0)]);
        update_interests(&mut p, &item(1, 1, &["air"], 1, 0), 0.37);
        assert_eq!(p.weight("air"), 1.0);

        let mut p = profile(0, &[("air", 0.5)]);
        update_interests(&mut p, &item(1, 1, &["noise", "bike"], 1, 0), 0.25);
        assert_eq!(p.weight("air"), 0.5);
        assert_eq!(p.weight("noise"), 0.25);
        assert_eq!(p.weight("bike"), 0.25);
    }

    #[test]
    fn profile_rejects_bad_weights() {
        let bad = UserProfile::new(PeerId(0), "x", [("air".to_string(), 1.5)].into_iter().collect());
        assert_eq!(bad, Err(DisseminationError::BadWeight("air".into())));
    }

    #[test]
    fn selection_examples() {
        let mut cache = Cache::new(PeerId(0), 1000);
        let owner = profile(0, &[]);
        cache.evict(item(1, 0, &["a"], 10, 0), &owner).unwrap();
        cache.evict(item(2, 0, &["b"], 10, 0), &owner).unwrap();
        cache.evict(item(3, 0, &["c"], 10, 0), &owner).unwrap();
        let remote = profile(1, &[("a", 0.9), ("b", 0.5), ("c", 0.1)]);
        let none = BTreeSet::new();
        assert!(select_items_for_transfer(&cache, &remote, &none, 0, 0.2).is_empty());
        let picked: Vec<ContentId> = select_items_for_transfer(&cache, &remote, &none, 15, 0.2).iter().map(|i| i.id).collect();
        assert_eq!(picked, vec![ContentId(1)]);
        let all = cache.ids();
        assert!(select_items_for_transfer(&cache, &remote, &all, u64::MAX, 0.0).is_empty());
        let picked: Vec<ContentId> = select_items_for_transfer(&cache, &remote, &none, 100, 0.2).iter().map(|i| i.id).collect();
        assert_eq!(picked, vec![ContentId(1), ContentId(2)]);
    }

    #[test]
    fn selection_ties_prefer_older_then_smaller_id() {
        let owner = profile(0, &[]);
        let mut cache = Cache::new(PeerId(0), 1000);
        cache.evict(item(5, 0, &["a"], 1, 20), &owner).unwrap();
        cache.evict(item(4, 0, &["a"], 1, 10), &owner).unwrap();
        cache.evict(item(3, 0, &["a"], 1, 20), &owner).unwrap();
        let remote = profile(1, &[("a", 0.5)]);
        let picked: Vec<u64> = select_items_for_transfer(&cache, &remote, &BTreeSet::new(), 100, 0.2).iter().map(|i| i.id.0).collect();
        assert_eq!(picked, vec![4, 3, 5]);
    }

    #[test]
    fn private_and_expert_items_are_filtered() {
        let owner = profile(0, &[]);
        let mut cache = Cache::new(PeerId(0), 1000);
        let mut private = item(1, 0, &["a"], 1, 0);
        private.share_in_proximity = false;
        let mut raw = item(2, 0, &["a"], 1, 0);
        raw.experts_only = true;
        cache.evict(private, &owner).unwrap();
        cache.evict(raw, &owner).unwrap();
        let citizen = profile(1, &[("a", 1.0)]);
        assert!(select_items_for_transfer(&cache, &citizen, &BTreeSet::new(), 100, 0.0).is_empty());
        let mut expert = citizen.clone();
        expert.category = "expert".into();
        let picked: Vec<u64> = select_items_for_transfer(&cache, &expert, &BTreeSet::new(), 100, 0.0).iter().map(|i| i.id.0).collect();
        assert_eq!(picked, vec![2]);
        let mut hidden = expert.clone();
        hidden.share_in_proximity = false;
        assert!(select_items_for_transfer(&cache, &hidden, &BTreeSet::new(), 100, 0.0).is_empty());
    }

    #[test]
    fn eviction_examples() {
        let owner = profile(0, &[("a", 0.9), ("b", 0.5), ("c", 0.1), ("d", 0.7)]);
        let mut cache = Cache::new(PeerId(0), 30);
        assert!(cache.evict(item(1, 1, &["a"], 10, 0), &owner).unwrap().is_empty());
        cache.evict(item(2, 1, &["b"], 10, 1), &owner).unwrap();
        cache.evict(item(3, 1, &["c"], 10, 2), &owner).unwrap();
        // Full. Incoming 0.7 beats the 0.1 item, which goes.
        let ev = cache.evict(item(4, 1, &["d"], 10, 3), &owner).unwrap();
        assert_eq!(ev.iter().map(|i| i.id.0).collect::<Vec<_>>(), vec![3]);
        assert_eq!(cache.ids(), [1, 2, 4].into_iter().map(ContentId).collect());
        // Incoming with the lowest utility is refused.
        assert_eq!(cache.evict(item(5, 1, &["c"], 10, 4), &owner), Err(DisseminationError::NoRoom));
        assert_eq!(cache.len(), 3);
        cache.check().unwrap();
    }

    #[test]
    fn owner_content_is_never_evicted() {
        let owner = profile(0, &[("a", 0.0), ("z", 1.0)]);
        let mut cache = Cache::new(PeerId(0), 20);
        cache.evict(item(1, 0, &["a"], 10, 0), &owner).unwrap();
        cache.evict(item(2, 0, &["a"], 10, 0), &owner).unwrap();
        assert_eq!(cache.evict(item(3, 7, &["z"], 10, 5), &owner), Err(DisseminationError::NoRoom));
        assert_eq!(cache.evict(item(4, 7, &["z"], 21, 5), &owner), Err(DisseminationError::TooLarge { size: 21, capacity: 20 }));
    }

    #[test]
    fn own_content_displaces_foreign_items() {
        let owner = profile(0, &[("a", 1.0)]);
        let mut cache = Cache::new(PeerId(0), 20);
        cache.evict(item(1, 5, &["a"], 10, 0), &owner).unwrap();
        cache.evict(item(2, 5, &["a"], 10, 0), &owner).unwrap();
        let ev = cache.evict(item(3, 0, &["zzz"], 10, 9), &owner).unwrap();
        assert_eq!(ev.len(), 1);
        assert!(cache.contains(ContentId(3)));
    }

    fn peer(id: u32, ws: &[(&str, f64)], cap: u64) -> PeerState {
        PeerState::new(profile(id, ws), cap)
    }

    #[test]
    fn contact_within_setup_transfers_nothing() {
        let mut a = peer(0, &[("x", 1.0)], 1 << 30);
        let mut b = peer(1, &[("x", 1.0)], 1 << 30);
        let p = a.profile.clone();
        a.cache.evict(item(1, 0, &["x"], 10, 0), &p).unwrap();
        let w = ContactWindow { now: SimTime(0), duration: 2.0, setup: 2.0, throughput: 54.4 };
        let log = handle_contact(&mut a, &mut b, w, &DisseminationParams::default());
        assert!(log.events.is_empty());
    }

    #[test]
    fn unbounded_contact_fully_syncs() {
        let mut a = peer(0, &[("x", 1.0)], u64::MAX / 4);
        let mut b = peer(1, &[("x", 1.0)], u64::MAX / 4);
        for i in 0..5 {
            let pa = a.profile.clone();
            a.cache.evict(item(i, 0, &["x"], 1000 + i, i), &pa).unwrap();
            let pb = b.profile.clone();
            b.cache.evict(item(100 + i, 1, &["x"], 1000, i), &pb).unwrap();
        }
        let w = ContactWindow { now: SimTime(0), duration: 1.0, setup: 0.0, throughput: f64::INFINITY };
        let log = handle_contact(&mut a, &mut b, w, &DisseminationParams::default());
        assert_eq!(log.transfers().count(), 10);
        assert_eq!(a.cache.ids(), b.cache.ids());
        assert_eq!(log.consumed(), 10);
    }

    #[test]
    fn budget_caps_transfers_per_direction() {
        // 54.4 Mbps for one second: 6.8 MB, 3.4 MB each way.
        let w = ContactWindow { now: SimTime(0), duration: 3.0, setup: 2.0, throughput: 54.4 };
        assert_eq!(w.budget_per_direction(), 3_400_000);
        let mut a = peer(0, &[("x", 1.0)], 1 << 30);
        let mut b = peer(1, &[("x", 1.0)], 1 << 30);
        for i in 0..6 {
            let pa = a.profile.clone();
            a.cache.evict(item(i, 0, &["x"], 1_000_000, i), &pa).unwrap();
            let pb = b.profile.clone();
            b.cache.evict(item(100 + i, 1, &["x"], 1_000_000, i), &pb).unwrap();
        }
        let log = handle_contact(&mut a, &mut b, w, &DisseminationParams::default());
        let ab = log.transfers().filter(|t| t.sender == PeerId(0)).count();
        let ba = log.transfers().filter(|t| t.sender == PeerId(1)).count();
        assert_eq!((ab, ba), (3, 3));
    }

    #[test]
    fn fresh_items_are_not_forwarded() {
        let mut a = peer(0, &[("x", 1.0)], 1 << 20);
        let mut b = peer(1, &[("x", 1.0)], 1 << 20);
        let pa = a.profile.clone();
        a.cache.evict(item(1, 9, &["x"], 10, 0), &pa).unwrap();
        a.fresh.insert(ContentId(1));
        let w = ContactWindow { now: SimTime(0), duration: 1.0, setup: 0.0, throughput: f64::INFINITY };
        assert!(handle_contact(&mut a, &mut b, w, &DisseminationParams::default()).events.is_empty());
    }

    proptest::proptest! {
        #[test]
        fn utility_bounded_and_monotone(ws in proptest::collection::vec(0.0f64..=1.0, 1..6), bump in 0usize..6, delta in 0.0f64..1.0) {
            let names = ["a", "b", "c", "d", "e", "f"];
            let p = UserProfile::new(PeerId(0), "c", ws.iter().enumerate().map(|(i, w)| (names[i].to_string(), *w)).collect()).unwrap();
            let it = item(1, 1, &names[..ws.len()], 1, 0);
            let u = content_utility(&p, &it);
            proptest::prop_assert!((0.0..=1.0).contains(&u));
            let mut q = p.clone();
            let k = names[bump % ws.len()];
            let w = q.interests[k];
            q.interests.insert(k.to_string(), (w + delta).min(1.0));
            proptest::prop_assert!(content_utility(&q, &it) >= u);
            // A zero-weight tag never helps.
            let mut wider = it.clone();
            wider.tags.insert("zzz".into());
            proptest::prop_assert!(content_utility(&p, &wider) <= u);
        }

        #[test]
        fn interest_update_contracts_toward_one(w in 0.0f64..=1.0, alpha in 0.001f64..=1.0) {
            let mut p = profile(0, &[("x", w)]);
            update_interests(&mut p, &item(1, 1, &["x"], 1, 0), alpha);
            let w2 = p.weight("x");
            proptest::prop_assert!((0.0..=1.0).contains(&w2));
            proptest::prop_assert!(((1.0 - w2) - (1.0 - alpha) * (1.0 - w)).abs() < 1e-12);
        }

        #[test]
        fn cache_never_exceeds_capacity(ops in proptest::collection::vec((0u64..40, 1u64..30, 0u32..3, 0usize..4), 1..60)) {
            let names = ["a", "b", "c", "d"];
            let owner = profile(0, &[("a", 0.9), ("b", 0.4), ("c", 0.1)]);
            let mut cache = Cache::new(PeerId(0), 60);
            for (id, size, author, t) in ops {
                let before = cache.ids();
                let res = cache.evict(item(id, author, &[names[t]], size, id), &owner);
                if let Ok(ev) = &res {
                    for e in ev {
                        proptest::prop_assert!(e.author != PeerId(0));
                    }
                } else {
                    proptest::prop_assert_eq!(cache.ids(), before);
                }
                proptest::prop_assert_eq!(cache.check(), Ok(()));
            }
        }
    }
}
