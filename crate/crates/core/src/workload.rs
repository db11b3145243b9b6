//! Synthetic social workloads: posts, comments, photos and user-created tags.
//!
//! Per-user and per-post counts follow a negative binomial shifted by the
//! measure's minimum and clamped at its maximum, with latent parameters
//! solved so the clamped distribution has the configured mean and (where
//! reachable) standard deviation.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dissemination::{ContentId, ContentKind};
use crate::group_net::PeerId;
use crate::rng::SplitMix64;
use crate::time::SimTime;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WorkloadError {
    #[error("{measure}: {reason}")]
    Measure { measure: &'static str, reason: &'static str },
    #[error("invalid parameters: {0}")]
    Params(&'static str),
    #[error("event {index}: {reason}")]
    Event { index: usize, reason: String },
}

/// Target statistics for one count measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measure {
    pub mean: f64,
    pub sd: f64,
    pub min: u32,
    pub max: u32,
}

impl Measure {
    pub const fn new(mean: f64, sd: f64, min: u32, max: u32) -> Self {
        Measure { mean, sd, min, max }
    }

    fn validate(&self, name: &'static str) -> Result<(), WorkloadError> {
        let err = |reason| Err(WorkloadError::Measure { measure: name, reason });
        if self.min > self.max {
            return err("min exceeds max");
        }
        if !(self.mean.is_finite() && self.mean >= f64::from(self.min) && self.mean <= f64::from(self.max)) {
            return err("mean outside [min, max]");
        }
        if !(self.sd.is_finite() && self.sd >= 0.0) {
            return err("sd must be nonnegative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkloadParams {
    pub n_users: u32,
    /// Seconds.
    pub session_length: f64,
    pub posts_per_user: Measure,
    pub tags_per_post: Measure,
    pub comments_per_user: Measure,
    pub tags_created_per_user: Measure,
    pub photos_per_post: Measure,
    pub photo_attach_probability: f64,
    /// Pre-defined tags offered by the application.
    pub vocabulary: Vec<String>,
    pub post_size: u64,
    pub comment_size: u64,
    pub photo_size: u64,
}

pub const DEFAULT_VOCABULARY: [&str; 10] =
    ["air", "traffic", "noise", "health", "sport", "culture", "events", "environment", "mobility", "food"];

impl Default for WorkloadParams {
    fn default() -> Self {
        WorkloadParams {
            n_users: 22,
            session_length: 3.0 * 3600.0,
            posts_per_user: Measure::new(1.77, 2.18, 0, 8),
            tags_per_post: Measure::new(1.72, 1.19, 1, 5),
            comments_per_user: Measure::new(6.86, 5.58, 0, 21),
            tags_created_per_user: Measure::new(2.32, 3.01, 0, 12),
            photos_per_post: Measure::new(1.22, 0.73, 1, 4),
            // 22 photos at 1.22 per illustrated post is 18 of 39 posts.
            photo_attach_probability: 18.0 / 39.0,
            vocabulary: DEFAULT_VOCABULARY.iter().map(|s| s.to_string()).collect(),
            post_size: 2_000,
            comment_size: 500,
            photo_size: 1_500_000,
        }
    }
}

impl WorkloadParams {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        self.posts_per_user.validate("posts_per_user")?;
        self.tags_per_post.validate("tags_per_post")?;
        self.comments_per_user.validate("comments_per_user")?;
        self.tags_created_per_user.validate("tags_created_per_user")?;
        self.photos_per_post.validate("photos_per_post")?;
        if !(self.session_length.is_finite() && self.session_length > 0.0) {
            return Err(WorkloadError::Params("session_length must be positive"));
        }
        if !(0.0..=1.0).contains(&self.photo_attach_probability) {
            return Err(WorkloadError::Params("photo_attach_probability must be in [0, 1]"));
        }
        let posts_possible = self.posts_per_user.max > 0 && self.posts_per_user.mean > 0.0;
        if posts_possible {
            if self.tags_per_post.min == 0 {
                return Err(WorkloadError::Measure { measure: "tags_per_post", reason: "every post needs at least one tag" });
            }
            if self.photo_attach_probability > 0.0 && self.photos_per_post.min == 0 {
                return Err(WorkloadError::Measure { measure: "photos_per_post", reason: "an attached photo set holds at least one photo" });
            }
            let distinct: BTreeSet<&String> = self.vocabulary.iter().collect();
            if distinct.len() != self.vocabulary.len() || distinct.iter().any(|t| t.is_empty()) {
                return Err(WorkloadError::Params("vocabulary entries must be distinct and nonempty"));
            }
            if distinct.len() < self.tags_per_post.max as usize {
                return Err(WorkloadError::Params("vocabulary smaller than tags_per_post.max"));
            }
        }
        for t in &self.vocabulary {
            if t.contains(['|', ',', '\n']) {
                return Err(WorkloadError::Params("tags may not contain '|', ',' or newlines"));
            }
        }
        Ok(())
    }
}

/// A count distribution on `[min, max]`: `min + min(Y, max - min)` with
/// `Y` negative binomial.
#[derive(Debug, Clone, PartialEq)]
pub struct CountDistribution {
    min: u32,
    pmf: Vec<f64>,
    cdf: Vec<f64>,
}

const R_LO: f64 = 1e-3;
const R_HI: f64 = 1e6;

fn nb_clamped_pmf(r: f64, mu: f64, span: u32) -> Vec<f64> {
    let n = span as usize + 1;
    let mut pmf = vec![0.0; n];
    if mu <= 0.0 || span == 0 {
        pmf[0] = 1.0;
        return pmf;
    }
    let p = r / (r + mu);
    let lp = libm::log(p);
    let lq = libm::log1p(-p);
    let lg_r = libm::lgamma(r);
    let mut acc = 0.0;
    for (k, slot) in pmf.iter_mut().enumerate().take(n - 1) {
        let kf = k as f64;
        let lpmf = libm::lgamma(kf + r) - lg_r - libm::lgamma(kf + 1.0) + r * lp + kf * lq;
        *slot = libm::exp(lpmf);
        acc += *slot;
    }
    pmf[n - 1] = (1.0 - acc).max(0.0);
    pmf
}

fn moments(pmf: &[f64]) -> (f64, f64) {
    let mean: f64 = pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
    let var: f64 = pmf.iter().enumerate().map(|(k, p)| (k as f64 - mean) * (k as f64 - mean) * p).sum();
    (mean, var)
}

/// Latent mean giving clamped mean `target` at dispersion `r`.
fn solve_mu(r: f64, target: f64, span: u32) -> f64 {
    let mean_at = |mu: f64| moments(&nb_clamped_pmf(r, mu, span)).0;
    let mut lo = 0.0;
    let mut hi = target.max(1.0);
    while mean_at(hi) < target && hi < 1e12 {
        hi *= 2.0;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mean_at(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

impl CountDistribution {
    /// Fits the clamped negative binomial to `m`. The mean is always met;
    /// the variance is met when it lies between the most dispersed feasible
    /// and the near-Poisson (`r = 1e6`) clamped variances, and is otherwise
    /// the nearer of the two.
    pub fn fit(m: &Measure) -> Self {
        let span = m.max - m.min;
        let target = m.mean - f64::from(m.min);
        let pmf = if span == 0 || target <= 0.0 {
            nb_clamped_pmf(1.0, 0.0, span)
        } else if target >= f64::from(span) {
            let mut p = vec![0.0; span as usize + 1];
            p[span as usize] = 1.0;
            p
        } else {
            let v = m.sd * m.sd;
            let var_at = |lr: f64| {
                let r = libm::exp(lr);
                moments(&nb_clamped_pmf(r, solve_mu(r, target, span), span)).1
            };
            // Very small r cannot reach a high clamped mean at any latent
            // mean; start from the most dispersed r that can.
            let mut r_lo = R_LO;
            while r_lo < R_HI && moments(&nb_clamped_pmf(r_lo, 1e12, span)).0 < target + 1e-6 {
                r_lo *= 1.5;
            }
            let (mut lo, mut hi) = (libm::log(r_lo), libm::log(R_HI));
            let lr = if v >= var_at(lo) {
                lo
            } else if v <= var_at(hi) {
                hi
            } else {
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    // Variance falls as r grows.
                    if var_at(mid) > v {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            };
            let r = libm::exp(lr);
            nb_clamped_pmf(r, solve_mu(r, target, span), span)
        };
        let mut cdf = Vec::with_capacity(pmf.len());
        let mut acc = 0.0;
        for p in &pmf {
            acc += p;
            cdf.push(acc);
        }
        CountDistribution { min: m.min, pmf, cdf }
    }

    pub fn mean(&self) -> f64 {
        f64::from(self.min) + moments(&self.pmf).0
    }

    pub fn sd(&self) -> f64 {
        libm::sqrt(moments(&self.pmf).1)
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn sample(&self, rng: &mut SplitMix64) -> u32 {
        let u = rng.next_f64() * self.cdf[self.cdf.len() - 1];
        let k = self.cdf.iter().position(|&c| u < c).unwrap_or(self.cdf.len() - 1);
        self.min + k as u32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    TagCreated,
    Post,
    Photo,
    Comment,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::TagCreated => "tag",
            EventKind::Post => "post",
            EventKind::Photo => "photo",
            EventKind::Comment => "comment",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "tag" => EventKind::TagCreated,
            "post" => EventKind::Post,
            "photo" => EventKind::Photo,
            "comment" => EventKind::Comment,
            _ => return None,
        })
    }

    pub fn content_kind(self) -> Option<ContentKind> {
        match self {
            EventKind::TagCreated => None,
            EventKind::Post => Some(ContentKind::Post),
            EventKind::Photo => Some(ContentKind::Photo),
            EventKind::Comment => Some(ContentKind::Comment),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkloadEvent {
    pub time: SimTime,
    pub user: PeerId,
    pub kind: EventKind,
    pub id: ContentId,
    pub parent: Option<ContentId>,
    /// For a created tag, the single new tag.
    pub tags: BTreeSet<String>,
    pub size: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Workload {
    pub n_users: u32,
    pub events: Vec<WorkloadEvent>,
}

impl Workload {
    /// Time order, id uniqueness, user range, parent kinds and precedence,
    /// and at least one tag on every content item.
    pub fn validate(&self) -> Result<(), WorkloadError> {
        let mut seen: BTreeMap<ContentId, (EventKind, SimTime)> = BTreeMap::new();
        let mut prev: Option<SimTime> = None;
        for (index, e) in self.events.iter().enumerate() {
            let fail = |reason: &str| Err(WorkloadError::Event { index, reason: reason.to_string() });
            if prev.is_some_and(|p| e.time < p) {
                return fail("events out of time order");
            }
            prev = Some(e.time);
            if e.user.0 >= self.n_users {
                return fail("user out of range");
            }
            if seen.insert(e.id, (e.kind, e.time)).is_some() {
                return fail("duplicate id");
            }
            if e.tags.is_empty() {
                return fail("no tags");
            }
            match (e.kind, e.parent) {
                (EventKind::TagCreated | EventKind::Post, None) => {}
                (EventKind::Comment, Some(p)) => match seen.get(&p) {
                    Some((EventKind::Post, t)) if *t < e.time => {}
                    _ => return fail("comment parent must be an earlier post"),
                },
                (EventKind::Photo, Some(p)) => match seen.get(&p) {
                    Some((EventKind::Post, t)) if *t <= e.time => {}
                    _ => return fail("photo parent must be a post"),
                },
                _ => return fail("parent inconsistent with kind"),
            }
        }
        Ok(())
    }
}

struct Pending {
    time: u64,
    user: u32,
    kind: EventKind,
    /// Index of the parent in the pending list.
    parent: Option<usize>,
    tags: BTreeSet<String>,
    size: u64,
}

fn created_tag_name(user: u32, k: u32) -> String {
    format!("u{user}-t{k}")
}

/// Draws a complete workload. Deterministic given `params` and `rng` state.
pub fn generate_workload(params: &WorkloadParams, rng: &mut SplitMix64) -> Result<Workload, WorkloadError> {
    params.validate()?;
    let posts_d = CountDistribution::fit(&params.posts_per_user);
    let tags_d = CountDistribution::fit(&params.tags_per_post);
    let comments_d = CountDistribution::fit(&params.comments_per_user);
    let created_d = CountDistribution::fit(&params.tags_created_per_user);
    let photos_d = CountDistribution::fit(&params.photos_per_post);
    let session_ms = libm::round(params.session_length * 1000.0).max(1.0) as u64;

    let mut pending: Vec<Pending> = Vec::new();
    let mut comment_slots: Vec<(u64, u32)> = Vec::new();
    for user in 0..params.n_users {
        let n_created = created_d.sample(rng);
        let n_posts = posts_d.sample(rng);
        let n_comments = comments_d.sample(rng);
        let mut own: Vec<(u64, String)> = Vec::new();
        for k in 0..n_created {
            let time = rng.below(session_ms);
            let tag = created_tag_name(user, k);
            own.push((time, tag.clone()));
            pending.push(Pending {
                time,
                user,
                kind: EventKind::TagCreated,
                parent: None,
                tags: [tag].into_iter().collect(),
                size: 0,
            });
        }
        for _ in 0..n_posts {
            let time = rng.below(session_ms);
            let mut pool: Vec<&String> = params.vocabulary.iter().collect();
            pool.extend(own.iter().filter(|(t, _)| *t <= time).map(|(_, s)| s));
            let want = (tags_d.sample(rng) as usize).min(pool.len());
            let mut tags = BTreeSet::new();
            // Partial Fisher-Yates over the pool.
            for i in 0..want {
                let j = i + rng.below((pool.len() - i) as u64) as usize;
                pool.swap(i, j);
                tags.insert(pool[i].clone());
            }
            let post_index = pending.len();
            pending.push(Pending { time, user, kind: EventKind::Post, parent: None, tags: tags.clone(), size: params.post_size });
            if rng.bernoulli(params.photo_attach_probability) {
                for _ in 0..photos_d.sample(rng) {
                    pending.push(Pending {
                        time,
                        user,
                        kind: EventKind::Photo,
                        parent: Some(post_index),
                        tags: tags.clone(),
                        size: params.photo_size,
                    });
                }
            }
        }
        for _ in 0..n_comments {
            comment_slots.push((rng.below(session_ms), user));
        }
    }

    let mut posts: Vec<(u64, usize)> =
        pending.iter().enumerate().filter(|(_, p)| p.kind == EventKind::Post).map(|(i, p)| (p.time, i)).collect();
    posts.sort();
    if let Some(&(first, _)) = posts.first() {
        if first + 1 < session_ms {
            for slot in &mut comment_slots {
                if slot.0 <= first {
                    slot.0 = first + 1 + rng.below(session_ms - first - 1);
                }
            }
        } else {
            comment_slots.clear();
        }
        comment_slots.sort();
        let mut received: Vec<u64> = vec![0; posts.len()];
        for (time, user) in comment_slots {
            let eligible = posts.partition_point(|&(t, _)| t < time);
            let total: u64 = received[..eligible].iter().map(|c| 1 + c).sum();
            let mut pick = rng.below(total);
            let mut chosen = 0;
            for (i, c) in received[..eligible].iter().enumerate() {
                if pick < 1 + c {
                    chosen = i;
                    break;
                }
                pick -= 1 + c;
            }
            received[chosen] += 1;
            let parent = posts[chosen].1;
            pending.push(Pending {
                time,
                user,
                kind: EventKind::Comment,
                parent: Some(parent),
                tags: pending[parent].tags.clone(),
                size: params.comment_size,
            });
        }
    }

    let mut order: Vec<usize> = (0..pending.len()).collect();
    order.sort_by_key(|&i| (pending[i].time, pending[i].kind, pending[i].user, i));
    let mut new_id = vec![0u64; pending.len()];
    for (rank, &i) in order.iter().enumerate() {
        new_id[i] = rank as u64 + 1;
    }
    let events = order
        .iter()
        .map(|&i| {
            let p = &pending[i];
            WorkloadEvent {
                time: SimTime(p.time),
                user: PeerId(p.user),
                kind: p.kind,
                id: ContentId(new_id[i]),
                parent: p.parent.map(|j| ContentId(new_id[j])),
                tags: p.tags.clone(),
                size: p.size,
            }
        })
        .collect();
    Ok(Workload { n_users: params.n_users, events })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); 0 when n < 2.
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Self {
        if xs.is_empty() {
            return Summary::default();
        }
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let sd = if n < 2 {
            0.0
        } else {
            libm::sqrt(xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64)
        };
        let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Summary { n, mean, sd, min, max }
    }

    /// Summary of the union of two samples.
    pub fn merge(&self, other: &Summary) -> Summary {
        if self.n == 0 {
            return *other;
        }
        if other.n == 0 {
            return *self;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * nb / n as f64;
        let m2a = self.sd * self.sd * (na - 1.0);
        let m2b = other.sd * other.sd * (nb - 1.0);
        let m2 = m2a + m2b + delta * delta * na * nb / n as f64;
        Summary { n, mean, sd: libm::sqrt(m2 / (n - 1) as f64), min: self.min.min(other.min), max: self.max.max(other.max) }
    }

    pub fn standard_error(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sd / libm::sqrt(self.n as f64)
        }
    }
}

/// The nine measures of the experiment summary table.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WorkloadStats {
    pub posts_per_user: Summary,
    pub tags_per_post: Summary,
    pub comments_per_user: Summary,
    /// Over posts that received at least one comment.
    pub comments_received_per_post: Summary,
    pub tags_created_per_user: Summary,
    /// Over tags used by at least one post.
    pub posts_per_tag: Summary,
    /// Over tags carried by at least one comment.
    pub comments_per_tag: Summary,
    /// Over posts with at least one photo.
    pub photos_per_post: Summary,
    /// Over tags carried by at least one photo.
    pub photos_per_tag: Summary,
}

impl WorkloadStats {
    pub fn rows(&self) -> [(&'static str, Summary); 9] {
        [
            ("posts_per_user", self.posts_per_user),
            ("tags_per_post", self.tags_per_post),
            ("comments_per_user", self.comments_per_user),
            ("comments_received_per_post", self.comments_received_per_post),
            ("tags_created_per_user", self.tags_created_per_user),
            ("posts_per_tag", self.posts_per_tag),
            ("comments_per_tag", self.comments_per_tag),
            ("photos_per_post", self.photos_per_post),
            ("photos_per_tag", self.photos_per_tag),
        ]
    }
}

fn per_key<K: Ord>(counts: BTreeMap<K, u64>) -> Vec<f64> {
    counts.into_values().map(|c| c as f64).collect()
}

pub fn workload_stats(w: &Workload) -> WorkloadStats {
    let users = w.n_users as usize;
    let mut posts_u = vec![0u64; users];
    let mut comments_u = vec![0u64; users];
    let mut created_u = vec![0u64; users];
    let mut tags_post = Vec::new();
    let mut received: BTreeMap<ContentId, u64> = BTreeMap::new();
    let mut photos: BTreeMap<ContentId, u64> = BTreeMap::new();
    let mut post_tag: BTreeMap<&str, u64> = BTreeMap::new();
    let mut comment_tag: BTreeMap<&str, u64> = BTreeMap::new();
    let mut photo_tag: BTreeMap<&str, u64> = BTreeMap::new();
    for e in &w.events {
        let u = e.user.0 as usize;
        let bump = |v: &mut Vec<u64>| {
            if let Some(c) = v.get_mut(u) {
                *c += 1;
            }
        };
        match e.kind {
            EventKind::TagCreated => bump(&mut created_u),
            EventKind::Post => {
                bump(&mut posts_u);
                tags_post.push(e.tags.len() as f64);
                for t in &e.tags {
                    *post_tag.entry(t).or_default() += 1;
                }
            }
            EventKind::Comment => {
                bump(&mut comments_u);
                if let Some(p) = e.parent {
                    *received.entry(p).or_default() += 1;
                }
                for t in &e.tags {
                    *comment_tag.entry(t).or_default() += 1;
                }
            }
            EventKind::Photo => {
                if let Some(p) = e.parent {
                    *photos.entry(p).or_default() += 1;
                }
                for t in &e.tags {
                    *photo_tag.entry(t).or_default() += 1;
                }
            }
        }
    }
    let f = |v: Vec<u64>| -> Vec<f64> { v.into_iter().map(|c| c as f64).collect() };
    WorkloadStats {
        posts_per_user: Summary::of(&f(posts_u)),
        tags_per_post: Summary::of(&tags_post),
        comments_per_user: Summary::of(&f(comments_u)),
        comments_received_per_post: Summary::of(&per_key(received)),
        tags_created_per_user: Summary::of(&f(created_u)),
        posts_per_tag: Summary::of(&per_key(post_tag)),
        comments_per_tag: Summary::of(&per_key(comment_tag)),
        photos_per_post: Summary::of(&per_key(photos)),
        photos_per_tag: Summary::of(&per_key(photo_tag)),
    }
}

/// Per input measure: (name, configured mean, observed summary, within
/// three standard errors). Empty samples pass.
pub fn check_means(params: &WorkloadParams, stats: &WorkloadStats) -> Vec<(&'static str, f64, Summary, bool)> {
    let pairs = [
        ("posts_per_user", params.posts_per_user.mean, stats.posts_per_user),
        ("tags_per_post", params.tags_per_post.mean, stats.tags_per_post),
        ("comments_per_user", params.comments_per_user.mean, stats.comments_per_user),
        ("tags_created_per_user", params.tags_created_per_user.mean, stats.tags_created_per_user),
        ("photos_per_post", params.photos_per_post.mean, stats.photos_per_post),
    ];
    pairs
        .into_iter()
        .map(|(name, target, s)| {
            let ok = s.n == 0 || (s.mean - target).abs() <= 3.0 * s.standard_error() + 1e-12;
            (name, target, s, ok)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn defaults_with(n: u32) -> WorkloadParams {
        WorkloadParams { n_users: n, ..Default::default() }
    }

    #[test]
    fn merged_summary_matches_pooled_sample() {
        let a = [1.0, 4.0, 4.0, 9.0];
        let b = [0.0, 2.5, 7.0];
        let all: Vec<f64> = a.iter().chain(&b).copied().collect();
        let m = Summary::of(&a).merge(&Summary::of(&b));
        let p = Summary::of(&all);
        assert_eq!((m.n, m.min, m.max), (p.n, p.min, p.max));
        assert!((m.mean - p.mean).abs() < 1e-12 && (m.sd - p.sd).abs() < 1e-12);
        assert_eq!(Summary::default().merge(&p), p);
    }

    #[test]
    fn fitted_distributions_hit_configured_moments() {
        let p = WorkloadParams::default();
        for m in [p.posts_per_user, p.tags_per_post, p.comments_per_user, p.tags_created_per_user, p.photos_per_post] {
            let d = CountDistribution::fit(&m);
            assert!((d.mean() - m.mean).abs() < 1e-9, "{m:?} mean {}", d.mean());
            assert!((d.sd() - m.sd).abs() < 1e-6, "{m:?} sd {}", d.sd());
            assert_eq!(d.pmf().len() as u32, m.max - m.min + 1);
            let total: f64 = d.pmf().iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_measures_are_constant() {
        let d = CountDistribution::fit(&Measure::new(0.0, 0.0, 0, 0));
        assert_eq!(d.pmf(), &[1.0]);
        let d = CountDistribution::fit(&Measure::new(3.0, 1.0, 0, 3));
        let mut rng = SplitMix64::new(1);
        assert!((0..100).all(|_| d.sample(&mut rng) == 3));
    }

    #[test]
    fn zero_means_give_empty_workload() {
        let zero = Measure::new(0.0, 0.0, 0, 0);
        let p = WorkloadParams {
            posts_per_user: zero,
            comments_per_user: zero,
            tags_created_per_user: zero,
            tags_per_post: zero,
            photos_per_post: zero,
            ..defaults_with(10)
        };
        let w = generate_workload(&p, &mut SplitMix64::new(5)).unwrap();
        assert!(w.events.is_empty());
    }

    #[test]
    fn invalid_params_rejected() {
        let mut p = WorkloadParams::default();
        p.posts_per_user.mean = 9.0;
        assert!(matches!(p.validate(), Err(WorkloadError::Measure { measure: "posts_per_user", .. })));
        let mut p = WorkloadParams::default();
        p.vocabulary.truncate(3);
        assert!(p.validate().is_err());
        let mut p = WorkloadParams::default();
        p.tags_per_post.min = 0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn structure_holds_across_seeds() {
        let p = defaults_with(30);
        for seed in 0..40 {
            let w = generate_workload(&p, &mut SplitMix64::new(seed)).unwrap();
            w.validate().unwrap();
            let s = workload_stats(&w);
            assert!(s.posts_per_user.max <= 8.0);
            assert!(s.comments_per_user.max <= 21.0);
            assert!(s.tags_created_per_user.max <= 12.0);
            if s.tags_per_post.n > 0 {
                assert!(s.tags_per_post.min >= 1.0 && s.tags_per_post.max <= 5.0);
            }
            if s.photos_per_post.n > 0 {
                assert!(s.photos_per_post.min >= 1.0 && s.photos_per_post.max <= 4.0);
            }
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let p = defaults_with(22);
        let a = generate_workload(&p, &mut SplitMix64::new(11)).unwrap();
        let b = generate_workload(&p, &mut SplitMix64::new(11)).unwrap();
        let c = generate_workload(&p, &mut SplitMix64::new(12)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn means_within_three_standard_errors_at_scale() {
        let p = defaults_with(500);
        let w = generate_workload(&p, &mut SplitMix64::new(2024)).unwrap();
        for (name, target, s, ok) in check_means(&p, &workload_stats(&w)) {
            assert!(ok, "{name}: observed {} vs {target} (se {})", s.mean, s.standard_error());
        }
    }

    #[test]
    fn stats_on_hand_fixture() {
        let ev = |time: u64, user: u32, kind, id: u64, parent: Option<u64>, tags: &[&str]| WorkloadEvent {
            time: SimTime(time),
            user: PeerId(user),
            kind,
            id: ContentId(id),
            parent: parent.map(ContentId),
            tags: tags.iter().map(|s| s.to_string()).collect(),
            size: 1,
        };
        let w = Workload {
            n_users: 3,
            events: vec![
                ev(0, 0, EventKind::Post, 1, None, &["air", "noise"]),
                ev(0, 0, EventKind::Photo, 2, Some(1), &["air", "noise"]),
                ev(1, 1, EventKind::Post, 3, None, &["air"]),
                ev(2, 1, EventKind::Comment, 4, Some(1), &["air", "noise"]),
                ev(3, 2, EventKind::Comment, 5, Some(1), &["air", "noise"]),
                ev(4, 2, EventKind::Comment, 6, Some(3), &["air"]),
            ],
        };
        w.validate().unwrap();
        let s = workload_stats(&w);
        // Users 0,1,2 post 1,1,0 and comment 0,1,2.
        assert!((s.posts_per_user.mean - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.comments_per_user.mean, 1.0);
        assert_eq!(s.tags_per_post.mean, 1.5);
        assert_eq!((s.comments_received_per_post.mean, s.comments_received_per_post.max), (1.5, 2.0));
        // air on 2 posts, noise on 1.
        assert_eq!(s.posts_per_tag.mean, 1.5);
        // air on 3 comments, noise on 2.
        assert_eq!(s.comments_per_tag.mean, 2.5);
        assert_eq!(s.photos_per_post.n, 1);
        assert_eq!(s.photos_per_tag.mean, 1.0);
        assert_eq!(s.tags_created_per_user.mean, 0.0);
    }

    #[test]
    fn empty_workload_stats_are_zero() {
        let s = workload_stats(&Workload::default());
        for (_, row) in s.rows() {
            assert_eq!(row, Summary::default());
        }
    }

    #[test]
    fn comment_on_later_post_is_invalid() {
        let mk = |time, kind, id, parent: Option<u64>| WorkloadEvent {
            time: SimTime(time),
            user: PeerId(0),
            kind,
            id: ContentId(id),
            parent: parent.map(ContentId),
            tags: ["a".to_string()].into_iter().collect(),
            size: 1,
        };
        let w = Workload { n_users: 1, events: vec![mk(5, EventKind::Post, 1, None), mk(5, EventKind::Comment, 2, Some(1))] };
        assert!(w.validate().is_err());
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(48))]
        #[test]
        fn fit_meets_any_feasible_mean(min in 0u32..3, span in 1u32..25, frac in 0.01f64..0.99, sd in 0.0f64..6.0) {
            let m = Measure::new(f64::from(min) + frac * f64::from(span), sd, min, min + span);
            let d = CountDistribution::fit(&m);
            proptest::prop_assert!((d.mean() - m.mean).abs() < 1e-6);
        }
    }
}
