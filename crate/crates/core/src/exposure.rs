//! Forum-log signals: votes, author reputation, per-student exposure index,
//! seed selection and view-derived contact graphs.
//!
//! Quality labels beyond votes and reputation (content, conduct, sentiment and
//! so on) are never computed here; they arrive precomputed on each post and are
//! used through [`QualityPolicy::ByLabel`].

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{check_probability, ContactGraph, GraphBuilder, StudentId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Quality {
    Good,
    Bad,
}

impl fmt::Display for Quality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Quality::Good => "Good",
            Quality::Bad => "Bad",
        })
    }
}

impl FromStr for Quality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Good" | "good" => Ok(Quality::Good),
            "Bad" | "bad" => Ok(Quality::Bad),
            other => Err(Error::Config(format!("unknown quality label {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostRecord {
    pub post_id: String,
    pub author: StudentId,
    pub week: u32,
    /// Net up/down votes; may be negative.
    pub votes: i64,
    pub quality_label: Option<Quality>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewRecord {
    pub viewer: StudentId,
    pub post_id: String,
    pub week: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum QualityPolicy {
    /// Good iff `votes >= threshold`.
    ByVotes { threshold: i64 },
    /// Good iff the author's reputation is `>= threshold`.
    ByAuthorReputation { threshold: f64 },
    /// Use the precomputed label carried by the post.
    ByLabel,
}

impl Default for QualityPolicy {
    fn default() -> Self {
        QualityPolicy::ByVotes { threshold: 1 }
    }
}

/// How [`select_seeds_with`] ranks students by their own posting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedRanking {
    #[default]
    BadFraction,
    BadCount,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureIndex {
    pub student: StudentId,
    pub positive: f64,
    pub negative: f64,
    pub views_counted: usize,
}

impl ExposureIndex {
    /// False when the student viewed nothing in the window.
    pub fn is_defined(&self) -> bool {
        self.views_counted > 0
    }
}

/// Sum over the student's posts of `sqrt(max(votes, 0))`.
pub fn reputation(log: &[PostRecord], student: &StudentId) -> f64 {
    log.iter()
        .filter(|p| &p.author == student)
        .fold(0.0, |acc, p| acc + vote_root(p.votes))
}

fn vote_root(votes: i64) -> f64 {
    (votes.max(0) as f64).sqrt()
}

fn reputation_table(log: &[PostRecord]) -> HashMap<&StudentId, f64> {
    let mut rep = HashMap::new();
    for p in log {
        *rep.entry(&p.author).or_insert(0.0) += vote_root(p.votes);
    }
    rep
}

/// Classifies posts under one policy, caching author reputations.
struct Classifier<'a> {
    policy: QualityPolicy,
    reputation: HashMap<&'a StudentId, f64>,
}

impl<'a> Classifier<'a> {
    fn new(policy: QualityPolicy, log: &'a [PostRecord]) -> Self {
        let reputation = match policy {
            QualityPolicy::ByAuthorReputation { .. } => reputation_table(log),
            _ => HashMap::new(),
        };
        Self { policy, reputation }
    }

    fn classify(&self, post: &PostRecord) -> Result<Quality> {
        let good = match self.policy {
            QualityPolicy::ByVotes { threshold } => post.votes >= threshold,
            QualityPolicy::ByAuthorReputation { threshold } => {
                self.reputation.get(&post.author).copied().unwrap_or(0.0) >= threshold
            }
            QualityPolicy::ByLabel => {
                return post
                    .quality_label
                    .ok_or_else(|| Error::MissingLabel(post.post_id.clone()))
            }
        };
        Ok(if good { Quality::Good } else { Quality::Bad })
    }
}

pub fn classify_post(post: &PostRecord, policy: QualityPolicy, log: &[PostRecord]) -> Result<Quality> {
    match policy {
        QualityPolicy::ByAuthorReputation { threshold } => Ok(if reputation(log, &post.author) >= threshold {
            Quality::Good
        } else {
            Quality::Bad
        }),
        _ => Classifier::new(policy, &[]).classify(post),
    }
}

fn index_posts(posts: &[PostRecord]) -> Result<HashMap<&str, &PostRecord>> {
    let mut idx = HashMap::with_capacity(posts.len());
    for p in posts {
        if idx.insert(p.post_id.as_str(), p).is_some() {
            return Err(Error::DuplicatePost(p.post_id.clone()));
        }
    }
    Ok(idx)
}

fn check_views(views: &[ViewRecord], idx: &HashMap<&str, &PostRecord>) -> Result<()> {
    match views.iter().find(|v| !idx.contains_key(v.post_id.as_str())) {
        Some(v) => Err(Error::DanglingView {
            viewer: v.viewer.to_string(),
            post_id: v.post_id.clone(),
        }),
        None => Ok(()),
    }
}

fn in_window(week: u32, window: Option<(u32, u32)>) -> bool {
    window.is_none_or(|(lo, hi)| lo <= week && week <= hi)
}

fn index_for(
    student: &StudentId,
    views: &[ViewRecord],
    idx: &HashMap<&str, &PostRecord>,
    classifier: &Classifier<'_>,
    window: Option<(u32, u32)>,
) -> Result<ExposureIndex> {
    let seen: BTreeSet<&str> = views
        .iter()
        .filter(|v| &v.viewer == student && in_window(v.week, window))
        .map(|v| v.post_id.as_str())
        .collect();
    let mut good = 0usize;
    for id in &seen {
        if classifier.classify(idx[id])? == Quality::Good {
            good += 1;
        }
    }
    let total = seen.len();
    let (positive, negative) = if total == 0 {
        (0.0, 0.0)
    } else {
        let pos = good as f64 / total as f64;
        (pos, 1.0 - pos)
    };
    Ok(ExposureIndex {
        student: student.clone(),
        positive,
        negative,
        views_counted: total,
    })
}

/// Share of good posts among the distinct posts `student` viewed, optionally
/// restricted to view weeks in `window` (inclusive).
pub fn exposure_index(
    student: &StudentId,
    views: &[ViewRecord],
    posts: &[PostRecord],
    policy: QualityPolicy,
    window: Option<(u32, u32)>,
) -> Result<ExposureIndex> {
    let idx = index_posts(posts)?;
    check_views(views, &idx)?;
    index_for(student, views, &idx, &Classifier::new(policy, posts), window)
}

/// Top-`k` students by share of their own posts classified Bad.
pub fn select_seeds(log: &[PostRecord], policy: QualityPolicy, k: usize) -> Result<Vec<StudentId>> {
    select_seeds_with(log, policy, k, SeedRanking::BadFraction)
}

/// Ranks posting students by Bad fraction (or count), then by lower
/// reputation, then by id; returns at most `k` of them.
pub fn select_seeds_with(
    log: &[PostRecord],
    policy: QualityPolicy,
    k: usize,
    ranking: SeedRanking,
) -> Result<Vec<StudentId>> {
    if k == 0 {
        return Err(Error::ZeroK);
    }
    if log.is_empty() {
        return Err(Error::EmptyLog);
    }
    let classifier = Classifier::new(policy, log);
    let reps = reputation_table(log);
    // author -> (bad, total)
    let mut tally: BTreeMap<&StudentId, (u64, u64)> = BTreeMap::new();
    for p in log {
        let e = tally.entry(&p.author).or_insert((0, 0));
        if classifier.classify(p)? == Quality::Bad {
            e.0 += 1;
        }
        e.1 += 1;
    }
    let mut ranked: Vec<(&StudentId, u64, u64, f64)> = tally
        .into_iter()
        .map(|(id, (bad, total))| (id, bad, total, reps[id]))
        .collect();
    ranked.sort_by(|a, b| {
        let primary = match ranking {
            // bad_a / total_a vs bad_b / total_b, cross-multiplied to stay exact
            SeedRanking::BadFraction => (u128::from(b.1) * u128::from(a.2)).cmp(&(u128::from(a.1) * u128::from(b.2))),
            SeedRanking::BadCount => b.1.cmp(&a.1),
        };
        primary.then(a.3.total_cmp(&b.3)).then(a.0.cmp(b.0))
    });
    Ok(ranked.into_iter().take(k).map(|r| r.0.clone()).collect())
}

/// Contact graph with an edge author -> viewer for every viewed post.
///
/// A viewer who saw `d` distinct posts of the same author gets
/// `p = 1 - (1 - base_p)^d`, i.e. `d` independent exposures.
pub fn build_contact_graph(views: &[ViewRecord], posts: &[PostRecord], base_p: f64) -> Result<ContactGraph> {
    check_probability(base_p)?;
    let idx = index_posts(posts)?;
    check_views(views, &idx)?;
    let mut seen: BTreeMap<(&StudentId, &StudentId), BTreeSet<&str>> = BTreeMap::new();
    for v in views {
        let author = &idx[v.post_id.as_str()].author;
        if author != &v.viewer {
            seen.entry((author, &v.viewer)).or_default().insert(v.post_id.as_str());
        }
    }
    let mut b = GraphBuilder::new();
    for p in posts {
        b.add_node(p.author.clone());
    }
    for v in views {
        b.add_node(v.viewer.clone());
    }
    for ((src, dst), ids) in seen {
        b.add_edge(src.clone(), dst.clone(), repeated_exposure(base_p, ids.len()))?;
    }
    Ok(b.build())
}

/// `1 - (1 - p)^d`, accumulated so that `d = 1` returns `p` exactly.
pub fn repeated_exposure(p: f64, d: usize) -> f64 {
    let mut acc = 0.0f64;
    for _ in 0..d {
        acc += (1.0 - acc) * p;
    }
    acc.clamp(0.0, 1.0)
}

/// Posts and views checked for duplicate post ids and dangling views.
#[derive(Debug, Clone, Default)]
pub struct ForumLog {
    pub posts: Vec<PostRecord>,
    pub views: Vec<ViewRecord>,
}

/// One row of [`ForumLog::exposure_table`].
#[derive(Debug, Clone, PartialEq)]
pub struct StudentScore {
    pub exposure: ExposureIndex,
    pub reputation: f64,
}

impl ForumLog {
    pub fn new(posts: Vec<PostRecord>, views: Vec<ViewRecord>) -> Result<Self> {
        let idx = index_posts(&posts)?;
        check_views(&views, &idx)?;
        drop(idx);
        Ok(Self { posts, views })
    }

    /// Every author and viewer, in id order.
    pub fn students(&self) -> BTreeSet<&StudentId> {
        self.posts
            .iter()
            .map(|p| &p.author)
            .chain(self.views.iter().map(|v| &v.viewer))
            .collect()
    }

    /// Exposure index and reputation for every student, in id order.
    pub fn exposure_table(&self, policy: QualityPolicy, window: Option<(u32, u32)>) -> Result<Vec<StudentScore>> {
        let idx = index_posts(&self.posts)?;
        let classifier = Classifier::new(policy, &self.posts);
        let reps = reputation_table(&self.posts);
        let mut by_viewer: HashMap<&StudentId, Vec<ViewRecord>> = HashMap::new();
        for v in &self.views {
            by_viewer.entry(&v.viewer).or_default().push(v.clone());
        }
        self.students()
            .into_iter()
            .map(|s| {
                let views = by_viewer.get(s).map(Vec::as_slice).unwrap_or(&[]);
                Ok(StudentScore {
                    exposure: index_for(s, views, &idx, &classifier, window)?,
                    reputation: reps.get(s).copied().unwrap_or(0.0),
                })
            })
            .collect()
    }
}
