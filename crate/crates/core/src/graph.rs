//! Directed contact network between students.
//!
//! Nodes are kept in lexicographic order of their ids and each out-neighbour
//! list is sorted the same way, so every loop over the graph is reproducible
//! regardless of how the graph was built.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, ParseErrorKind, Result};
use crate::rng::id_key;

/// Default cap on the number of nodes [`tree_graph`] will build.
pub const DEFAULT_NODE_LIMIT: usize = 1_000_000;

/// Opaque student token: non-empty, no whitespace, no commas.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct StudentId(String);

impl StudentId {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if Self::is_valid(&id) {
            Ok(Self(id))
        } else {
            Err(Error::InvalidId(id))
        }
    }

    pub fn is_valid(id: &str) -> bool {
        !id.is_empty() && !id.chars().any(|c| c.is_whitespace() || c == ',')
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for StudentId {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        Self::new(value)
    }
}

impl From<StudentId> for String {
    fn from(id: StudentId) -> Self {
        id.0
    }
}

impl fmt::Display for StudentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for StudentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl std::borrow::Borrow<str> for StudentId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

/// One directed contact `src -> dst` with transmission probability `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactEdge {
    pub src: StudentId,
    pub dst: StudentId,
    pub p: f64,
}

pub(crate) fn check_probability(p: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&p) {
        Ok(p)
    } else {
        Err(Error::ProbabilityOutOfRange(p))
    }
}

/// Immutable directed graph over students with per-edge probabilities.
#[derive(Clone)]
pub struct ContactGraph {
    nodes: Vec<StudentId>,
    keys: Vec<u64>,
    index: HashMap<StudentId, usize>,
    out: Vec<Vec<(usize, f64)>>,
    edge_count: usize,
}

impl PartialEq for ContactGraph {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.out == other.out
    }
}

impl fmt::Debug for ContactGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ContactGraph")
            .field("nodes", &self.nodes.len())
            .field("edges", &self.edge_count)
            .finish()
    }
}

/// Collects nodes and edges before freezing them into a [`ContactGraph`].
#[derive(Debug, Default, Clone)]
pub struct GraphBuilder {
    nodes: BTreeSet<StudentId>,
    edges: BTreeMap<(StudentId, StudentId), f64>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, id: StudentId) -> &mut Self {
        self.nodes.insert(id);
        self
    }

    /// Adds an edge, rejecting self-loops, duplicates and bad probabilities.
    pub fn add_edge(&mut self, src: StudentId, dst: StudentId, p: f64) -> Result<&mut Self> {
        self.try_add_edge(src, dst, p).map_err(|kind| match kind {
            ParseErrorKind::ProbabilityOutOfRange(_) => Error::ProbabilityOutOfRange(p),
            other => Error::Config(other.to_string()),
        })?;
        Ok(self)
    }

    fn try_add_edge(
        &mut self,
        src: StudentId,
        dst: StudentId,
        p: f64,
    ) -> std::result::Result<(), ParseErrorKind> {
        if src == dst {
            return Err(ParseErrorKind::SelfLoop(src.0));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(ParseErrorKind::ProbabilityOutOfRange(p.to_string()));
        }
        let key = (src, dst);
        if self.edges.contains_key(&key) {
            return Err(ParseErrorKind::DuplicateEdge(key.0 .0, key.1 .0));
        }
        self.nodes.insert(key.0.clone());
        self.nodes.insert(key.1.clone());
        self.edges.insert(key, p);
        Ok(())
    }

    pub fn build(self) -> ContactGraph {
        let nodes: Vec<StudentId> = self.nodes.into_iter().collect();
        let index: HashMap<StudentId, usize> =
            nodes.iter().cloned().enumerate().map(|(i, id)| (id, i)).collect();
        let mut out = vec![Vec::new(); nodes.len()];
        let edge_count = self.edges.len();
        // BTreeMap order is (src, dst) lexicographic, so each list comes out sorted.
        for ((src, dst), p) in self.edges {
            out[index[&src]].push((index[&dst], p));
        }
        let keys = nodes.iter().map(|id| id_key(id.as_str())).collect();
        ContactGraph {
            nodes,
            keys,
            index,
            out,
            edge_count,
        }
    }
}

impl ContactGraph {
    pub fn builder() -> GraphBuilder {
        GraphBuilder::new()
    }

    pub fn from_edges<I>(edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (StudentId, StudentId, f64)>,
    {
        let mut b = GraphBuilder::new();
        for (s, d, p) in edges {
            b.add_edge(s, d, p)?;
        }
        Ok(b.build())
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes in lexicographic order; positions are the node indices.
    pub fn nodes(&self) -> &[StudentId] {
        &self.nodes
    }

    pub fn id(&self, idx: usize) -> &StudentId {
        &self.nodes[idx]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    /// Stable hash of the node id, used to key random draws.
    pub fn key(&self, idx: usize) -> u64 {
        self.keys[idx]
    }

    /// Out-edges `(dst index, p)` sorted by destination.
    pub fn out_edges(&self, idx: usize) -> &[(usize, f64)] {
        &self.out[idx]
    }

    pub fn out_degree(&self, idx: usize) -> usize {
        self.out[idx].len()
    }

    pub fn edge_p(&self, src: &str, dst: &str) -> Option<f64> {
        let s = self.index_of(src)?;
        let d = self.index_of(dst)?;
        self.out[s]
            .binary_search_by_key(&d, |&(w, _)| w)
            .ok()
            .map(|i| self.out[s][i].1)
    }

    /// All edges in (src, dst) lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = ContactEdge> + '_ {
        self.out.iter().enumerate().flat_map(move |(s, list)| {
            list.iter().map(move |&(d, p)| ContactEdge {
                src: self.nodes[s].clone(),
                dst: self.nodes[d].clone(),
                p,
            })
        })
    }

    /// Edge count divided by node count: the empirical fan-out `k`.
    pub fn mean_out_degree(&self) -> Result<f64> {
        if self.nodes.is_empty() {
            return Err(Error::EmptyGraph);
        }
        Ok(self.edge_count as f64 / self.nodes.len() as f64)
    }

    /// Same node set, out-lists rewritten by `f(src, current list)`.
    ///
    /// `f` must return a list sorted by destination index, without duplicates
    /// or self-loops, with probabilities in [0, 1].
    pub(crate) fn map_out_edges<F>(&self, mut f: F) -> ContactGraph
    where
        F: FnMut(usize, &[(usize, f64)]) -> Vec<(usize, f64)>,
    {
        let out: Vec<Vec<(usize, f64)>> =
            self.out.iter().enumerate().map(|(s, list)| f(s, list)).collect();
        debug_assert!(out.iter().enumerate().all(|(s, l)| {
            l.windows(2).all(|w| w[0].0 < w[1].0) && l.iter().all(|&(d, p)| d != s && (0.0..=1.0).contains(&p))
        }));
        let edge_count = out.iter().map(Vec::len).sum();
        ContactGraph {
            nodes: self.nodes.clone(),
            keys: self.keys.clone(),
            index: self.index.clone(),
            out,
            edge_count,
        }
    }

    /// Writes the graph in edge-list format; nodes without out-edges that
    /// never appear as a destination are written as node-only lines.
    pub fn write_edge_list<W: Write>(&self, mut w: W) -> Result<()> {
        let mut has_in = vec![false; self.nodes.len()];
        for list in &self.out {
            for &(d, _) in list {
                has_in[d] = true;
            }
        }
        for (s, list) in self.out.iter().enumerate() {
            if list.is_empty() && !has_in[s] {
                writeln!(w, "{}", self.nodes[s])?;
            }
            for &(d, p) in list {
                writeln!(w, "{} {} {}", self.nodes[s], self.nodes[d], p)?;
            }
        }
        Ok(())
    }

    pub fn to_edge_list_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_edge_list(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("ids are UTF-8")
    }
}

/// Parses the whitespace-separated edge-list format.
///
/// `src dst p` declares an edge, a lone `src` declares an isolated node, lines
/// starting with `#` and blank lines are skipped.
pub fn load_graph<R: BufRead>(source: R) -> Result<ContactGraph> {
    let mut b = GraphBuilder::new();
    for (i, line) in source.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        let id = |s: &str| {
            StudentId::new(s).map_err(|_| Error::parse(lineno, ParseErrorKind::BadId(s.to_string())))
        };
        match fields.as_slice() {
            [node] => {
                b.add_node(id(node)?);
            }
            [src, dst, p] => {
                let src = id(src)?;
                let dst = id(dst)?;
                let prob: f64 = p
                    .parse()
                    .map_err(|_| Error::parse(lineno, ParseErrorKind::BadNumber(p.to_string())))?;
                if !prob.is_finite() {
                    return Err(Error::parse(lineno, ParseErrorKind::BadNumber(p.to_string())));
                }
                b.try_add_edge(src, dst, prob)
                    .map_err(|kind| match kind {
                        ParseErrorKind::ProbabilityOutOfRange(_) => {
                            ParseErrorKind::ProbabilityOutOfRange(p.to_string())
                        }
                        k => k,
                    })
                    .map_err(|kind| Error::parse(lineno, kind))?;
            }
            other => return Err(Error::parse(lineno, ParseErrorKind::FieldCount(other.len()))),
        }
    }
    Ok(b.build())
}

pub fn parse_graph(text: &str) -> Result<ContactGraph> {
    load_graph(text.as_bytes())
}

fn padded_ids(n: usize, prefix: &str) -> Vec<StudentId> {
    let width = n.saturating_sub(1).to_string().len();
    (0..n)
        .map(|i| StudentId(format!("{prefix}{i:0width$}")))
        .collect()
}

/// `n` students, each with exactly `k` out-contacts drawn uniformly without
/// replacement from the other `n - 1`, all with probability `p`.
pub fn regular_graph(n: usize, k: usize, p: f64, seed: u64) -> Result<ContactGraph> {
    check_probability(p)?;
    if n == 0 {
        return Err(Error::Config("regular graph needs n >= 1".into()));
    }
    if k > n - 1 {
        return Err(Error::FanOutTooLarge { n, k });
    }
    let ids = padded_ids(n, "s");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = GraphBuilder::new();
    for id in &ids {
        b.add_node(id.clone());
    }
    for (v, src) in ids.iter().enumerate() {
        for j in index::sample(&mut rng, n - 1, k) {
            // skip over v itself
            let w = if j >= v { j + 1 } else { j };
            b.add_edge(src.clone(), ids[w].clone(), p)?;
        }
    }
    Ok(b.build())
}

fn tree_size(depth: u32, k: u32, limit: usize) -> Option<usize> {
    let mut total: usize = 0;
    let mut level: usize = 1;
    for d in 0..=depth {
        total = total.checked_add(level)?;
        if total > limit {
            return None;
        }
        if d < depth {
            level = level.checked_mul(k as usize)?;
        }
    }
    Some(total)
}

/// Rooted k-ary out-tree: level `n` holds `k^n` students, every edge has `p`.
pub fn tree_graph(depth: u32, k: u32, p: f64) -> Result<(ContactGraph, StudentId)> {
    tree_graph_with_limit(depth, k, p, DEFAULT_NODE_LIMIT)
}

pub fn tree_graph_with_limit(
    depth: u32,
    k: u32,
    p: f64,
    limit: usize,
) -> Result<(ContactGraph, StudentId)> {
    check_probability(p)?;
    if k == 0 {
        return Err(Error::Config("tree fan-out k must be positive".into()));
    }
    let total = tree_size(depth, k, limit).ok_or(Error::NodeLimitExceeded { depth, k, limit })?;
    // Breadth-first numbering: children of i are k*i+1 ..= k*i+k.
    let ids = padded_ids(total, "t");
    let mut b = GraphBuilder::new();
    b.add_node(ids[0].clone());
    let k = k as usize;
    for parent in 0..total {
        for c in 1..=k {
            let child = parent * k + c;
            if child >= total {
                break;
            }
            b.add_edge(ids[parent].clone(), ids[child].clone(), p)?;
        }
    }
    Ok((b.build(), ids[0].clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sid(s: &str) -> StudentId {
        StudentId::new(s).unwrap()
    }

    #[test]
    fn loads_simple_edge_list() {
        let g = parse_graph("a b 0.5\nb c 0.25").unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.edge_p("a", "b"), Some(0.5));
        assert_eq!(g.edge_p("b", "c"), Some(0.25));
        assert_eq!(g.edge_p("a", "c"), None);
    }

    #[test]
    fn comments_blank_lines_and_isolated_nodes() {
        let g = parse_graph("# header\n\nz\na b 1\n   \n# x y 0.1\n").unwrap();
        assert_eq!(g.nodes(), &[sid("a"), sid("b"), sid("z")]);
        assert_eq!(g.edge_count(), 1);
    }

    #[test]
    fn self_loop_is_reported_with_line() {
        let err = parse_graph("a a 0.5").unwrap_err();
        match err {
            Error::Parse { line, kind } => {
                assert_eq!(line, 1);
                assert_eq!(kind, ParseErrorKind::SelfLoop("a".into()));
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn probability_out_of_range() {
        let err = parse_graph("a b 1.5").unwrap_err();
        assert!(matches!(
            err,
            Error::Parse { line: 1, kind: ParseErrorKind::ProbabilityOutOfRange(_) }
        ));
        assert!(matches!(
            parse_graph("a b -0.1").unwrap_err(),
            Error::Parse { kind: ParseErrorKind::ProbabilityOutOfRange(_), .. }
        ));
        assert!(matches!(
            parse_graph("a b NaN").unwrap_err(),
            Error::Parse { kind: ParseErrorKind::BadNumber(_), .. }
        ));
    }

    #[test]
    fn duplicate_edge_and_field_count() {
        let err = parse_graph("a b 0.1\n\nb a 0.2\na b 0.3").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, kind: ParseErrorKind::DuplicateEdge(..) }));
        let err = parse_graph("a b").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, kind: ParseErrorKind::FieldCount(2) }));
        let err = parse_graph("ok\na b 0.1 extra").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, kind: ParseErrorKind::FieldCount(4) }));
        let err = parse_graph("a,b c 0.1").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, kind: ParseErrorKind::BadId(_) }));
    }

    #[test]
    fn line_order_does_not_matter() {
        let a = parse_graph("x y 0.1\ny z 0.2\nq").unwrap();
        let b = parse_graph("q\ny z 0.2\nx y 0.1").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_probability_edges_are_kept() {
        let g = parse_graph("a b 0").unwrap();
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.edge_p("a", "b"), Some(0.0));
    }

    #[test]
    fn regular_graph_cases() {
        let g = regular_graph(5, 0, 0.3, 1).unwrap();
        assert_eq!((g.node_count(), g.edge_count()), (5, 0));

        let g = regular_graph(4, 3, 1.0, 7).unwrap();
        assert_eq!(g.edge_count(), 12);
        for s in g.nodes() {
            for d in g.nodes() {
                if s != d {
                    assert_eq!(g.edge_p(s.as_str(), d.as_str()), Some(1.0));
                }
            }
        }

        let g = regular_graph(100, 4, 0.2, 42).unwrap();
        assert_eq!(g.mean_out_degree().unwrap(), 4.0);
        assert!((0..100).all(|i| g.out_degree(i) == 4));

        assert!(matches!(regular_graph(3, 3, 0.5, 0), Err(Error::FanOutTooLarge { n: 3, k: 3 })));
        assert_eq!(regular_graph(10, 3, 0.5, 9).unwrap().mean_out_degree().unwrap(), 3.0);
    }

    #[test]
    fn regular_graph_is_deterministic() {
        let a = regular_graph(50, 5, 0.25, 99).unwrap();
        let b = regular_graph(50, 5, 0.25, 99).unwrap();
        assert_eq!(a.to_edge_list_string(), b.to_edge_list_string());
        let c = regular_graph(50, 5, 0.25, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn tree_graph_cases() {
        let (g, root) = tree_graph(2, 3, 0.5).unwrap();
        assert_eq!(g.node_count(), 13);
        assert_eq!(g.out_degree(g.index_of(root.as_str()).unwrap()), 3);

        let (g, _) = tree_graph(0, 2, 0.9).unwrap();
        assert_eq!((g.node_count(), g.edge_count()), (1, 0));

        let (g, _) = tree_graph(3, 2, 1.0).unwrap();
        assert_eq!((g.node_count(), g.edge_count()), (15, 14));

        let (g, _) = tree_graph(1, 4, 0.3).unwrap();
        assert_eq!(g.mean_out_degree().unwrap(), 4.0 / 5.0);

        assert!(matches!(
            tree_graph_with_limit(5, 10, 0.5, 1000),
            Err(Error::NodeLimitExceeded { .. })
        ));
        assert!(tree_graph(40, 3, 0.5).is_err());
    }

    #[test]
    fn tree_node_count_formula() {
        for k in 1u32..=4 {
            for depth in 0u32..=6 {
                let (g, _) = tree_graph(depth, k, 0.5).unwrap();
                let expected = if k == 1 {
                    depth as usize + 1
                } else {
                    ((k as usize).pow(depth + 1) - 1) / (k as usize - 1)
                };
                assert_eq!(g.node_count(), expected, "k={k} depth={depth}");
            }
        }
    }

    #[test]
    fn mean_out_degree_small_and_empty() {
        let g = parse_graph("a b 0.5").unwrap();
        assert_eq!(g.mean_out_degree().unwrap(), 0.5);
        assert!(matches!(GraphBuilder::new().build().mean_out_degree(), Err(Error::EmptyGraph)));
    }

    #[test]
    fn student_id_validation() {
        assert!(StudentId::new("").is_err());
        assert!(StudentId::new("a b").is_err());
        assert!(StudentId::new("a,b").is_err());
        assert!(StudentId::new("ünï").is_ok());
    }

    fn arb_graph() -> impl Strategy<Value = ContactGraph> {
        let ids = prop::collection::vec("[a-e]{1,2}", 1..8);
        ids.prop_flat_map(|ids| {
            let n = ids.len();
            let edges = prop::collection::vec((0..n, 0..n, 0.0f64..=1.0), 0..20);
            (Just(ids), edges)
        })
        .prop_map(|(ids, edges)| {
            let mut b = GraphBuilder::new();
            for id in &ids {
                b.add_node(sid(id));
            }
            for (s, d, p) in edges {
                let _ = b.add_edge(sid(&ids[s]), sid(&ids[d]), p);
            }
            b.build()
        })
    }

    proptest! {
        #[test]
        fn edge_list_round_trip(g in arb_graph()) {
            let text = g.to_edge_list_string();
            let back = parse_graph(&text).unwrap();
            prop_assert_eq!(&back, &g);
            prop_assert_eq!(back.to_edge_list_string(), text);
        }

        #[test]
        fn out_lists_sorted_and_unique(g in arb_graph()) {
            for i in 0..g.node_count() {
                let l = g.out_edges(i);
                prop_assert!(l.windows(2).all(|w| w[0].0 < w[1].0));
                prop_assert!(l.iter().all(|&(d, _)| d != i));
            }
        }
    }
}
