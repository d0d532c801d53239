//! Directed follower graphs with community labels.
//!
//! An edge `(a, b)` means node `a` follows node `b`, so anything `b` posts
//! lands in `a`'s inbox. `in_edges[b]` therefore lists the followers of `b`.

use std::collections::{BTreeMap, HashSet, VecDeque};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from;

pub type NodeId = u32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Graph {
    out_edges: Vec<Vec<NodeId>>,
    in_edges: Vec<Vec<NodeId>>,
    community: Vec<u32>,
    num_communities: usize,
    /// Original identifier of every dense node id, for traceability.
    original_ids: Vec<u64>,
}

impl Graph {
    /// Build a graph from dense node ids. Self-loops and duplicate edges are
    /// dropped. Community ids must already be dense in `0..C`.
    pub fn from_edges(community: Vec<u32>, edges: impl IntoIterator<Item = (NodeId, NodeId)>) -> Result<Self> {
        let n = community.len();
        let num_communities = community.iter().map(|&c| c as usize + 1).max().unwrap_or(0);
        let mut present = vec![false; num_communities];
        for &c in &community {
            present[c as usize] = true;
        }
        if let Some(c) = present.iter().position(|p| !p) {
            return Err(Error::EmptyCommunity(c));
        }
        let mut out_edges = vec![Vec::new(); n];
        for (a, b) in edges {
            if a as usize >= n || b as usize >= n {
                return Err(Error::InvalidParam(format!(
                    "edge ({a}, {b}) references a node outside 0..{n}"
                )));
            }
            if a != b {
                out_edges[a as usize].push(b);
            }
        }
        for adj in &mut out_edges {
            adj.sort_unstable();
            adj.dedup();
        }
        let mut in_edges = vec![Vec::new(); n];
        for (a, adj) in out_edges.iter().enumerate() {
            for &b in adj {
                in_edges[b as usize].push(a as NodeId);
            }
        }
        Ok(Self {
            out_edges,
            in_edges,
            community,
            num_communities,
            original_ids: (0..n as u64).collect(),
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.community.len()
    }

    pub fn num_edges(&self) -> usize {
        self.out_edges.iter().map(Vec::len).sum()
    }

    pub fn num_communities(&self) -> usize {
        self.num_communities
    }

    /// Nodes that `node` follows.
    pub fn following(&self, node: NodeId) -> &[NodeId] {
        &self.out_edges[node as usize]
    }

    /// Nodes that follow `node`; these receive everything `node` posts.
    pub fn followers(&self, node: NodeId) -> &[NodeId] {
        &self.in_edges[node as usize]
    }

    pub fn in_degree(&self, node: NodeId) -> usize {
        self.in_edges[node as usize].len()
    }

    pub fn out_degree(&self, node: NodeId) -> usize {
        self.out_edges[node as usize].len()
    }

    pub fn max_in_degree(&self) -> usize {
        self.in_edges.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn community(&self, node: NodeId) -> usize {
        self.community[node as usize] as usize
    }

    pub fn communities(&self) -> &[u32] {
        &self.community
    }

    pub fn community_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_communities];
        for &c in &self.community {
            sizes[c as usize] += 1;
        }
        sizes
    }

    /// Members of every community, in ascending node id order.
    pub fn community_members(&self) -> Vec<Vec<NodeId>> {
        let mut members = vec![Vec::new(); self.num_communities];
        for (j, &c) in self.community.iter().enumerate() {
            members[c as usize].push(j as NodeId);
        }
        members
    }

    pub fn original_id(&self, node: NodeId) -> u64 {
        self.original_ids[node as usize]
    }

    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.out_edges
            .iter()
            .enumerate()
            .flat_map(|(a, adj)| adj.iter().map(move |&b| (a as NodeId, b)))
    }

    pub fn has_edge(&self, a: NodeId, b: NodeId) -> bool {
        self.out_edges[a as usize].binary_search(&b).is_ok()
    }

    /// Write `dense_id,original_id,community` rows.
    pub fn write_id_map(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["dense_id", "original_id", "community"])?;
        for (j, id) in self.original_ids.iter().enumerate() {
            w.write_record([j.to_string(), id.to_string(), self.community[j].to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Community of every dense id, read back from [`Graph::write_id_map`].
    pub fn read_id_map_communities(path: &Path) -> Result<Vec<u32>> {
        let mut out = Vec::new();
        let mut r = csv::Reader::from_path(path)?;
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let c = rec.get(2).and_then(|s| s.parse().ok()).ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: i + 2,
                msg: "missing community column".into(),
            })?;
            out.push(c);
        }
        Ok(out)
    }

    /// Write the graph back out as the two input CSV files.
    pub fn write_csv(&self, edge_path: &Path, community_path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(File::create(edge_path)?);
        writeln!(f, "follower_id,followed_id")?;
        for (a, b) in self.edges() {
            writeln!(f, "{},{}", self.original_id(a), self.original_id(b))?;
        }
        let mut f = std::io::BufWriter::new(File::create(community_path)?);
        writeln!(f, "node_id,community_id")?;
        for j in 0..self.num_nodes() {
            writeln!(f, "{},{}", self.original_ids[j], self.community[j])?;
        }
        Ok(())
    }
}

fn read_pairs(path: &Path) -> Result<Vec<(usize, u64, u64)>> {
    let reader = BufReader::new(File::open(path)?);
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        let parsed = match fields.as_slice() {
            [a, b] => a.parse::<u64>().ok().zip(b.parse::<u64>().ok()),
            _ => None,
        };
        match parsed {
            Some((a, b)) => rows.push((lineno, a, b)),
            // header is optional and only allowed on the first line
            None if rows.is_empty() && lineno == 1 && fields.len() == 2 => {}
            None => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: lineno,
                    msg: format!("expected two integer fields, got {trimmed:?}"),
                })
            }
        }
    }
    Ok(rows)
}

/// Load a follower graph from `follower_id,followed_id` and
/// `node_id,community_id` CSV files. Node and community ids are remapped
/// to dense ranges in ascending order of their original values.
pub fn load_graph(edge_list_path: &Path, community_path: &Path) -> Result<Graph> {
    let communities = read_pairs(community_path)?;
    let mut node_comm: BTreeMap<u64, u64> = BTreeMap::new();
    for &(line, node, comm) in &communities {
        if let Some(prev) = node_comm.insert(node, comm) {
            if prev != comm {
                return Err(Error::Parse {
                    path: community_path.to_path_buf(),
                    line,
                    msg: format!("node {node} assigned to two communities"),
                });
            }
        }
    }
    let edges = read_pairs(edge_list_path)?;
    for &(_, a, b) in &edges {
        for node in [a, b] {
            if !node_comm.contains_key(&node) {
                return Err(Error::MissingCommunity(node));
            }
        }
    }

    let comm_ids: BTreeMap<u64, u32> = node_comm
        .values()
        .copied()
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, c)| (c, i as u32))
        .collect();
    let dense: BTreeMap<u64, NodeId> = node_comm.keys().enumerate().map(|(i, &n)| (n, i as NodeId)).collect();
    let community = node_comm.values().map(|c| comm_ids[c]).collect();
    let mut g = Graph::from_edges(community, edges.iter().map(|&(_, a, b)| (dense[&a], dense[&b])))?;
    g.original_ids = node_comm.keys().copied().collect();
    Ok(g)
}

/// Directed stochastic block model: every ordered pair `(a, b)`, `a != b`,
/// becomes a follow edge with probability `p_in` when both share a community
/// and `p_out` otherwise.
pub fn generate_synthetic_graph(community_sizes: &[usize], p_in: f64, p_out: f64, seed: u64) -> Result<Graph> {
    if community_sizes.is_empty() || community_sizes.contains(&0) {
        return Err(Error::InvalidParam(
            "community sizes must be non-empty and positive".into(),
        ));
    }
    if !(0.0..=1.0).contains(&p_in) || !(0.0..=1.0).contains(&p_out) {
        return Err(Error::InvalidParam("edge probabilities must lie in [0, 1]".into()));
    }
    if p_out > p_in {
        return Err(Error::InvalidParam(format!(
            "p_out ({p_out}) exceeds p_in ({p_in}); community structure would invert"
        )));
    }
    let mut rng = rng_from(seed);
    let offsets: Vec<usize> = community_sizes
        .iter()
        .scan(0, |acc, &s| {
            let start = *acc;
            *acc += s;
            Some(start)
        })
        .collect();
    let community: Vec<u32> = community_sizes
        .iter()
        .enumerate()
        .flat_map(|(c, &s)| std::iter::repeat_n(c as u32, s))
        .collect();

    let mut edges = Vec::new();
    for (ca, &sa) in community_sizes.iter().enumerate() {
        for (cb, &sb) in community_sizes.iter().enumerate() {
            let p = if ca == cb { p_in } else { p_out };
            if p <= 0.0 {
                continue;
            }
            let total = (sa * sb) as u64;
            let push = |k: u64, edges: &mut Vec<(NodeId, NodeId)>| {
                let a = offsets[ca] + (k / sb as u64) as usize;
                let b = offsets[cb] + (k % sb as u64) as usize;
                if a != b {
                    edges.push((a as NodeId, b as NodeId));
                }
            };
            if p >= 1.0 {
                (0..total).for_each(|k| push(k, &mut edges));
                continue;
            }
            // geometric skipping over the sa*sb candidate pairs
            let log_q = (1.0 - p).ln();
            let mut k: u64 = 0;
            loop {
                let u: f64 = rng.random();
                let skip = ((1.0 - u).ln() / log_q).floor() as u64;
                k = k.saturating_add(skip);
                if k >= total {
                    break;
                }
                push(k, &mut edges);
                k += 1;
            }
        }
    }
    Graph::from_edges(community, edges)
}

/// Parameters for a block-structured graph with heavy-tailed follower
/// counts: each node follows ~Poisson(`mean_out_degree`) others, a
/// `mixing` share of them outside its own community, choosing targets with
/// probability proportional to a Pareto(`popularity_exponent`) weight,
/// scaled by the target's `community_popularity` entry (default 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopularityGraphSpec {
    pub community_sizes: Vec<usize>,
    pub mean_out_degree: f64,
    pub mixing: f64,
    pub popularity_exponent: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub community_popularity: Vec<f64>,
}

struct WeightedPool {
    nodes: Vec<NodeId>,
    cumulative: Vec<f64>,
}

impl WeightedPool {
    fn new(nodes: Vec<NodeId>, weights: &[f64]) -> Self {
        let mut acc = 0.0;
        let cumulative = nodes
            .iter()
            .map(|&j| {
                acc += weights[j as usize];
                acc
            })
            .collect();
        Self { nodes, cumulative }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> Option<NodeId> {
        let total = *self.cumulative.last()?;
        let x = rng.random::<f64>() * total;
        let i = self.cumulative.partition_point(|&c| c <= x);
        Some(self.nodes[i.min(self.nodes.len() - 1)])
    }
}

pub fn generate_popularity_graph(spec: &PopularityGraphSpec, seed: u64) -> Result<Graph> {
    let sizes = &spec.community_sizes;
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(Error::InvalidParam(
            "community sizes must be non-empty and positive".into(),
        ));
    }
    if !(0.0..=1.0).contains(&spec.mixing) || spec.mean_out_degree < 0.0 {
        return Err(Error::InvalidParam("mixing must lie in [0, 1], degree >= 0".into()));
    }
    if spec.popularity_exponent <= 1.0 {
        return Err(Error::InvalidParam("popularity exponent must exceed 1".into()));
    }
    let scale = |c: usize| spec.community_popularity.get(c).copied().unwrap_or(1.0);
    if spec.community_popularity.len() > sizes.len() || (0..sizes.len()).any(|c| scale(c).is_nan() || scale(c) <= 0.0) {
        return Err(Error::InvalidParam(
            "community popularity must be positive, one per community".into(),
        ));
    }
    let mut rng = rng_from(seed);
    let community: Vec<u32> = sizes
        .iter()
        .enumerate()
        .flat_map(|(c, &s)| std::iter::repeat_n(c as u32, s))
        .collect();
    let n = community.len();
    let weights: Vec<f64> = (0..n)
        .map(|j| scale(community[j] as usize) * (1.0 - rng.random::<f64>()).powf(-1.0 / spec.popularity_exponent))
        .collect();
    let c_count = sizes.len();
    let inside: Vec<WeightedPool> = (0..c_count)
        .map(|c| {
            let nodes = (0..n as NodeId)
                .filter(|&j| community[j as usize] as usize == c)
                .collect();
            WeightedPool::new(nodes, &weights)
        })
        .collect();
    let outside: Vec<WeightedPool> = (0..c_count)
        .map(|c| {
            let nodes = (0..n as NodeId)
                .filter(|&j| community[j as usize] as usize != c)
                .collect();
            WeightedPool::new(nodes, &weights)
        })
        .collect();
    let degree = if spec.mean_out_degree > 0.0 {
        Some(Poisson::new(spec.mean_out_degree).map_err(|e| Error::InvalidParam(e.to_string()))?)
    } else {
        None
    };

    let mut edges = Vec::new();
    let mut chosen = HashSet::new();
    for a in 0..n as NodeId {
        let c = community[a as usize] as usize;
        let want = degree.as_ref().map_or(0, |d| d.sample(&mut rng) as usize);
        chosen.clear();
        let mut attempts = 0;
        while chosen.len() < want && attempts < want * 20 {
            attempts += 1;
            let pool = if c_count > 1 && rng.random::<f64>() < spec.mixing {
                &outside[c]
            } else {
                &inside[c]
            };
            if let Some(b) = pool.sample(&mut rng) {
                if b != a && chosen.insert(b) {
                    edges.push((a, b));
                }
            }
        }
    }
    Graph::from_edges(community, edges)
}

/// Per-community sample sizes by largest-remainder apportionment of
/// `ceil(fraction * J)` nodes.
fn stratified_quota(sizes: &[usize], fraction: f64) -> Vec<usize> {
    let total: usize = sizes.iter().sum();
    let target = ((fraction * total as f64) - 1e-9).ceil().max(0.0) as usize;
    let exact: Vec<f64> = sizes.iter().map(|&s| fraction * s as f64).collect();
    let mut quota: Vec<usize> = exact.iter().map(|e| (e + 1e-9).floor() as usize).collect();
    let mut remaining = target.saturating_sub(quota.iter().sum());
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - quota[a] as f64;
        let rb = exact[b] - quota[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for c in order {
        if remaining == 0 {
            break;
        }
        if quota[c] < sizes[c] {
            quota[c] += 1;
            remaining -= 1;
        }
    }
    quota
}

/// Node-induced subgraph on a community-stratified uniform sample of
/// `ceil(fraction * J)` nodes. Surviving nodes keep their relative order.
pub fn sample_subgraph(g: &Graph, fraction: f64, seed: u64) -> Result<Graph> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidParam(format!("fraction {fraction} outside (0, 1]")));
    }
    let mut rng = rng_from(seed);
    let members = g.community_members();
    let quota = stratified_quota(&g.community_sizes(), fraction);
    let mut keep = Vec::new();
    for (c, m) in members.iter().enumerate() {
        if quota[c] == 0 {
            return Err(Error::EmptyCommunity(c));
        }
        keep.extend(index::sample(&mut rng, m.len(), quota[c]).into_iter().map(|i| m[i]));
    }
    keep.sort_unstable();
    let mut remap = vec![NodeId::MAX; g.num_nodes()];
    for (new, &old) in keep.iter().enumerate() {
        remap[old as usize] = new as NodeId;
    }
    let community = keep.iter().map(|&j| g.community[j as usize]).collect();
    let edges = keep.iter().flat_map(|&a| {
        let remap = &remap;
        g.following(a).iter().filter_map(move |&b| {
            let nb = remap[b as usize];
            (nb != NodeId::MAX).then_some((remap[a as usize], nb))
        })
    });
    let mut sub = Graph::from_edges(community, edges.collect::<Vec<_>>())?;
    sub.original_ids = keep.iter().map(|&j| g.original_ids[j as usize]).collect();
    Ok(sub)
}

/// Follower count normalized by the largest follower count in the graph.
pub fn compute_prestige(g: &Graph) -> Vec<f64> {
    let max = g.max_in_degree();
    (0..g.num_nodes() as NodeId)
        .map(|j| {
            if max == 0 {
                0.0
            } else {
                g.in_degree(j) as f64 / max as f64
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralityMap {
    pub betweenness: Vec<f64>,
    pub pivot_count: usize,
    pub exact: bool,
}

impl CentralityMap {
    pub fn get(&self, node: NodeId) -> f64 {
        self.betweenness[node as usize]
    }
}

/// Pivot-sampled Brandes betweenness on directed, unweighted shortest
/// paths. Sums over sampled sources are scaled by `J / pivots`; with
/// `pivots == J` every node is a source and the result is exact.
pub fn approx_betweenness(g: &Graph, pivots: usize, seed: u64) -> Result<CentralityMap> {
    let n = g.num_nodes();
    if pivots == 0 || pivots > n {
        return Err(Error::InvalidParam(format!("pivots must lie in 1..={n}, got {pivots}")));
    }
    let exact = pivots == n;
    let mut sources: Vec<usize> = if exact {
        (0..n).collect()
    } else {
        index::sample(&mut rng_from(seed), n, pivots).into_vec()
    };
    sources.sort_unstable();

    let mut bc = vec![0.0; n];
    let mut sigma = vec![0.0f64; n];
    let mut dist = vec![-1i64; n];
    let mut delta = vec![0.0f64; n];
    let mut preds: Vec<Vec<NodeId>> = vec![Vec::new(); n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::new();
    for &s in &sources {
        for v in &order {
            let v = *v as usize;
            sigma[v] = 0.0;
            dist[v] = -1;
            delta[v] = 0.0;
            preds[v].clear();
        }
        order.clear();
        sigma[s] = 1.0;
        dist[s] = 0;
        queue.push_back(s as NodeId);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let dv = dist[v as usize];
            for &w in g.following(v) {
                let wi = w as usize;
                if dist[wi] < 0 {
                    dist[wi] = dv + 1;
                    queue.push_back(w);
                }
                if dist[wi] == dv + 1 {
                    sigma[wi] += sigma[v as usize];
                    preds[wi].push(v);
                }
            }
        }
        for &w in order.iter().rev() {
            let wi = w as usize;
            for &v in &preds[wi] {
                let vi = v as usize;
                delta[vi] += sigma[vi] / sigma[wi] * (1.0 + delta[wi]);
            }
            if wi != s {
                bc[wi] += delta[wi];
            }
        }
    }
    let scale = n as f64 / pivots as f64;
    if !exact {
        bc.iter_mut().for_each(|b| *b *= scale);
    }
    Ok(CentralityMap {
        betweenness: bc,
        pivot_count: pivots,
        exact,
    })
}
