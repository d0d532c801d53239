//! Per-claim propagation features.
//!
//! Features only look at who posted and who read what, and when. They never
//! see beliefs or impactedness: the inputs are the log, the graph and a
//! centrality map.
//!
//! Snapshot features are measured at each tweet's own age: for offset `s`, a
//! cascade started at `t0` contributes the reads and retweets that happened
//! by `t0 + s` (or by the tabulation time, whichever is earlier). Values are
//! averaged over the claim's cascades.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::SimLog;
use crate::error::Result;
use crate::graph::{CentralityMap, Graph, NodeId};
use crate::world::{ClaimId, Step};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    /// Age offsets in steps, ascending.
    pub snapshots: Vec<u32>,
    /// Retweet depths with their own read-count column.
    pub depths: Vec<u32>,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        Self {
            snapshots: vec![1, 2, 5, 10],
            depths: vec![1, 2, 3, 4, 5],
        }
    }
}

impl FeatureSpec {
    pub fn column_names(&self) -> Vec<String> {
        let mut cols: Vec<String> = [
            "origin_avg_degree",
            "origin_max_degree",
            "origin_avg_centrality",
            "origin_max_centrality",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        for s in &self.snapshots {
            for name in [
                "present",
                "nodes_visited",
                "avg_visit_degree",
                "max_visit_degree",
                "avg_visit_centrality",
                "max_visit_centrality",
                "max_depth",
            ] {
                cols.push(format!("s{s}_{name}"));
            }
        }
        for s in &self.snapshots {
            for d in &self.depths {
                cols.push(format!("s{s}_d{d}_nodes"));
            }
        }
        cols
    }

    pub fn num_columns(&self) -> usize {
        4 + self.snapshots.len() * (7 + self.depths.len())
    }

    fn max_offset(&self) -> u32 {
        self.snapshots.iter().copied().max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OriginFeatures {
    pub avg_degree: f64,
    pub max_degree: f64,
    pub avg_centrality: f64,
    pub max_centrality: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SnapshotFeatures {
    /// At least one of the claim's cascades is older than the offset.
    pub present: bool,
    pub nodes_visited: f64,
    pub avg_visit_degree: f64,
    pub max_visit_degree: f64,
    pub avg_visit_centrality: f64,
    pub max_visit_centrality: f64,
    pub max_depth: f64,
    pub nodes_at_depth: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub claim_id: ClaimId,
    pub tabulated_at: Step,
    pub origin: OriginFeatures,
    pub snapshots: Vec<SnapshotFeatures>,
}

impl FeatureRow {
    /// Flatten in [`FeatureSpec::column_names`] order.
    pub fn to_vector(&self) -> Vec<f64> {
        let o = &self.origin;
        let mut v = vec![o.avg_degree, o.max_degree, o.avg_centrality, o.max_centrality];
        for s in &self.snapshots {
            v.extend([
                s.present as u8 as f64,
                s.nodes_visited,
                s.avg_visit_degree,
                s.max_visit_degree,
                s.avg_visit_centrality,
                s.max_visit_centrality,
                s.max_depth,
            ]);
        }
        for s in &self.snapshots {
            v.extend_from_slice(&s.nodes_at_depth);
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub spec: FeatureSpec,
    pub rows: Vec<FeatureRow>,
}

impl FeatureTable {
    pub fn matrix(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(FeatureRow::to_vector).collect()
    }

    pub fn row(&self, claim: ClaimId) -> Option<&FeatureRow> {
        self.rows.iter().find(|r| r.claim_id == claim)
    }

    /// `features.csv` with a `claim_id,tabulated_at` prefix.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "claim_id,tabulated_at,{}", self.spec.column_names().join(","))?;
        for r in &self.rows {
            let vals: Vec<String> = r.to_vector().iter().map(|x| format!("{x:?}")).collect();
            writeln!(f, "{},{},{}", r.claim_id, r.tabulated_at, vals.join(","))?;
        }
        f.flush()?;
        Ok(())
    }

    /// Column schema as JSON: name and position of every column.
    pub fn write_schema(&self, path: &Path) -> Result<()> {
        let mut cols = vec!["claim_id".to_string(), "tabulated_at".to_string()];
        cols.extend(self.spec.column_names());
        let schema = serde_json::json!({
            "version": 1,
            "snapshots": self.spec.snapshots,
            "depths": self.spec.depths,
            "columns": cols,
        });
        std::fs::write(path, serde_json::to_string_pretty(&schema)?)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
struct Accum {
    reads: u64,
    deg_sum: u64,
    deg_max: u64,
    cent_sum: f64,
    cent_max: f64,
    max_depth: u32,
    at_depth: Vec<u64>,
}

impl Accum {
    fn new(depths: usize) -> Self {
        Self {
            at_depth: vec![0; depths],
            ..Default::default()
        }
    }

    fn merge(&mut self, o: &Accum) {
        self.reads += o.reads;
        self.deg_sum += o.deg_sum;
        self.deg_max = self.deg_max.max(o.deg_max);
        self.cent_sum += o.cent_sum;
        self.cent_max = self.cent_max.max(o.cent_max);
        self.max_depth = self.max_depth.max(o.max_depth);
        for (a, b) in self.at_depth.iter_mut().zip(&o.at_depth) {
            *a += b;
        }
    }
}

#[derive(Debug, Clone)]
struct Cascade {
    created_at: Step,
    /// (time, depth) of every retweet in the cascade within the horizon.
    retweets: Vec<(Step, u32)>,
    /// (time, reader, depth of the utterance read) within the horizon.
    reads: Vec<(Step, NodeId, u32)>,
}

#[derive(Debug, Clone)]
struct ClaimState {
    cascades: Vec<u32>,
    /// Per offset: how many leading cascades are final, and their sum.
    finalized: Vec<(usize, Accum)>,
    origin_count: u64,
    origin_deg_sum: u64,
    origin_deg_max: u64,
    origin_cent_sum: f64,
    origin_cent_max: f64,
}

/// Incrementally maintained feature index over a growing log.
///
/// `ingest` consumes log entries strictly before the tabulation time;
/// statistics of cascades that can no longer change for a given offset are
/// folded into per-claim sums so later queries only revisit young cascades.
#[derive(Debug, Clone)]
pub struct FeatureTracker<'a> {
    g: &'a Graph,
    centrality: &'a CentralityMap,
    spec: FeatureSpec,
    cascades: Vec<Cascade>,
    cascade_claim: Vec<ClaimId>,
    /// Cascade index of every ingested utterance.
    utterance_cascade: Vec<u32>,
    claims: Vec<ClaimState>,
    read_pos: usize,
    t_now: Step,
}

impl<'a> FeatureTracker<'a> {
    pub fn new(g: &'a Graph, centrality: &'a CentralityMap, spec: FeatureSpec, num_claims: usize) -> Self {
        let blank = ClaimState {
            cascades: Vec::new(),
            finalized: vec![(0, Accum::new(spec.depths.len())); spec.snapshots.len()],
            origin_count: 0,
            origin_deg_sum: 0,
            origin_deg_max: 0,
            origin_cent_sum: 0.0,
            origin_cent_max: 0.0,
        };
        Self {
            g,
            centrality,
            claims: vec![blank; num_claims],
            spec,
            cascades: Vec::new(),
            cascade_claim: Vec::new(),
            utterance_cascade: Vec::new(),
            read_pos: 0,
            t_now: 0,
        }
    }

    pub fn spec(&self) -> &FeatureSpec {
        &self.spec
    }

    /// Consume every utterance and read with time `< t_now`.
    pub fn ingest(&mut self, log: &SimLog, t_now: Step) {
        assert!(t_now >= self.t_now, "tabulation time moved backwards");
        self.t_now = t_now;
        let horizon = self.spec.max_offset();
        while let Some(u) = log.utterances.get(self.utterance_cascade.len()) {
            if u.created_at >= t_now {
                break;
            }
            if u.is_root() {
                let idx = self.cascades.len() as u32;
                self.cascades.push(Cascade {
                    created_at: u.created_at,
                    retweets: Vec::new(),
                    reads: Vec::new(),
                });
                self.cascade_claim.push(u.claim);
                self.utterance_cascade.push(idx);
                let deg = self.g.in_degree(u.author) as u64;
                let cent = self.centrality.get(u.author);
                let c = &mut self.claims[u.claim as usize];
                c.cascades.push(idx);
                c.origin_count += 1;
                c.origin_deg_sum += deg;
                c.origin_deg_max = c.origin_deg_max.max(deg);
                c.origin_cent_sum += cent;
                c.origin_cent_max = c.origin_cent_max.max(cent);
            } else {
                let idx = self.utterance_cascade[u.root as usize];
                self.utterance_cascade.push(idx);
                let cas = &mut self.cascades[idx as usize];
                if u.created_at <= cas.created_at + horizon {
                    cas.retweets.push((u.created_at, u.depth));
                }
            }
        }
        while let Some(r) = log.reads.get(self.read_pos) {
            if r.t >= t_now {
                break;
            }
            self.read_pos += 1;
            let idx = self.utterance_cascade[r.utterance as usize];
            let depth = log.utterances[r.utterance as usize].depth;
            let cas = &mut self.cascades[idx as usize];
            if r.t <= cas.created_at + horizon {
                cas.reads.push((r.t, r.node, depth));
            }
        }
        self.finalize();
    }

    fn cascade_accum(&self, idx: u32, until: Step) -> Accum {
        let cas = &self.cascades[idx as usize];
        let mut a = Accum::new(self.spec.depths.len());
        for &(t, depth) in &cas.retweets {
            if t <= until {
                a.max_depth = a.max_depth.max(depth);
            }
        }
        for &(t, reader, depth) in &cas.reads {
            if t > until {
                continue;
            }
            let deg = self.g.in_degree(reader) as u64;
            let cent = self.centrality.get(reader);
            a.reads += 1;
            a.deg_sum += deg;
            a.deg_max = a.deg_max.max(deg);
            a.cent_sum += cent;
            a.cent_max = a.cent_max.max(cent);
            if let Some(k) = self.spec.depths.iter().position(|&d| d == depth) {
                a.at_depth[k] += 1;
            }
        }
        a
    }

    fn finalize(&mut self) {
        let t_now = self.t_now;
        for claim in 0..self.claims.len() {
            for (si, &s) in self.spec.snapshots.iter().enumerate() {
                loop {
                    let (done, _) = self.claims[claim].finalized[si];
                    let Some(&idx) = self.claims[claim].cascades.get(done) else {
                        break;
                    };
                    let until = self.cascades[idx as usize].created_at + s;
                    if until >= t_now {
                        break;
                    }
                    let acc = self.cascade_accum(idx, until);
                    let entry = &mut self.claims[claim].finalized[si];
                    entry.0 += 1;
                    entry.1.merge(&acc);
                }
            }
        }
    }

    /// Number of cascades started for `claim` before the tabulation time.
    pub fn cascade_count(&self, claim: ClaimId) -> usize {
        self.claims[claim as usize].cascades.len()
    }

    /// Feature row for `claim` at the current tabulation time, or `None`
    /// when the claim has not been tweeted yet.
    pub fn row(&self, claim: ClaimId) -> Option<FeatureRow> {
        let c = &self.claims[claim as usize];
        if c.cascades.is_empty() {
            return None;
        }
        let n = c.origin_count as f64;
        let origin = OriginFeatures {
            avg_degree: c.origin_deg_sum as f64 / n,
            max_degree: c.origin_deg_max as f64,
            avg_centrality: c.origin_cent_sum / n,
            max_centrality: c.origin_cent_max,
        };
        let roots = c.cascades.len() as f64;
        let snapshots = self
            .spec
            .snapshots
            .iter()
            .enumerate()
            .map(|(si, &s)| {
                let (done, ref fin) = c.finalized[si];
                let mut acc = fin.clone();
                for &idx in &c.cascades[done..] {
                    let until = self.cascades[idx as usize].created_at + s;
                    acc.merge(&self.cascade_accum(idx, until));
                }
                let per_read = |x: f64| if acc.reads == 0 { 0.0 } else { x / acc.reads as f64 };
                SnapshotFeatures {
                    present: done > 0,
                    nodes_visited: acc.reads as f64 / roots,
                    avg_visit_degree: per_read(acc.deg_sum as f64),
                    max_visit_degree: acc.deg_max as f64,
                    avg_visit_centrality: per_read(acc.cent_sum),
                    max_visit_centrality: acc.cent_max,
                    max_depth: acc.max_depth as f64,
                    nodes_at_depth: acc.at_depth.iter().map(|&x| x as f64 / roots).collect(),
                }
            })
            .collect();
        Some(FeatureRow {
            claim_id: claim,
            tabulated_at: self.t_now,
            origin,
            snapshots,
        })
    }

    /// Rows for every tweeted claim not fact-checked before the current
    /// tabulation time, in claim id order.
    pub fn table(&self, checked_at: &[Option<Step>]) -> FeatureTable {
        let rows = (0..self.claims.len() as ClaimId)
            .filter(|&k| {
                !checked_at
                    .get(k as usize)
                    .copied()
                    .flatten()
                    .is_some_and(|t| t < self.t_now)
            })
            .filter_map(|k| self.row(k))
            .collect();
        FeatureTable {
            spec: self.spec.clone(),
            rows,
        }
    }
}

/// Tabulate features from scratch for all claims at `t_now`.
/// `checked_at[k]` is the fact-check time of claim `k`, if any.
pub fn tabulate_features(
    log: &SimLog,
    g: &Graph,
    centrality: &CentralityMap,
    checked_at: &[Option<Step>],
    t_now: Step,
    spec: &FeatureSpec,
) -> FeatureTable {
    let mut tracker = FeatureTracker::new(g, centrality, spec.clone(), checked_at.len());
    tracker.ingest(log, t_now);
    tracker.table(checked_at)
}
