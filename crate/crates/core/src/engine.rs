//! The discrete-time simulation loop.
//!
//! Every step visits nodes in ascending id order. An awake node may tweet,
//! then reads a bounded random subset of its inbox, updating its belief and
//! possibly retweeting each item. Every inbox is cleared on the node's turn,
//! awake or not. All randomness comes from the world's single RNG stream so
//! a run is a pure function of its starting state.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::world::{Claim, ClaimId, NodeKind, Step, Veracity, WorldState};

pub type UtteranceId = u32;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub id: UtteranceId,
    pub claim: ClaimId,
    pub author: NodeId,
    pub created_at: Step,
    pub parent: Option<UtteranceId>,
    pub depth: u32,
    /// Id of the tweet that started this cascade (itself for tweets).
    pub root: UtteranceId,
}

impl Utterance {
    pub fn is_root(&self) -> bool {
        self.parent.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReadEvent {
    pub node: NodeId,
    pub utterance: UtteranceId,
    pub t: Step,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefCheckpoint {
    pub t: Step,
    /// `beliefs[node][topic]`
    pub beliefs: Vec<Vec<f64>>,
}

/// Append-only record of everything that happened in a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimLog {
    pub utterances: Vec<Utterance>,
    pub reads: Vec<ReadEvent>,
    pub belief_trace: Vec<BeliefCheckpoint>,
    /// Misinformation reads per step, flattened as `[t][community][topic]`.
    misinfo_reads: Vec<u32>,
    num_communities: usize,
    num_topics: usize,
}

impl SimLog {
    pub fn new(num_communities: usize, num_topics: usize) -> Self {
        Self {
            utterances: Vec::new(),
            reads: Vec::new(),
            belief_trace: Vec::new(),
            misinfo_reads: Vec::new(),
            num_communities,
            num_topics,
        }
    }

    pub fn num_topics(&self) -> usize {
        self.num_topics
    }

    pub fn num_communities(&self) -> usize {
        self.num_communities
    }

    /// Number of steps with misinformation-read counters.
    pub fn steps_recorded(&self) -> usize {
        self.misinfo_reads.len() / (self.num_communities * self.num_topics).max(1)
    }

    pub fn misinfo_reads_at(&self, t: Step, community: usize, topic: usize) -> u32 {
        let stride = self.num_communities * self.num_topics;
        self.misinfo_reads
            .get(t as usize * stride + community * self.num_topics + topic)
            .copied()
            .unwrap_or(0)
    }

    pub(crate) fn ensure_step(&mut self, t: Step) {
        let stride = self.num_communities * self.num_topics;
        let want = (t as usize + 1) * stride;
        if self.misinfo_reads.len() < want {
            self.misinfo_reads.resize(want, 0);
        }
    }

    pub(crate) fn count_misinfo_read(&mut self, t: Step, community: usize, topic: usize) {
        self.ensure_step(t);
        let stride = self.num_communities * self.num_topics;
        self.misinfo_reads[t as usize * stride + community * self.num_topics + topic] += 1;
    }

    pub fn checkpoint(&self, t: Step) -> Option<&BeliefCheckpoint> {
        self.belief_trace.iter().find(|c| c.t == t)
    }

    /// SHA-256 over every utterance and read that happened before `t_end`.
    pub fn prefix_hash(&self, t_end: Step) -> String {
        let mut h = Sha256::new();
        for u in self.utterances.iter().take_while(|u| u.created_at < t_end) {
            h.update(u.id.to_le_bytes());
            h.update(u.claim.to_le_bytes());
            h.update(u.author.to_le_bytes());
            h.update(u.created_at.to_le_bytes());
            h.update(u.parent.map_or(u32::MAX, |p| p).to_le_bytes());
            h.update(u.depth.to_le_bytes());
        }
        h.update(b"reads");
        for r in self.reads.iter().take_while(|r| r.t < t_end) {
            h.update(r.node.to_le_bytes());
            h.update(r.utterance.to_le_bytes());
            h.update(r.t.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Write `utterances.csv`, `reads.csv` and `belief_checkpoints.csv`.
    /// Impactedness is written next to each belief so that belief changes
    /// can be weighted without the world state.
    pub fn write_csv(&self, dir: &Path, w: &WorldState) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut f = BufWriter::new(File::create(dir.join("utterances.csv"))?);
        writeln!(f, "id,claim,author,t,parent,depth")?;
        for u in &self.utterances {
            let parent = u.parent.map(|p| p.to_string()).unwrap_or_default();
            writeln!(
                f,
                "{},{},{},{},{},{}",
                u.id, u.claim, u.author, u.created_at, parent, u.depth
            )?;
        }
        f.flush()?;
        let mut f = BufWriter::new(File::create(dir.join("reads.csv"))?);
        writeln!(f, "node,utterance,t")?;
        for r in &self.reads {
            writeln!(f, "{},{},{}", r.node, r.utterance, r.t)?;
        }
        f.flush()?;
        self.write_belief_checkpoints(&dir.join("belief_checkpoints.csv"), w)?;
        write_claims(&dir.join("claims.csv"), &w.claims)?;
        Ok(())
    }

    pub fn write_belief_checkpoints(&self, path: &Path, w: &WorldState) -> Result<()> {
        let mut f = BufWriter::new(File::create(path)?);
        writeln!(f, "t,node,topic,belief,impactedness")?;
        for cp in &self.belief_trace {
            for (j, row) in cp.beliefs.iter().enumerate() {
                for (topic, b) in row.iter().enumerate() {
                    let imp = w.nodes[j].impactedness[topic];
                    writeln!(f, "{},{},{},{:?},{:?}", cp.t, j, topic, b, imp)?;
                }
            }
        }
        f.flush()?;
        Ok(())
    }
}

pub fn write_claims(path: &Path, claims: &[Claim]) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    writeln!(f, "id,topic,veracity,virality,fact_checked_at,blocked")?;
    for k in claims {
        let checked = k.fact_checked_at.map(|t| t.to_string()).unwrap_or_default();
        writeln!(
            f,
            "{},{},{},{:?},{},{}",
            k.id,
            k.topic,
            k.veracity.value(),
            k.virality,
            checked,
            k.blocked as u8
        )?;
    }
    f.flush()?;
    Ok(())
}

/// A log replayed from CSV files together with the claims it references.
#[derive(Debug, Clone)]
pub struct ExportedRun {
    pub log: SimLog,
    pub claims: Vec<Claim>,
    /// `impactedness[node][topic]`, when checkpoints were exported.
    pub impactedness: Vec<Vec<f64>>,
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    Ok(csv::ReaderBuilder::new().has_headers(true).from_path(path)?)
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, path: &Path, line: usize) -> Result<T> {
    rec.get(i).and_then(|s| s.parse().ok()).ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: format!("bad field {i}"),
    })
}

fn opt_field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, path: &Path, line: usize) -> Result<Option<T>> {
    match rec.get(i) {
        Some("") | None => Ok(None),
        Some(_) => field(rec, i, path, line).map(Some),
    }
}

/// Read back the files written by [`SimLog::write_csv`]. Misinformation
/// read counters are rebuilt from the reads using `communities`.
pub fn read_exported_run(dir: &Path, communities: &[u32], num_topics: usize) -> Result<ExportedRun> {
    let num_communities = communities.iter().map(|&c| c as usize + 1).max().unwrap_or(0);
    let mut log = SimLog::new(num_communities, num_topics);

    let path = dir.join("claims.csv");
    let mut claims = Vec::new();
    for (i, rec) in csv_reader(&path)?.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let v: i8 = field(&rec, 2, &path, line)?;
        claims.push(Claim {
            id: field(&rec, 0, &path, line)?,
            topic: field(&rec, 1, &path, line)?,
            veracity: Veracity::from_value(v).ok_or_else(|| Error::Parse {
                path: path.clone(),
                line,
                msg: format!("veracity {v}"),
            })?,
            virality: field(&rec, 3, &path, line)?,
            fact_checked_at: opt_field(&rec, 4, &path, line)?,
            blocked: field::<u8>(&rec, 5, &path, line)? == 1,
        });
    }

    let path = dir.join("utterances.csv");
    for (i, rec) in csv_reader(&path)?.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let parent: Option<UtteranceId> = opt_field(&rec, 4, &path, line)?;
        let id: UtteranceId = field(&rec, 0, &path, line)?;
        let root = match parent {
            Some(p) => log
                .utterances
                .get(p as usize)
                .map(|u| u.root)
                .ok_or_else(|| Error::Parse {
                    path: path.clone(),
                    line,
                    msg: format!("parent {p} precedes its child"),
                })?,
            None => id,
        };
        log.utterances.push(Utterance {
            id,
            claim: field(&rec, 1, &path, line)?,
            author: field(&rec, 2, &path, line)?,
            created_at: field(&rec, 3, &path, line)?,
            parent,
            depth: field(&rec, 5, &path, line)?,
            root,
        });
    }

    let path = dir.join("reads.csv");
    for (i, rec) in csv_reader(&path)?.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let r = ReadEvent {
            node: field(&rec, 0, &path, line)?,
            utterance: field(&rec, 1, &path, line)?,
            t: field(&rec, 2, &path, line)?,
        };
        let u = &log.utterances[r.utterance as usize];
        let k = &claims[u.claim as usize];
        log.ensure_step(r.t);
        if k.veracity == Veracity::Misinfo {
            log.count_misinfo_read(r.t, communities[r.node as usize] as usize, k.topic as usize);
        }
        log.reads.push(r);
    }

    let (belief_trace, impactedness) =
        read_belief_checkpoints(&dir.join("belief_checkpoints.csv"), communities.len(), num_topics)?;
    log.belief_trace = belief_trace;
    Ok(ExportedRun {
        log,
        claims,
        impactedness,
    })
}

/// Read a `belief_checkpoints.csv` file: the checkpoints in file order and
/// `impactedness[node][topic]`.
pub fn read_belief_checkpoints(
    path: &Path,
    num_nodes: usize,
    num_topics: usize,
) -> Result<(Vec<BeliefCheckpoint>, Vec<Vec<f64>>)> {
    let mut trace: Vec<BeliefCheckpoint> = Vec::new();
    let mut impactedness = vec![vec![0.0; num_topics]; num_nodes];
    for (i, rec) in csv_reader(path)?.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let t: Step = field(&rec, 0, path, line)?;
        let node: usize = field(&rec, 1, path, line)?;
        let topic: usize = field(&rec, 2, path, line)?;
        if node >= num_nodes || topic >= num_topics {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                msg: format!("node {node} topic {topic} out of range"),
            });
        }
        if trace.last().is_none_or(|c| c.t != t) {
            trace.push(BeliefCheckpoint {
                t,
                beliefs: vec![vec![0.0; num_topics]; num_nodes],
            });
        }
        trace.last_mut().unwrap().beliefs[node][topic] = field(&rec, 3, path, line)?;
        impactedness[node][topic] = field(&rec, 4, path, line)?;
    }
    Ok((trace, impactedness))
}

/// Probability of every non-blocked claim in `K^topic_veracity` being chosen
/// for a tweet: a softmax over `r * virality^q`.
pub fn claim_selection_probabilities(w: &WorldState, topic: usize, veracity: Veracity) -> Vec<(ClaimId, f64)> {
    let group = &w.claim_groups[topic][veracity.index()];
    let live: Vec<ClaimId> = group
        .iter()
        .copied()
        .filter(|&k| !w.claims[k as usize].blocked)
        .collect();
    let total: f64 = live.iter().map(|&k| w.selection_weight[k as usize]).sum();
    live.into_iter()
        .map(|k| (k, w.selection_weight[k as usize] / total))
        .collect()
}

/// Draw a claim from the selection softmax, skipping blocked claims.
pub fn sample_claim<R: Rng + ?Sized>(w: &WorldState, topic: usize, veracity: Veracity, rng: &mut R) -> Option<ClaimId> {
    sample_from_group(
        &w.claims,
        &w.claim_groups[topic][veracity.index()],
        &w.selection_weight,
        rng,
    )
}

fn sample_from_group<R: Rng + ?Sized>(
    claims: &[Claim],
    group: &[ClaimId],
    weights: &[f64],
    rng: &mut R,
) -> Option<ClaimId> {
    let live = || group.iter().copied().filter(|&k| !claims[k as usize].blocked);
    let total: f64 = live().map(|k| weights[k as usize]).sum();
    let x = rng.random::<f64>() * total;
    if total <= 0.0 {
        return None;
    }
    let mut acc = 0.0;
    let mut last = None;
    for k in live() {
        acc += weights[k as usize];
        last = Some(k);
        if x < acc {
            return Some(k);
        }
    }
    last
}

fn choose_topic<R: Rng + ?Sized>(impactedness: &[f64], rng: &mut R) -> usize {
    let total: f64 = impactedness.iter().sum();
    let x = rng.random::<f64>();
    if total <= 0.0 {
        return ((x * impactedness.len() as f64) as usize).min(impactedness.len() - 1);
    }
    let mut acc = 0.0;
    for (topic, &i) in impactedness.iter().enumerate() {
        acc += i / total;
        if x < acc {
            return topic;
        }
    }
    impactedness.len() - 1
}

/// Veracity of a normal node's tweet: misinformation with probability
/// `share * belief`, anti-misinformation with `share * (1 - belief)`,
/// noise otherwise.
pub fn choose_veracity(kind: NodeKind, belief: f64, noise_tweet_share: f64, u: f64) -> Veracity {
    match kind {
        NodeKind::Bot => Veracity::Misinfo,
        NodeKind::Normal => {
            if u < noise_tweet_share * belief {
                Veracity::Misinfo
            } else if u < noise_tweet_share {
                Veracity::Anti
            } else {
                Veracity::Noise
            }
        }
    }
}

fn post(g: &Graph, w: &mut WorldState, claim: ClaimId, author: NodeId, parent: Option<UtteranceId>) -> UtteranceId {
    let id = w.log.utterances.len() as UtteranceId;
    let (depth, root) = match parent {
        Some(p) => {
            let pu = &w.log.utterances[p as usize];
            (pu.depth + 1, pu.root)
        }
        None => (0, id),
    };
    w.log.utterances.push(Utterance {
        id,
        claim,
        author,
        created_at: w.clock,
        parent,
        depth,
        root,
    });
    for &f in g.followers(author) {
        w.nodes[f as usize].inbox.push(id);
    }
    id
}

/// Pick a topic, veracity and claim for `node` and post it. Returns `None`
/// when every claim of the drawn (topic, veracity) has been blocked.
pub fn select_tweet(g: &Graph, w: &mut WorldState, node: NodeId) -> Option<UtteranceId> {
    let n = &w.nodes[node as usize];
    let topic = choose_topic(&n.impactedness, &mut w.rng);
    let u = w.rng.random::<f64>();
    let veracity = choose_veracity(n.kind, n.belief[topic], w.config.noise_tweet_share, u);
    let group = &w.claim_groups[topic][veracity.index()];
    let claim = sample_from_group(&w.claims, group, &w.selection_weight, &mut w.rng);
    claim.map(|k| post(g, w, k, node, None))
}

/// Belief change from reading the `n`-th utterance on a topic.
pub fn belief_after_read(belief: f64, learning_rate: f64, n: u32, veracity: Veracity, impactedness: f64) -> f64 {
    let v = veracity.value() as f64;
    (belief + learning_rate * (1.0 / (n as f64 + 1.0)) * v * (1.0 + impactedness)).clamp(0.0, 1.0)
}

/// Apply one read to `node`'s belief on `topic` and bump its read count.
pub fn update_belief(w: &mut WorldState, node: NodeId, topic: usize, veracity: Veracity) -> f64 {
    let alpha = w.config.belief_learning_rate;
    let n = &mut w.nodes[node as usize];
    let b = belief_after_read(
        n.belief[topic],
        alpha,
        n.num_read[topic],
        veracity,
        n.impactedness[topic],
    );
    n.belief[topic] = b;
    n.num_read[topic] += 1;
    b
}

/// Retweet probability given the reader's belief, the poster's prestige and
/// the claim's virality.
pub fn retweet_chance(scale: f64, author_prestige: f64, virality: f64, veracity: Veracity, belief: f64) -> f64 {
    let factor = match veracity {
        Veracity::Anti => 1.0 - belief,
        Veracity::Noise => 0.5,
        Veracity::Misinfo => belief,
    };
    (scale * author_prestige * virality * factor).min(1.0)
}

pub fn retweet_probability(w: &WorldState, node: NodeId, u: &Utterance) -> f64 {
    let claim = &w.claims[u.claim as usize];
    retweet_chance(
        w.config.retweet_scale,
        w.nodes[u.author as usize].prestige,
        claim.virality,
        claim.veracity,
        w.nodes[node as usize].belief[claim.topic as usize],
    )
}

fn read(g: &Graph, w: &mut WorldState, node: NodeId, uid: UtteranceId) {
    let t = w.clock;
    let claim_id = w.log.utterances[uid as usize].claim;
    let (topic, veracity) = {
        let k = &w.claims[claim_id as usize];
        (k.topic as usize, k.veracity)
    };
    update_belief(w, node, topic, veracity);
    w.log.reads.push(ReadEvent {
        node,
        utterance: uid,
        t,
    });
    if veracity == Veracity::Misinfo {
        w.log.count_misinfo_read(t, g.community(node), topic);
    }
    let p = retweet_probability(w, node, &w.log.utterances[uid as usize]);
    let x = w.rng.random::<f64>();
    if p > 0.0 && x <= p {
        post(g, w, claim_id, node, Some(uid));
    }
}

/// Advance the world by one step.
pub fn step(g: &Graph, w: &mut WorldState) {
    let t = w.clock;
    w.log.ensure_step(t);
    let cap = w.config.inbox_read_cap;
    let wake_prob = w.config.wake_prob;
    for j in 0..w.nodes.len() {
        let node = j as NodeId;
        let awake = w.rng.random::<f64>() < wake_prob;
        w.nodes[j].wake = awake;
        if !awake {
            w.nodes[j].inbox.clear();
            continue;
        }
        let tweets = match w.nodes[j].kind {
            NodeKind::Bot => true,
            NodeKind::Normal => {
                let prestige = w.nodes[j].prestige;
                let x = w.rng.random::<f64>();
                prestige > 0.0 && prestige >= x
            }
        };
        if tweets {
            select_tweet(g, w, node);
        }
        let mut inbox = std::mem::take(&mut w.nodes[j].inbox);
        inbox.retain(|&u| !w.claims[w.log.utterances[u as usize].claim as usize].blocked);
        let k = cap.min(inbox.len());
        for i in 0..k {
            let pick = w.rng.random_range(i..inbox.len());
            inbox.swap(i, pick);
            read(g, w, node, inbox[i]);
        }
        inbox.clear();
        w.nodes[j].inbox = inbox;
    }
    w.clock += 1;
}

/// Hook invoked at each step boundary during [`run`], before the nodes of
/// step `w.clock` act. Fact-checks decided here take effect for the whole
/// step.
pub trait StepHook {
    fn before_step(&mut self, g: &Graph, w: &mut WorldState) -> Result<()>;
}

/// Store the current beliefs as a checkpoint at `w.clock`.
pub fn record_checkpoint(w: &mut WorldState) {
    let t = w.clock;
    let beliefs = w.nodes.iter().map(|n| n.belief.clone()).collect();
    w.log.belief_trace.retain(|c| c.t != t);
    w.log.belief_trace.push(BeliefCheckpoint { t, beliefs });
}

/// Step until `w.clock == t_end`, then checkpoint beliefs.
pub fn run(g: &Graph, w: &mut WorldState, t_end: Step, mut hook: Option<&mut dyn StepHook>) -> Result<()> {
    if w.clock > t_end {
        return Err(Error::InvalidParam(format!("clock {} already past {t_end}", w.clock)));
    }
    if w.clock == t_end {
        return Ok(());
    }
    while w.clock < t_end {
        if let Some(h) = hook.as_deref_mut() {
            h.before_step(g, w)?;
        }
        step(g, w);
    }
    record_checkpoint(w);
    Ok(())
}

const SNAPSHOT_MAGIC: &[u8; 8] = b"TACITSNP";
pub const SNAPSHOT_VERSION: u32 = 1;

/// A serialized world: magic, little-endian format version, CBOR body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snapshot {
    bytes: Vec<u8>,
}

impl Snapshot {
    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        Self { bytes }
    }

    pub fn write_to(&self, path: &Path) -> Result<()> {
        std::fs::write(path, &self.bytes)?;
        Ok(())
    }

    pub fn read_from(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        File::open(path)?.read_to_end(&mut bytes)?;
        Ok(Self { bytes })
    }
}

pub fn snapshot(w: &WorldState) -> Result<Snapshot> {
    let mut bytes = Vec::with_capacity(1 << 16);
    bytes.extend_from_slice(SNAPSHOT_MAGIC);
    bytes.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    ciborium::into_writer(w, &mut bytes).map_err(|e| Error::SnapshotCodec(e.to_string()))?;
    Ok(Snapshot { bytes })
}

pub fn restore(s: &Snapshot) -> Result<WorldState> {
    let b = &s.bytes;
    if b.len() < 12 || &b[..8] != SNAPSHOT_MAGIC {
        return Err(Error::SnapshotMagic);
    }
    let found = u32::from_le_bytes(b[8..12].try_into().expect("4 bytes"));
    if found != SNAPSHOT_VERSION {
        return Err(Error::SnapshotVersion {
            expected: SNAPSHOT_VERSION,
            found,
        });
    }
    ciborium::from_reader(&b[12..]).map_err(|e| Error::SnapshotCodec(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generate_synthetic_graph;
    use crate::world::{init_world, ScenarioConfig};

    fn small() -> (Graph, WorldState) {
        let g = generate_synthetic_graph(&[40, 25, 15], 0.15, 0.02, 3).unwrap();
        let w = init_world(&g, &ScenarioConfig::default(), 4).unwrap();
        (g, w)
    }

    #[test]
    fn belief_examples() {
        assert!((belief_after_read(0.5, 0.1, 0, Veracity::Misinfo, 0.5) - 0.65).abs() < 1e-12);
        assert_eq!(belief_after_read(0.42, 0.1, 3, Veracity::Noise, 0.9), 0.42);
        assert!((belief_after_read(0.5, 0.1, 9, Veracity::Anti, 0.0) - 0.49).abs() < 1e-12);
        assert_eq!(belief_after_read(0.99, 1.0, 0, Veracity::Misinfo, 1.0), 1.0);
        assert_eq!(belief_after_read(0.01, 1.0, 0, Veracity::Anti, 1.0), 0.0);
    }

    #[test]
    fn retweet_examples() {
        assert_eq!(retweet_chance(0.6, 1.0, 1.7, Veracity::Misinfo, 0.0), 0.0);
        assert_eq!(retweet_chance(0.6, 1.0, 1.7, Veracity::Anti, 1.0), 0.0);
        assert_eq!(retweet_chance(1.0, 1.0, 1.0, Veracity::Noise, 0.3), 0.5);
        assert_eq!(retweet_chance(5.0, 1.0, 2.0, Veracity::Misinfo, 1.0), 1.0);
    }

    #[test]
    fn veracity_mix() {
        assert_eq!(choose_veracity(NodeKind::Bot, 0.0, 0.3, 0.99), Veracity::Misinfo);
        assert_eq!(choose_veracity(NodeKind::Normal, 0.5, 0.3, 0.1), Veracity::Misinfo);
        assert_eq!(choose_veracity(NodeKind::Normal, 0.5, 0.3, 0.2), Veracity::Anti);
        assert_eq!(choose_veracity(NodeKind::Normal, 0.5, 0.3, 0.5), Veracity::Noise);
    }

    #[test]
    fn softmax_symmetry_and_hand_values() {
        let (_, mut w) = small();
        let group = w.claim_groups[0][Veracity::Anti.index()].clone();
        for &k in &group[2..] {
            w.claims[k as usize].blocked = true;
        }
        for (k, f) in [(group[0], 1.0), (group[1], 1.1)] {
            w.claims[k as usize].virality = f;
        }
        let mut params = w.config.virality.clone();
        params.r1 = 9.0;
        for (q, want) in [(1.0, 0.710_949_502_625_003_9), (2.0, 0.868_755_530_561_476_8)] {
            params.q1 = q;
            w.selection_weight = crate::world::selection_weights(&w.claims, &w.claim_groups, &params);
            let p = claim_selection_probabilities(&w, 0, Veracity::Anti);
            assert_eq!(p.len(), 2);
            assert!((p[1].1 - want).abs() < 1e-9, "q={q}: {}", p[1].1);
        }
        w.claims[group[1] as usize].virality = 1.0;
        w.selection_weight = crate::world::selection_weights(&w.claims, &w.claim_groups, &params);
        let p = claim_selection_probabilities(&w, 0, Veracity::Anti);
        assert!((p[0].1 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn all_blocked_means_no_tweet() {
        let (g, mut w) = small();
        for k in &mut w.claims {
            if k.veracity == Veracity::Misinfo {
                k.blocked = true;
            }
        }
        let bot = 0;
        w.nodes[bot].kind = NodeKind::Bot;
        assert!(select_tweet(&g, &mut w, bot as NodeId).is_none());
        assert!(w.log.utterances.is_empty());
    }

    #[test]
    fn silent_node_emits_nothing() {
        let (g, mut w) = small();
        for n in &mut w.nodes {
            n.prestige = 0.0;
            n.kind = NodeKind::Normal;
        }
        step(&g, &mut w);
        assert!(w.log.utterances.is_empty());
        assert!(w.log.reads.is_empty());
        assert_eq!(w.clock, 1);
    }

    #[test]
    fn awake_bot_tweets_once() {
        let (g, mut w) = small();
        w.config.wake_prob = 1.0;
        w.config.retweet_scale = 0.0;
        for n in &mut w.nodes {
            n.prestige = 0.0;
            n.kind = NodeKind::Normal;
        }
        w.nodes[7].kind = NodeKind::Bot;
        step(&g, &mut w);
        assert_eq!(w.log.utterances.len(), 1);
        assert_eq!(w.log.utterances[0].author, 7);
    }

    #[test]
    fn read_cap_limits_reads_and_clears_inbox() {
        let (g, mut w) = small();
        w.config.wake_prob = 1.0;
        w.config.retweet_scale = 0.0;
        for n in &mut w.nodes {
            n.prestige = 0.0;
            n.kind = NodeKind::Normal;
        }
        let claim = w.claim_groups[0][1][0];
        // seed an inbox of 50 utterances for node 0
        let author = g.following(0).first().copied().unwrap_or(1);
        for _ in 0..50 {
            let id = w.log.utterances.len() as UtteranceId;
            w.log.utterances.push(Utterance {
                id,
                claim,
                author,
                created_at: 0,
                parent: None,
                depth: 0,
                root: id,
            });
            w.nodes[0].inbox.push(id);
        }
        step(&g, &mut w);
        let reads0 = w.log.reads.iter().filter(|r| r.node == 0).count();
        assert_eq!(reads0, 20);
        assert!(w.nodes[0].inbox.is_empty());
    }

    #[test]
    fn run_to_current_clock_is_noop() {
        let (g, mut w) = small();
        let before = w.clone();
        run(&g, &mut w, 0, None).unwrap();
        assert_eq!(before, w);
    }

    #[test]
    fn snapshot_round_trip_is_byte_identical() {
        let (g, mut w) = small();
        run(&g, &mut w, 5, None).unwrap();
        let s = snapshot(&w).unwrap();
        let back = restore(&s).unwrap();
        assert_eq!(back, w);
        assert_eq!(snapshot(&back).unwrap(), s);
    }

    #[test]
    fn snapshot_version_mismatch() {
        let (_, w) = small();
        let mut bytes = snapshot(&w).unwrap().as_bytes().to_vec();
        bytes[8] = 99;
        assert!(matches!(
            restore(&Snapshot::from_bytes(bytes)),
            Err(Error::SnapshotVersion { found: 99, .. })
        ));
        assert!(matches!(
            restore(&Snapshot::from_bytes(b"nope".to_vec())),
            Err(Error::SnapshotMagic)
        ));
    }

    #[test]
    fn restored_copies_are_independent() {
        let (g, mut w) = small();
        run(&g, &mut w, 3, None).unwrap();
        let s = snapshot(&w).unwrap();
        let mut a = restore(&s).unwrap();
        let b = restore(&s).unwrap();
        run(&g, &mut a, 6, None).unwrap();
        assert_eq!(b, w);
        let mut c = restore(&s).unwrap();
        run(&g, &mut c, 6, None).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn beliefs_stay_in_unit_interval() {
        let (g, mut w) = small();
        w.config.belief_learning_rate = 2.0;
        run(&g, &mut w, 15, None).unwrap();
        for n in &w.nodes {
            assert!(n.belief.iter().all(|&b| (0.0..=1.0).contains(&b)));
        }
    }

    #[test]
    fn csv_round_trip() {
        let (g, mut w) = small();
        run(&g, &mut w, 6, None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        w.log.write_csv(dir.path(), &w).unwrap();
        let back = read_exported_run(dir.path(), g.communities(), 2).unwrap();
        assert_eq!(back.log.utterances, w.log.utterances);
        assert_eq!(back.log.reads, w.log.reads);
        assert_eq!(back.log.belief_trace, w.log.belief_trace);
        assert_eq!(back.claims, w.claims);
        for t in 0..6 {
            for c in 0..3 {
                for topic in 0..2 {
                    assert_eq!(
                        back.log.misinfo_reads_at(t, c, topic),
                        w.log.misinfo_reads_at(t, c, topic)
                    );
                }
            }
        }
    }
}
