//! Training data and regressors for check-worthiness scoring.
//!
//! A claim's score is `f1(x) * f2(x)`: `f1` predicts the crowd label (share
//! of simulated labelers who flag the claim) and `f2` predicts how many
//! nodes each utterance of the claim reaches.

use std::io::Write;
use std::path::Path;

use log::warn;
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::SimLog;
use crate::error::{Error, Result};
use crate::features::FeatureTable;
use crate::gbdt::{self, GbdtParams, GradientBoosting, Regressor};
use crate::graph::{Graph, NodeId};
use crate::rng::{derive_seed, rng_from, SimRng};
use crate::world::{Claim, ClaimId, Step, Veracity, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClaimStrategy {
    Virality,
    StratifiedVirality,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LabelStrategy {
    Random,
    Stratified,
    KnowledgeableCommunity,
}

impl ClaimStrategy {
    pub const ALL: [ClaimStrategy; 2] = [ClaimStrategy::Virality, ClaimStrategy::StratifiedVirality];

    pub fn name(self) -> &'static str {
        match self {
            ClaimStrategy::Virality => "Virality",
            ClaimStrategy::StratifiedVirality => "StratifiedVirality",
        }
    }
}

impl LabelStrategy {
    pub const ALL: [LabelStrategy; 3] = [
        LabelStrategy::Random,
        LabelStrategy::Stratified,
        LabelStrategy::KnowledgeableCommunity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LabelStrategy::Random => "Random",
            LabelStrategy::Stratified => "Stratified",
            LabelStrategy::KnowledgeableCommunity => "KnowledgeableCommunity",
        }
    }

    fn tag(self) -> u64 {
        self as u64
    }
}

/// Per-claim engagement (tweets + retweets + reads) before `before`,
/// network-wide and split by the community of the acting node.
#[derive(Debug, Clone, PartialEq)]
pub struct Engagement {
    pub utterances: Vec<u64>,
    pub retweets: Vec<u64>,
    pub reads: Vec<u64>,
    /// `by_community[c][k]`
    pub by_community: Vec<Vec<u64>>,
}

impl Engagement {
    pub fn total(&self, claim: ClaimId) -> u64 {
        let k = claim as usize;
        self.utterances[k] + self.reads[k]
    }
}

pub fn engagement(log: &SimLog, g: &Graph, num_claims: usize, before: Step) -> Engagement {
    let mut e = Engagement {
        utterances: vec![0; num_claims],
        retweets: vec![0; num_claims],
        reads: vec![0; num_claims],
        by_community: vec![vec![0; num_claims]; g.num_communities()],
    };
    for u in log.utterances.iter().filter(|u| u.created_at < before) {
        let k = u.claim as usize;
        e.utterances[k] += 1;
        if !u.is_root() {
            e.retweets[k] += 1;
        }
        e.by_community[g.community(u.author)][k] += 1;
    }
    for r in log.reads.iter().filter(|r| r.t < before) {
        let k = log.utterances[r.utterance as usize].claim as usize;
        e.reads[k] += 1;
        e.by_community[g.community(r.node)][k] += 1;
    }
    e
}

/// Claims with a positive count, ranked by count descending then id.
fn ranked(counts: impl Iterator<Item = u64>) -> Vec<ClaimId> {
    let mut v: Vec<(u64, ClaimId)> = counts
        .enumerate()
        .filter(|&(_, c)| c > 0)
        .map(|(k, c)| (c, k as ClaimId))
        .collect();
    v.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    v.into_iter().map(|(_, k)| k).collect()
}

fn active_ranking(e: &Engagement) -> Vec<ClaimId> {
    let active: Vec<u64> = (0..e.utterances.len())
        .map(|k| if e.utterances[k] > 0 { e.total(k as ClaimId) } else { 0 })
        .collect();
    ranked(active.into_iter())
}

/// The `n` claims with the most network-wide engagement.
pub fn sample_claims_virality(e: &Engagement, n: usize) -> Result<Vec<ClaimId>> {
    if n == 0 {
        return Err(Error::InvalidParam("n must be at least 1".into()));
    }
    let mut out = active_ranking(e);
    if out.len() < n {
        warn!("only {} claims have been tweeted, fewer than n = {n}", out.len());
    }
    out.truncate(n);
    Ok(out)
}

/// The top `n / C` claims by engagement inside each community, deduplicated
/// and backfilled from the network-wide ranking.
pub fn sample_claims_stratified(e: &Engagement, n: usize) -> Result<Vec<ClaimId>> {
    let c = e.by_community.len();
    if n < c {
        return Err(Error::InvalidParam(format!(
            "n = {n} is smaller than the number of communities {c}"
        )));
    }
    let active: Vec<bool> = e.utterances.iter().map(|&u| u > 0).collect();
    let mut chosen = vec![false; active.len()];
    let mut out = Vec::with_capacity(n);
    for counts in &e.by_community {
        let local = ranked(counts.iter().enumerate().map(|(k, &x)| if active[k] { x } else { 0 }));
        for k in local.into_iter().take(n / c) {
            if !chosen[k as usize] {
                chosen[k as usize] = true;
                out.push(k);
            }
        }
    }
    for k in active_ranking(e) {
        if out.len() >= n {
            break;
        }
        if !chosen[k as usize] {
            chosen[k as usize] = true;
            out.push(k);
        }
    }
    if out.len() < n {
        warn!("only {} claims have been tweeted, fewer than n = {n}", out.len());
    }
    Ok(out)
}

pub fn sample_claims(strategy: ClaimStrategy, e: &Engagement, n: usize) -> Result<Vec<ClaimId>> {
    match strategy {
        ClaimStrategy::Virality => sample_claims_virality(e, n),
        ClaimStrategy::StratifiedVirality => sample_claims_stratified(e, n),
    }
}

/// Probability that a labeler with `belief` flags a claim of `veracity`.
pub fn label_probability(belief: f64, veracity: Veracity) -> f64 {
    match veracity {
        Veracity::Anti => 1.0 - belief,
        Veracity::Noise => 0.05,
        Veracity::Misinfo => belief,
    }
}

/// Label given a uniform draw `u` in [0, 1).
pub fn label_from_draw(belief: f64, veracity: Veracity, u: f64) -> bool {
    u < label_probability(belief, veracity)
}

pub fn simulate_label<R: Rng + ?Sized>(labeler: NodeId, claim: &Claim, w: &WorldState, rng: &mut R) -> bool {
    let b = w.node(labeler).belief[claim.topic as usize];
    label_from_draw(b, claim.veracity, rng.random())
}

fn draw_from(pool: &[NodeId], count: usize, rng: &mut SimRng, out: &mut Vec<NodeId>) {
    if pool.is_empty() || count == 0 {
        return;
    }
    if count <= pool.len() {
        out.extend(index::sample(rng, pool.len(), count).into_iter().map(|i| pool[i]));
    } else {
        warn!(
            "labeler pool of {} is smaller than {count}; sampling with replacement",
            pool.len()
        );
        out.extend((0..count).map(|_| pool[rng.random_range(0..pool.len())]));
    }
}

/// Pick the labelers for `claim` under `strategy`.
pub fn choose_labelers(
    claim: &Claim,
    strategy: LabelStrategy,
    m: usize,
    g: &Graph,
    w: &WorldState,
    rng: &mut SimRng,
) -> Result<Vec<NodeId>> {
    if m == 0 {
        return Err(Error::InvalidParam("m must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(m);
    match strategy {
        LabelStrategy::Random => {
            let all: Vec<NodeId> = (0..g.num_nodes() as NodeId).collect();
            draw_from(&all, m, rng, &mut out);
        }
        LabelStrategy::Stratified => {
            let c = g.num_communities();
            if m < c {
                return Err(Error::InvalidParam(format!(
                    "m = {m} is smaller than the number of communities {c}"
                )));
            }
            for members in g.community_members() {
                draw_from(&members, m / c, rng, &mut out);
            }
        }
        LabelStrategy::KnowledgeableCommunity => {
            let c = w.config.most_knowledgeable_community(claim.topic as usize);
            let members = g.community_members().swap_remove(c);
            draw_from(&members, m, rng, &mut out);
        }
    }
    Ok(out)
}

/// Share of labelers who flag the claim, plus the labelers themselves.
pub fn aggregate_labels(
    claim: &Claim,
    strategy: LabelStrategy,
    m: usize,
    g: &Graph,
    w: &WorldState,
    rng: &mut SimRng,
) -> Result<(f64, Vec<NodeId>)> {
    let labelers = choose_labelers(claim, strategy, m, g, w, rng)?;
    if labelers.is_empty() {
        return Err(Error::Empty("no labelers available".into()));
    }
    let yes = labelers.iter().filter(|&&j| simulate_label(j, claim, w, rng)).count();
    Ok((yes as f64 / labelers.len() as f64, labelers))
}

/// Average number of reads and retweets per utterance of `claim`.
pub fn engagement_target(e: &Engagement, claim: ClaimId) -> Result<f64> {
    let k = claim as usize;
    if e.utterances[k] == 0 {
        return Err(Error::Empty(format!("claim {claim} has no utterances")));
    }
    Ok((e.reads[k] + e.retweets[k]) as f64 / e.utterances[k] as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub claim_strategy: ClaimStrategy,
    pub label_strategy: LabelStrategy,
    pub m: usize,
    pub labelers: Vec<Vec<NodeId>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    pub claim_ids: Vec<ClaimId>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub s: Vec<f64>,
    pub provenance: Provenance,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.claim_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.claim_ids.is_empty()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "claim_id,y,s,claim_strategy,label_strategy,m,labelers")?;
        let p = &self.provenance;
        for i in 0..self.len() {
            let ids: Vec<String> = p.labelers[i].iter().map(u32::to_string).collect();
            writeln!(
                f,
                "{},{:?},{:?},{},{},{},{}",
                self.claim_ids[i],
                self.y[i],
                self.s[i],
                p.claim_strategy.name(),
                p.label_strategy.name(),
                p.m,
                ids.join(";")
            )?;
        }
        f.flush()?;
        Ok(())
    }
}

/// Assemble a training set from the world at the end of the pre-period.
/// `features` must be tabulated at the same time as `before`.
#[allow(clippy::too_many_arguments)]
pub fn build_training_set(
    g: &Graph,
    w: &WorldState,
    features: &FeatureTable,
    before: Step,
    claim_strategy: ClaimStrategy,
    label_strategy: LabelStrategy,
    n: usize,
    m: usize,
    seed: u64,
) -> Result<TrainingSet> {
    let e = engagement(&w.log, g, w.claims.len(), before);
    let claim_ids = sample_claims(claim_strategy, &e, n)?;
    let mut set = TrainingSet {
        claim_ids: Vec::with_capacity(claim_ids.len()),
        x: Vec::new(),
        y: Vec::new(),
        s: Vec::new(),
        provenance: Provenance {
            claim_strategy,
            label_strategy,
            m,
            labelers: Vec::new(),
        },
    };
    for k in claim_ids {
        let row = features
            .row(k)
            .ok_or_else(|| Error::Mismatch(format!("no feature row for sampled claim {k}")))?;
        let mut rng = rng_from(derive_seed(seed, &[label_strategy.tag(), k as u64]));
        let (y, labelers) = aggregate_labels(w.claim(k), label_strategy, m, g, w, &mut rng)?;
        set.claim_ids.push(k);
        set.x.push(row.to_vector());
        set.y.push(y);
        set.s.push(engagement_target(&e, k)?);
        set.provenance.labelers.push(labelers);
    }
    Ok(set)
}

/// The pair of regressors behind a check-worthiness score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckworthinessModel {
    pub claim_strategy: ClaimStrategy,
    pub label_strategy: LabelStrategy,
    pub f1: GradientBoosting,
    pub f2: GradientBoosting,
}

impl CheckworthinessModel {
    pub fn train(set: &TrainingSet, params: &GbdtParams, seed: u64) -> Result<Self> {
        Ok(Self {
            claim_strategy: set.provenance.claim_strategy,
            label_strategy: set.provenance.label_strategy,
            f1: gbdt::fit(&set.x, &set.y, params, derive_seed(seed, &[1]))?,
            f2: gbdt::fit(&set.x, &set.s, params, derive_seed(seed, &[2]))?,
        })
    }

    pub fn score(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        score(&self.f1, &self.f2, rows)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }
}

/// Combine the two predictions into a single priority.
pub fn combine(f1: f64, f2: f64) -> f64 {
    f1.clamp(0.0, 1.0) * f2.max(0.0)
}

pub fn score(f1: &impl Regressor, f2: &impl Regressor, rows: &[Vec<f64>]) -> Vec<f64> {
    rows.iter()
        .map(|x| combine(f1.predict_one(x), f2.predict_one(x)))
        .collect()
}
