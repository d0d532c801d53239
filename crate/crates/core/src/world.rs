//! Topics, claims, node state and scenario parameters.

use rand::seq::index;
use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::engine::SimLog;
use crate::error::{Error, Result};
use crate::graph::{compute_prestige, Graph, NodeId};
use crate::rng::{rng_from, SimRng};

pub type ClaimId = u32;
pub type Step = u32;

/// Veracity of a claim: anti-misinformation, noise or misinformation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Veracity {
    Anti,
    Noise,
    Misinfo,
}

impl Veracity {
    pub const ALL: [Veracity; 3] = [Veracity::Anti, Veracity::Noise, Veracity::Misinfo];

    pub fn value(self) -> i8 {
        match self {
            Veracity::Anti => -1,
            Veracity::Noise => 0,
            Veracity::Misinfo => 1,
        }
    }

    pub fn from_value(v: i8) -> Option<Self> {
        match v {
            -1 => Some(Veracity::Anti),
            0 => Some(Veracity::Noise),
            1 => Some(Veracity::Misinfo),
            _ => None,
        }
    }

    pub(crate) fn index(self) -> usize {
        (self.value() + 1) as usize
    }
}

/// Parameters of claim virality and of the claim-selection softmax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ViralityParams {
    pub z1: f64,
    pub z2: f64,
    pub alpha1: f64,
    pub beta1: f64,
    pub alpha2: f64,
    pub beta2: f64,
    pub r1: f64,
    pub r2: f64,
    pub q1: f64,
    pub q2: f64,
}

impl Default for ViralityParams {
    fn default() -> Self {
        Self {
            z1: 1.0,
            z2: 1.5,
            alpha1: 1.0,
            beta1: 17.0,
            alpha2: 5.0,
            beta2: 17.0,
            r1: 9.0,
            r2: 9.0,
            q1: 2.0,
            q2: 1.0,
        }
    }
}

impl ViralityParams {
    /// Softmax temperature and exponent used when choosing among claims of
    /// the given veracity.
    pub fn selection(&self, veracity: Veracity) -> (f64, f64) {
        match veracity {
            Veracity::Misinfo => (self.r2, self.q2),
            _ => (self.r1, self.q1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub num_topics: usize,
    pub claims_per_topic_per_veracity: usize,
    /// Community x topic mean impactedness.
    pub community_impactedness: Vec<Vec<f64>>,
    /// Community x topic mean belief.
    pub community_belief: Vec<Vec<f64>>,
    pub node_draw_stddev: f64,
    pub bot_fraction: f64,
    pub belief_learning_rate: f64,
    pub virality: ViralityParams,
    pub retweet_scale: f64,
    pub inbox_read_cap: usize,
    /// Share of a normal node's tweets that carry a non-noise veracity.
    pub noise_tweet_share: f64,
    pub wake_prob: f64,
}

impl Default for ScenarioConfig {
    /// Majority / minority / expert world with two topics.
    fn default() -> Self {
        Self {
            num_topics: 2,
            claims_per_topic_per_veracity: 100,
            community_impactedness: vec![vec![0.8, 0.2], vec![0.2, 0.8], vec![0.5, 0.5]],
            community_belief: vec![vec![0.7, 0.7], vec![0.7, 0.7], vec![0.1, 0.1]],
            node_draw_stddev: 0.1,
            bot_fraction: 0.05,
            belief_learning_rate: 0.1,
            virality: ViralityParams::default(),
            retweet_scale: 0.6,
            inbox_read_cap: 20,
            noise_tweet_share: 0.3,
            wake_prob: 0.5,
        }
    }
}

fn in_unit(x: f64) -> bool {
    (0.0..=1.0).contains(&x)
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParam(m.to_string()));
        if self.num_topics == 0 {
            return bad("num_topics must be >= 1");
        }
        if self.claims_per_topic_per_veracity == 0 {
            return bad("claims_per_topic_per_veracity must be >= 1");
        }
        if self.inbox_read_cap == 0 {
            return bad("inbox_read_cap must be >= 1");
        }
        for (name, m) in [
            ("community_impactedness", &self.community_impactedness),
            ("community_belief", &self.community_belief),
        ] {
            if m.iter().flatten().any(|&x| !in_unit(x)) {
                return Err(Error::InvalidParam(format!("{name} entries must lie in [0, 1]")));
            }
            if m.iter().any(|row| row.len() != self.num_topics) {
                return Err(Error::Dimension(format!(
                    "{name} rows must have {} topics",
                    self.num_topics
                )));
            }
        }
        if self.community_impactedness.len() != self.community_belief.len() {
            return Err(Error::Dimension(
                "impactedness and belief community counts differ".into(),
            ));
        }
        let v = &self.virality;
        if v.z1 <= 0.0 || v.z2 <= 0.0 {
            return bad("z1 and z2 must be positive");
        }
        if [v.alpha1, v.beta1, v.alpha2, v.beta2].iter().any(|&p| p <= 0.0) {
            return bad("Beta parameters must be positive");
        }
        if v.r1 <= 0.0 || v.r2 <= 0.0 {
            return bad("r1 and r2 must be positive");
        }
        if v.q1 < 1.0 || v.q2 < 1.0 {
            return bad("q1 and q2 must be >= 1");
        }
        if !(0.0..1.0).contains(&self.bot_fraction) {
            return bad("bot_fraction must lie in [0, 1)");
        }
        if !in_unit(self.noise_tweet_share) || !in_unit(self.wake_prob) {
            return bad("noise_tweet_share and wake_prob must lie in [0, 1]");
        }
        if self.node_draw_stddev < 0.0 || self.belief_learning_rate < 0.0 || self.retweet_scale < 0.0 {
            return bad("stddev, learning rate and retweet scale must be non-negative");
        }
        Ok(())
    }

    pub fn num_communities(&self) -> usize {
        self.community_belief.len()
    }

    /// Community with the lowest configured mean belief on `topic`; ties go
    /// to the lowest community id.
    pub fn most_knowledgeable_community(&self, topic: usize) -> usize {
        self.community_belief
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |best, (c, row)| {
                if row[topic] < best.1 {
                    (c, row[topic])
                } else {
                    best
                }
            })
            .0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    pub id: ClaimId,
    pub topic: u32,
    pub veracity: Veracity,
    pub virality: f64,
    pub fact_checked_at: Option<Step>,
    pub blocked: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    Normal,
    Bot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeState {
    pub kind: NodeKind,
    pub belief: Vec<f64>,
    pub impactedness: Vec<f64>,
    pub prestige: f64,
    pub inbox: Vec<u32>,
    pub num_read: Vec<u32>,
    pub wake: bool,
}

/// All mutable simulation state of one run. The graph is passed alongside
/// rather than owned so that many runs can share it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub config: ScenarioConfig,
    pub nodes: Vec<NodeState>,
    pub claims: Vec<Claim>,
    /// Claim ids grouped by `[topic][veracity index]`.
    pub claim_groups: Vec<[Vec<ClaimId>; 3]>,
    /// Unnormalized softmax weight of every claim, `exp(r * f_v^q - max)`
    /// within its group.
    pub selection_weight: Vec<f64>,
    pub clock: Step,
    pub rng: SimRng,
    pub log: SimLog,
}

impl WorldState {
    pub fn num_topics(&self) -> usize {
        self.config.num_topics
    }

    pub fn claim(&self, id: ClaimId) -> &Claim {
        &self.claims[id as usize]
    }

    pub fn node(&self, id: NodeId) -> &NodeState {
        &self.nodes[id as usize]
    }

    pub fn bots(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.kind == NodeKind::Bot)
            .map(|(j, _)| j as NodeId)
    }
}

/// Virality given the Beta draw `s`: `z1 + s` for anti-misinformation and
/// noise, `z2 + s` for misinformation.
pub fn virality_from_draw(veracity: Veracity, params: &ViralityParams, s: f64) -> f64 {
    match veracity {
        Veracity::Anti | Veracity::Noise => params.z1 + s,
        Veracity::Misinfo => params.z2 + s,
    }
}

pub fn claim_virality<R: Rng + ?Sized>(veracity: Veracity, params: &ViralityParams, rng: &mut R) -> f64 {
    let (a, b) = match veracity {
        Veracity::Anti | Veracity::Noise => (params.alpha1, params.beta1),
        Veracity::Misinfo => (params.alpha2, params.beta2),
    };
    let s = Beta::new(a, b).expect("validated Beta parameters").sample(rng);
    virality_from_draw(veracity, params, s)
}

pub(crate) fn selection_weights(claims: &[Claim], groups: &[[Vec<ClaimId>; 3]], params: &ViralityParams) -> Vec<f64> {
    let mut w = vec![0.0; claims.len()];
    for group in groups.iter().flatten() {
        let Some(&first) = group.first() else { continue };
        let (r, q) = params.selection(claims[first as usize].veracity);
        let logits: Vec<f64> = group.iter().map(|&k| r * claims[k as usize].virality.powf(q)).collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (&k, l) in group.iter().zip(logits) {
            w[k as usize] = (l - max).exp();
        }
    }
    w
}

fn clamp01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Draw node attributes, pick bots and create the claim set.
pub fn init_world(g: &Graph, cfg: &ScenarioConfig, seed: u64) -> Result<WorldState> {
    cfg.validate()?;
    if cfg.num_communities() != g.num_communities() {
        return Err(Error::Dimension(format!(
            "config describes {} communities, graph has {}",
            cfg.num_communities(),
            g.num_communities()
        )));
    }
    let mut rng = rng_from(seed);
    let topics = cfg.num_topics;
    let prestige = compute_prestige(g);
    let mut nodes = Vec::with_capacity(g.num_nodes());
    for j in 0..g.num_nodes() as NodeId {
        let c = g.community(j);
        let mut impactedness = Vec::with_capacity(topics);
        let mut belief = Vec::with_capacity(topics);
        for w in 0..topics {
            let zi: f64 = StandardNormal.sample(&mut rng);
            let zb: f64 = StandardNormal.sample(&mut rng);
            impactedness.push(clamp01(cfg.community_impactedness[c][w] + cfg.node_draw_stddev * zi));
            belief.push(clamp01(cfg.community_belief[c][w] + cfg.node_draw_stddev * zb));
        }
        nodes.push(NodeState {
            kind: NodeKind::Normal,
            belief,
            impactedness,
            prestige: prestige[j as usize],
            inbox: Vec::new(),
            num_read: vec![0; topics],
            wake: false,
        });
    }
    let bot_count = (cfg.bot_fraction * nodes.len() as f64).round() as usize;
    for i in index::sample(&mut rng, nodes.len(), bot_count.min(nodes.len())) {
        nodes[i].kind = NodeKind::Bot;
    }

    let mut claims = Vec::new();
    let mut groups = Vec::with_capacity(topics);
    for topic in 0..topics {
        let mut group: [Vec<ClaimId>; 3] = Default::default();
        for v in Veracity::ALL {
            for _ in 0..cfg.claims_per_topic_per_veracity {
                let id = claims.len() as ClaimId;
                claims.push(Claim {
                    id,
                    topic: topic as u32,
                    veracity: v,
                    virality: claim_virality(v, &cfg.virality, &mut rng),
                    fact_checked_at: None,
                    blocked: false,
                });
                group[v.index()].push(id);
            }
        }
        groups.push(group);
    }
    let selection_weight = selection_weights(&claims, &groups, &cfg.virality);
    Ok(WorldState {
        config: cfg.clone(),
        nodes,
        claims,
        claim_groups: groups,
        selection_weight,
        clock: 0,
        rng,
        log: SimLog::new(g.num_communities(), topics),
    })
}
