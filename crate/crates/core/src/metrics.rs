//! Outcome metrics: belief change, treatment effects and cascade shape.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::{SimLog, UtteranceId};
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::world::{Claim, ClaimId, Step, Veracity};

/// Impactedness-weighted change in belief for one node. Negative means the
/// node now holds fewer misconceptions.
pub fn iwcib(belief_start: &[f64], belief_end: &[f64], impactedness: &[f64]) -> Result<f64> {
    if belief_start.len() != impactedness.len() || belief_end.len() != impactedness.len() {
        return Err(Error::Dimension(format!(
            "belief vectors of length {} and {} against {} topics",
            belief_start.len(),
            belief_end.len(),
            impactedness.len()
        )));
    }
    let total: f64 = impactedness.iter().sum();
    if total <= 0.0 {
        return Err(Error::ZeroImpactedness);
    }
    let weights: Vec<f64> = impactedness.iter().map(|i| i / total).collect();
    debug_assert!((weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    Ok(weights
        .iter()
        .zip(belief_start.iter().zip(belief_end))
        .map(|(wt, (b0, b1))| wt * (b1 - b0))
        .sum())
}

/// [`iwcib`] for every node.
pub fn iwcib_all(start: &[Vec<f64>], end: &[Vec<f64>], impactedness: &[Vec<f64>]) -> Result<Vec<f64>> {
    if start.len() != end.len() || start.len() != impactedness.len() {
        return Err(Error::Dimension("checkpoint and node counts differ".into()));
    }
    (0..start.len())
        .map(|j| iwcib(&start[j], &end[j], &impactedness[j]))
        .collect()
}

/// Mean over `members` of `treated - control`.
pub fn ate(treated: &[f64], control: &[f64], members: &[NodeId]) -> Result<f64> {
    if members.is_empty() {
        return Err(Error::Empty("no members to average over".into()));
    }
    let mut sum = 0.0;
    for &j in members {
        let j = j as usize;
        let (a, b) = match (treated.get(j), control.get(j)) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(Error::MissingNode(j)),
        };
        sum += a - b;
    }
    Ok(sum / members.len() as f64)
}

pub fn disparity_ratio(majority_ate: f64, minority_ate: f64) -> f64 {
    majority_ate / minority_ate
}

/// Mean and standard error of per-repetition values.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeStats {
    pub root: UtteranceId,
    pub claim: ClaimId,
    pub veracity: Veracity,
    pub created_at: Step,
    pub depth: u32,
    pub max_breadth: u32,
    pub size: u32,
    pub unique_readers: u32,
    pub structural_virality: f64,
}

/// Mean distance over all unordered pairs of a tree given by parent
/// pointers into the same slice (`parents[0]` is the root). Uses the edge
/// cut identity: an edge splitting the tree into `s` and `n - s` nodes lies
/// on `s * (n - s)` paths.
pub fn structural_virality(parents: &[Option<usize>]) -> f64 {
    let n = parents.len();
    if n < 2 {
        return 0.0;
    }
    let mut sub = vec![1u64; n];
    for i in (1..n).rev() {
        let p = parents[i].expect("non-root tree member without parent");
        sub[p] += sub[i];
    }
    let nn = n as u64;
    let wiener: u64 = (1..n).map(|i| sub[i] * (nn - sub[i])).sum();
    wiener as f64 / (nn * (nn - 1) / 2) as f64
}

/// One row per root utterance, in root id order.
pub fn cascade_stats(log: &SimLog, claims: &[Claim]) -> Vec<CascadeStats> {
    let n = log.utterances.len();
    // members of each cascade, listed in id order so parents precede children
    let mut members: Vec<Vec<UtteranceId>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for u in &log.utterances {
        if u.is_root() {
            slot[u.id as usize] = members.len();
            members.push(Vec::new());
        }
        members[slot[u.root as usize]].push(u.id);
    }
    let mut readers: Vec<Vec<NodeId>> = vec![Vec::new(); members.len()];
    for r in &log.reads {
        let root = log.utterances[r.utterance as usize].root;
        readers[slot[root as usize]].push(r.node);
    }
    let mut local = vec![0usize; n];
    members
        .iter()
        .zip(readers.iter_mut())
        .map(|(m, rd)| {
            let root = &log.utterances[m[0] as usize];
            let mut by_depth: Vec<u32> = Vec::new();
            let mut parents = Vec::with_capacity(m.len());
            for (i, &uid) in m.iter().enumerate() {
                local[uid as usize] = i;
                let u = &log.utterances[uid as usize];
                let d = u.depth as usize;
                if by_depth.len() <= d {
                    by_depth.resize(d + 1, 0);
                }
                by_depth[d] += 1;
                parents.push(u.parent.map(|p| local[p as usize]));
            }
            rd.sort_unstable();
            rd.dedup();
            CascadeStats {
                root: root.id,
                claim: root.claim,
                veracity: claims[root.claim as usize].veracity,
                created_at: root.created_at,
                depth: by_depth.len() as u32 - 1,
                max_breadth: by_depth.iter().copied().max().unwrap_or(0),
                size: m.len() as u32,
                unique_readers: rd.len() as u32,
                structural_virality: structural_virality(&parents),
            }
        })
        .collect()
}

pub fn write_cascades_csv(stats: &[CascadeStats], path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(
        f,
        "root,claim_id,veracity,created_at,depth,max_breadth,size,unique_readers,structural_virality"
    )?;
    for s in stats {
        writeln!(
            f,
            "{},{},{},{},{},{},{},{},{:?}",
            s.root,
            s.claim,
            s.veracity.value(),
            s.created_at,
            s.depth,
            s.max_breadth,
            s.size,
            s.unique_readers,
            s.structural_virality
        )?;
    }
    f.flush()?;
    Ok(())
}

/// Points `(x, P(X >= x))` at each distinct value, ascending.
pub fn ccdf(values: &[f64]) -> Result<Vec<(f64, f64)>> {
    if values.is_empty() {
        return Err(Error::Empty("ccdf of no values".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut out = Vec::new();
    let mut i = 0;
    while i < v.len() {
        out.push((v[i], (v.len() - i) as f64 / n));
        let x = v[i];
        while i < v.len() && v[i] == x {
            i += 1;
        }
    }
    Ok(out)
}

/// Root utterances per claim, for claims tweeted at least once.
pub fn utterances_per_claim(log: &SimLog, num_claims: usize) -> Vec<u32> {
    let mut c = vec![0u32; num_claims];
    for u in log.utterances.iter().filter(|u| u.is_root()) {
        c[u.claim as usize] += 1;
    }
    c
}

/// Veracity-split comparison of cascade shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadeComparison {
    pub cascades: [usize; 3],
    pub mean_depth: [f64; 3],
    pub mean_max_breadth: [f64; 3],
    pub mean_unique_readers: [f64; 3],
    pub max_utterances_per_claim: [u32; 3],
}

impl CascadeComparison {
    pub fn new(stats: &[CascadeStats], log: &SimLog, claims: &[Claim]) -> Self {
        let mut count = [0usize; 3];
        let mut sums = [[0f64; 3]; 3];
        for s in stats {
            let v = s.veracity.index();
            count[v] += 1;
            sums[0][v] += s.depth as f64;
            sums[1][v] += s.max_breadth as f64;
            sums[2][v] += s.unique_readers as f64;
        }
        let mean = |k: usize| -> [f64; 3] {
            std::array::from_fn(|v| {
                if count[v] == 0 {
                    0.0
                } else {
                    sums[k][v] / count[v] as f64
                }
            })
        };
        let mut max_upc = [0u32; 3];
        for (k, &c) in utterances_per_claim(log, claims.len()).iter().enumerate() {
            let v = claims[k].veracity.index();
            max_upc[v] = max_upc[v].max(c);
        }
        Self {
            cascades: count,
            mean_depth: mean(0),
            mean_max_breadth: mean(1),
            mean_unique_readers: mean(2),
            max_utterances_per_claim: max_upc,
        }
    }

    /// Named ordinal checks: misinformation spreads deeper, wider and to
    /// more readers, while the busiest claim is anti-misinformation.
    pub fn checks(&self) -> Vec<(&'static str, bool)> {
        let (a, m) = (Veracity::Anti.index(), Veracity::Misinfo.index());
        vec![
            ("mean depth misinfo > anti", self.mean_depth[m] > self.mean_depth[a]),
            (
                "mean max breadth misinfo > anti",
                self.mean_max_breadth[m] > self.mean_max_breadth[a],
            ),
            (
                "mean unique readers misinfo > anti",
                self.mean_unique_readers[m] > self.mean_unique_readers[a],
            ),
            (
                "max utterances per claim anti > misinfo",
                self.max_utterances_per_claim[a] > self.max_utterances_per_claim[m],
            ),
        ]
    }

    pub fn passes(&self) -> bool {
        self.checks().iter().all(|c| c.1)
    }
}

/// Write `ccdf_<metric>.csv` files (veracity,x,p) for depth, breadth,
/// unique readers, structural virality and utterances per claim.
pub fn write_ccdfs(stats: &[CascadeStats], log: &SimLog, claims: &[Claim], dir: &Path) -> Result<()> {
    type Metric = fn(&CascadeStats) -> f64;
    let metrics: [(&str, Metric); 4] = [
        ("depth", |s| s.depth as f64),
        ("max_breadth", |s| s.max_breadth as f64),
        ("unique_readers", |s| s.unique_readers as f64),
        ("structural_virality", |s| s.structural_virality),
    ];
    for (name, f) in metrics {
        let by_v: Vec<(Veracity, Vec<f64>)> = Veracity::ALL
            .iter()
            .map(|&v| (v, stats.iter().filter(|s| s.veracity == v).map(f).collect()))
            .collect();
        write_ccdf_file(&dir.join(format!("ccdf_{name}.csv")), &by_v)?;
    }
    let upc = utterances_per_claim(log, claims.len());
    let by_v: Vec<(Veracity, Vec<f64>)> = Veracity::ALL
        .iter()
        .map(|&v| {
            let vals = claims
                .iter()
                .filter(|c| c.veracity == v && upc[c.id as usize] > 0)
                .map(|c| upc[c.id as usize] as f64)
                .collect();
            (v, vals)
        })
        .collect();
    write_ccdf_file(&dir.join("ccdf_utterances_per_claim.csv"), &by_v)
}

fn write_ccdf_file(path: &Path, series: &[(Veracity, Vec<f64>)]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "veracity,x,p")?;
    for (v, vals) in series {
        if vals.is_empty() {
            continue;
        }
        for (x, p) in ccdf(vals)? {
            writeln!(f, "{},{x:?},{p:?}", v.value())?;
        }
    }
    f.flush()?;
    Ok(())
}

/// Cumulative misinformation reads per member, `series[c][topic][t]`.
pub fn misinfo_read_series(log: &SimLog, g: &Graph) -> Vec<Vec<Vec<f64>>> {
    let sizes = g.community_sizes();
    let steps = log.steps_recorded();
    (0..log.num_communities())
        .map(|c| {
            (0..log.num_topics())
                .map(|topic| {
                    let mut acc = 0u64;
                    (0..steps)
                        .map(|t| {
                            acc += log.misinfo_reads_at(t as Step, c, topic) as u64;
                            acc as f64 / sizes[c] as f64
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{ReadEvent, Utterance};

    #[test]
    fn iwcib_examples() {
        let v = iwcib(&[0.5, 0.5], &[0.4, 0.55], &[0.8, 0.2]).unwrap();
        assert!((v + 0.07).abs() < 1e-12);
        assert_eq!(iwcib(&[0.3, 0.6], &[0.3, 0.6], &[0.5, 0.5]).unwrap(), 0.0);
        assert_eq!(iwcib(&[0.3], &[0.25], &[0.7]).unwrap(), 0.25 - 0.3);
        assert!(matches!(
            iwcib(&[0.3, 0.1], &[0.2, 0.1], &[0.0, 0.0]),
            Err(Error::ZeroImpactedness)
        ));
    }

    #[test]
    fn ate_examples() {
        let m0 = [0.0, 0.1, 0.2];
        assert_eq!(ate(&m0, &m0, &[0, 1, 2]).unwrap(), 0.0);
        let m1 = [-0.02, 0.06, 0.2];
        assert!((ate(&m1, &m0, &[0, 1]).unwrap() + 0.03).abs() < 1e-15);
        assert!(matches!(ate(&m1, &m0, &[5]), Err(Error::MissingNode(5))));
        assert!((disparity_ratio(-0.024, -0.018) - 1.3333333333333333).abs() < 1e-12);
    }

    #[test]
    fn mean_se_basics() {
        assert_eq!(mean_se(&[2.0]), (2.0, 0.0));
        let (m, se) = mean_se(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((se - 1.0).abs() < 1e-12);
    }

    #[test]
    fn structural_virality_small_trees() {
        assert_eq!(structural_virality(&[None]), 0.0);
        // path of three
        assert!((structural_virality(&[None, Some(0), Some(1)]) - 4.0 / 3.0).abs() < 1e-15);
        // star of three
        assert!((structural_virality(&[None, Some(0), Some(0)]) - 4.0 / 3.0).abs() < 1e-15);
    }

    fn utt(id: u32, claim: u32, author: u32, parent: Option<u32>, depth: u32, root: u32) -> Utterance {
        Utterance {
            id,
            claim,
            author,
            created_at: 0,
            parent,
            depth,
            root,
        }
    }

    fn claims() -> Vec<Claim> {
        [Veracity::Anti, Veracity::Misinfo]
            .iter()
            .enumerate()
            .map(|(k, &v)| Claim {
                id: k as u32,
                topic: 0,
                veracity: v,
                virality: 1.0,
                fact_checked_at: None,
                blocked: false,
            })
            .collect()
    }

    #[test]
    fn cascade_shapes() {
        let mut log = SimLog::new(1, 1);
        log.utterances = vec![
            utt(0, 0, 0, None, 0, 0),
            utt(1, 1, 1, None, 0, 1),
            utt(2, 1, 2, Some(1), 1, 1),
            utt(3, 1, 3, Some(1), 1, 1),
        ];
        log.reads = vec![
            ReadEvent {
                node: 2,
                utterance: 1,
                t: 0,
            },
            ReadEvent {
                node: 3,
                utterance: 1,
                t: 0,
            },
            ReadEvent {
                node: 2,
                utterance: 3,
                t: 0,
            },
        ];
        let s = cascade_stats(&log, &claims());
        assert_eq!(s.len(), 2);
        assert_eq!(
            (s[0].depth, s[0].max_breadth, s[0].size, s[0].unique_readers),
            (0, 1, 1, 0)
        );
        assert_eq!(s[0].structural_virality, 0.0);
        assert_eq!(
            (s[1].depth, s[1].max_breadth, s[1].size, s[1].unique_readers),
            (1, 2, 3, 2)
        );
        let cmp = CascadeComparison::new(&s, &log, &claims());
        assert_eq!(cmp.max_utterances_per_claim, [1, 0, 1]);
        assert!(!cmp.passes());
    }

    #[test]
    fn ccdf_examples() {
        let c = ccdf(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(c[1], (2.0, 2.0 / 3.0));
        assert_eq!(c[0].1, 1.0);
        assert_eq!(ccdf(&[4.0, 4.0]).unwrap(), vec![(4.0, 1.0)]);
        assert!(ccdf(&[]).is_err());
    }

    #[test]
    fn misinfo_series_single_read() {
        let g = Graph::from_edges(vec![0, 0, 1], [(1, 0)]).unwrap();
        let mut log = SimLog::new(2, 2);
        for t in 0..5 {
            log.ensure_step(t);
        }
        log.count_misinfo_read(3, 0, 0);
        let s = misinfo_read_series(&log, &g);
        assert_eq!(s[0][0], vec![0.0, 0.0, 0.0, 0.5, 0.5]);
        assert!(s[1][0].iter().chain(&s[0][1]).all(|&x| x == 0.0));
    }
}
