//! Recompute metrics from exported CSV files, independent of the in-memory
//! results that produced them.

use std::path::{Path, PathBuf};

use crate::engine::{read_belief_checkpoints, read_exported_run};
use crate::error::{Error, Result};
use crate::experiment::{group_labels, ExperimentConfig};
use crate::graph::{Graph, NodeId};
use crate::metrics::{self, CascadeComparison, CascadeStats};

#[derive(Debug, Clone)]
pub struct RunReplay {
    pub cascades: Vec<CascadeStats>,
    pub comparison: CascadeComparison,
    /// Belief change between the last two checkpoints.
    pub iwcib: Vec<f64>,
    pub communities: Vec<u32>,
}

fn find_id_map(dir: &Path) -> Option<PathBuf> {
    [dir.join("id_remap.csv"), dir.join("..").join("id_remap.csv")]
        .into_iter()
        .find(|p| p.exists())
}

fn iwcib_last_two(trace: &[crate::engine::BeliefCheckpoint], impactedness: &[Vec<f64>]) -> Result<Vec<f64>> {
    if trace.len() < 2 {
        return Err(Error::Empty("need two belief checkpoints".into()));
    }
    let (a, b) = (&trace[trace.len() - 2], &trace[trace.len() - 1]);
    metrics::iwcib_all(&a.beliefs, &b.beliefs, impactedness)
}

/// Replay one exported run directory (`utterances.csv`, `reads.csv`,
/// `belief_checkpoints.csv`, `claims.csv`, plus an `id_remap.csv` here or
/// one level up).
pub fn replay_run(dir: &Path) -> Result<RunReplay> {
    let map = find_id_map(dir).ok_or_else(|| Error::Empty(format!("no id_remap.csv near {}", dir.display())))?;
    let communities = Graph::read_id_map_communities(&map)?;
    let topics = num_topics_from_claims(&dir.join("claims.csv"))?;
    let run = read_exported_run(dir, &communities, topics)?;
    let cascades = metrics::cascade_stats(&run.log, &run.claims);
    let comparison = CascadeComparison::new(&cascades, &run.log, &run.claims);
    let iwcib = iwcib_last_two(&run.log.belief_trace, &run.impactedness)?;
    Ok(RunReplay {
        cascades,
        comparison,
        iwcib,
        communities,
    })
}

fn num_topics_from_claims(path: &Path) -> Result<usize> {
    let mut r = csv::Reader::from_path(path)?;
    let mut max = 0usize;
    for rec in r.records() {
        let rec = rec?;
        let t: usize = rec.get(1).and_then(|s| s.parse().ok()).unwrap_or(0);
        max = max.max(t + 1);
    }
    Ok(max)
}

/// One treatment effect recomputed from checkpoints next to the value
/// found in `ate.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct AteReplay {
    pub mitigation: String,
    pub group: String,
    pub recomputed: f64,
    pub reported: f64,
}

/// Recompute every mean treatment effect of an experiment output directory
/// from the per-run `belief_checkpoints.csv` files.
pub fn replay_experiment(dir: &Path) -> Result<Vec<AteReplay>> {
    let cfg: ExperimentConfig = serde_json::from_str(&std::fs::read_to_string(dir.join("effective_config.json"))?)?;
    let topics = cfg.scenario.num_topics;
    let c = cfg.scenario.num_communities();
    let labels = group_labels(c);
    let baseline = cfg
        .grid
        .iter()
        .position(|m| m.is_baseline())
        .ok_or_else(|| Error::InvalidParam("grid has no baseline".into()))?;
    // sums[mitigation][group] over repetitions
    let mut sums = vec![vec![0.0; labels.len()]; cfg.grid.len()];
    let mut reps = 0usize;
    for r in 0..cfg.repetitions {
        let rep_dir = dir.join(format!("rep_{r}"));
        if !rep_dir.exists() {
            continue;
        }
        let communities = Graph::read_id_map_communities(&rep_dir.join("id_remap.csv"))?;
        let n = communities.len();
        let mut groups: Vec<Vec<NodeId>> = vec![Vec::new(); c];
        for (j, &k) in communities.iter().enumerate() {
            groups[k as usize].push(j as NodeId);
        }
        groups.push((0..n as NodeId).filter(|&j| communities[j as usize] != 0).collect());
        groups.push((0..n as NodeId).collect());
        let iw: Vec<Vec<f64>> = (0..cfg.grid.len())
            .map(|i| {
                let p = rep_dir.join(format!("m{i:02}")).join("belief_checkpoints.csv");
                let (trace, imp) = read_belief_checkpoints(&p, n, topics)?;
                iwcib_last_two(&trace, &imp)
            })
            .collect::<Result<_>>()?;
        for (i, s) in sums.iter_mut().enumerate() {
            for (gi, members) in groups.iter().enumerate() {
                s[gi] += metrics::ate(&iw[i], &iw[baseline], members)?;
            }
        }
        reps += 1;
    }
    if reps == 0 {
        return Err(Error::Empty(format!("no repetition directories in {}", dir.display())));
    }

    let mut reported = std::collections::HashMap::new();
    let mut rdr = csv::Reader::from_path(dir.join("ate.csv"))?;
    for rec in rdr.records() {
        let rec = rec?;
        let key = (rec[0].to_string(), rec[4].to_string());
        let v: f64 = rec[5].parse().map_err(|_| Error::Parse {
            path: dir.join("ate.csv"),
            line: 0,
            msg: format!("bad ate {}", &rec[5]),
        })?;
        reported.insert(key, v);
    }
    let mut out = Vec::new();
    for (i, m) in cfg.grid.iter().enumerate() {
        for (gi, label) in labels.iter().enumerate() {
            let name = m.name();
            let rep_v = reported
                .get(&(name.clone(), label.clone()))
                .copied()
                .unwrap_or(f64::NAN);
            out.push(AteReplay {
                mitigation: name,
                group: label.clone(),
                recomputed: sums[i][gi] / reps as f64,
                reported: rep_v,
            });
        }
    }
    Ok(out)
}
