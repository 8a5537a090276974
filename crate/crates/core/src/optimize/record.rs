use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ActionSpace;
use crate::artifact;
use crate::error::{Error, Result};
use crate::sim::EnvId;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordRow {
    pub iteration: usize,
    /// Cumulative simulated steps after this iteration.
    pub env_steps: usize,
    pub mean_return: f64,
    pub std_return: f64,
}

impl RecordRow {
    pub fn from_returns(iteration: usize, env_steps: usize, returns: &[f64]) -> Self {
        let n = returns.len().max(1) as f64;
        let mean = returns.iter().sum::<f64>() / n;
        let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
        RecordRow { iteration, env_steps, mean_return: mean, std_return: var.sqrt() }
    }
}

/// Learning curve of one optimizer run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub env_id: EnvId,
    pub task_id: String,
    pub optimizer: String,
    pub action_space: ActionSpace,
    /// Optional label that replaces the action-space kind when grouping
    /// scores, e.g. to tell controllers trained on different data apart.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    pub seed: u64,
    #[serde(skip)]
    pub rows: Vec<RecordRow>,
}

impl RunRecord {
    pub fn new(env_id: EnvId, optimizer: &str, action_space: ActionSpace, seed: u64) -> Self {
        RunRecord {
            env_id,
            task_id: String::new(),
            optimizer: optimizer.to_string(),
            action_space,
            mode: None,
            seed,
            rows: Vec::new(),
        }
    }

    pub fn with_task(mut self, task: impl Into<String>) -> Self {
        self.task_id = task.into();
        self
    }

    pub fn with_mode(mut self, mode: impl Into<String>) -> Self {
        self.mode = Some(mode.into());
        self
    }

    /// Grouping label: the mode if set, else the action-space kind.
    pub fn label(&self) -> &str {
        self.mode.as_deref().unwrap_or(self.action_space.kind())
    }

    pub fn push(&mut self, row: RecordRow) {
        self.rows.push(row);
    }

    pub fn final_return(&self) -> Option<f64> {
        self.rows.last().map(|r| r.mean_return)
    }

    pub fn budget(&self) -> usize {
        self.rows.last().map_or(0, |r| r.env_steps)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration,env_steps,mean_return,std_return\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{:?},{:?}\n", r.iteration, r.env_steps, r.mean_return, r.std_return));
        }
        s
    }

    /// Writes the CSV plus a JSON sidecar with the run identity.
    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv())?;
        fs::write(artifact::meta_path(path), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut rec: RunRecord = serde_json::from_str(&fs::read_to_string(artifact::meta_path(path))?)?;
        let text = fs::read_to_string(path)?;
        let mut lines = text.lines();
        if lines.next() != Some("iteration,env_steps,mean_return,std_return") {
            return Err(Error::Artifact(format!("{} is not a run record", path.display())));
        }
        for (k, line) in lines.enumerate() {
            let bad = || Error::Artifact(format!("{}: malformed row {}", path.display(), k + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(bad());
            }
            rec.rows.push(RecordRow {
                iteration: f[0].parse().map_err(|_| bad())?,
                env_steps: f[1].parse().map_err(|_| bad())?,
                mean_return: f[2].parse().map_err(|_| bad())?,
                std_return: f[3].parse().map_err(|_| bad())?,
            });
        }
        Ok(rec)
    }
}

/// Min-max normalized final returns within each (env, task) group: the
/// worst run scores 0 and the best 1. A group whose runs all tie scores 0.
pub fn normalized_scores(records: &[RunRecord]) -> Result<Vec<f64>> {
    let mut groups: BTreeMap<(EnvId, &str), Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        groups.entry((r.env_id, r.task_id.as_str())).or_default().push(i);
    }
    let mut scores = vec![0.0; records.len()];
    for ((env, task), members) in groups {
        if members.len() < 2 {
            return Err(Error::config(format!("group {env}/{task} has a single run; normalization is undefined")));
        }
        let finals: Vec<f64> = members
            .iter()
            .map(|&i| {
                records[i]
                    .final_return()
                    .ok_or_else(|| Error::config(format!("run {i} in {env}/{task} has no iterations")))
            })
            .collect::<Result<_>>()?;
        let lo = finals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = finals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (&i, f) in members.iter().zip(&finals) {
            scores[i] = if hi > lo { (f - lo) / (hi - lo) } else { 0.0 };
        }
    }
    Ok(scores)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub optimizer: String,
    pub action_space: String,
    pub h: usize,
    pub score: f64,
    pub runs: usize,
    /// Mean simulated steps per run, for budget fairness checks.
    pub budget: f64,
}

/// Mean normalized score per (optimizer, label, H).
pub fn aggregate_scores(records: &[RunRecord]) -> Result<Vec<ScoreRow>> {
    let scores = normalized_scores(records)?;
    let mut table: BTreeMap<(String, &str, usize), (f64, usize, f64)> = BTreeMap::new();
    for (r, s) in records.iter().zip(scores) {
        let e = table.entry((r.optimizer.clone(), r.label(), r.action_space.h())).or_default();
        e.0 += s;
        e.1 += 1;
        e.2 += r.budget() as f64;
    }
    Ok(table
        .into_iter()
        .map(|((optimizer, space, h), (sum, runs, steps))| ScoreRow {
            optimizer,
            action_space: space.to_string(),
            h,
            score: sum / runs as f64,
            runs,
            budget: steps / runs as f64,
        })
        .collect())
}

pub fn scores_to_csv(rows: &[ScoreRow]) -> String {
    let mut s = String::from("optimizer,action_space,h,score,runs,budget\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{:?},{},{:?}\n", r.optimizer, r.action_space, r.h, r.score, r.runs, r.budget));
    }
    s
}
