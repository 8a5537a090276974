use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ExplorationConfig;
use crate::artifact::{meta_path, sha256_hex};
use crate::error::{Error, Result};
use crate::sim::{EnvId, SimState, StateRanges};

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub s: SimState,
    pub a: Vec<f64>,
    pub next: SimState,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub index: usize,
    pub transitions: Vec<Transition>,
}

impl Episode {
    /// The visited states `s_0 .. s_len`.
    pub fn states(&self) -> Vec<&SimState> {
        let mut out: Vec<&SimState> = self.transitions.iter().map(|t| &t.s).collect();
        if let Some(last) = self.transitions.last() {
            out.push(&last.next);
        }
        out
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BufferMeta {
    pub env_id: EnvId,
    pub config: ExplorationConfig,
    pub ranges: StateRanges,
    pub dropped_episodes: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExplorationBuffer {
    pub meta: BufferMeta,
    pub episodes: Vec<Episode>,
}

fn push_floats(out: &mut String, v: &[f64]) {
    for (i, x) in v.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        // `{:?}` prints the shortest string that parses back to the same bits.
        let _ = write!(out, "{x:?}");
    }
}

fn parse_floats(field: &str, line: usize) -> Result<Vec<f64>> {
    field
        .split(',')
        .map(|t| t.parse::<f64>().map_err(|e| Error::Artifact(format!("buffer line {line}: {e}"))))
        .collect()
}

impl ExplorationBuffer {
    pub fn num_transitions(&self) -> usize {
        self.episodes.iter().map(Episode::len).sum()
    }

    pub fn transitions(&self) -> impl Iterator<Item = &Transition> {
        self.episodes.iter().flat_map(|e| &e.transitions)
    }

    /// Per-dimension min and max over every stored state.
    pub fn observed_ranges(&self) -> Option<StateRanges> {
        let mut it = self.episodes.iter().flat_map(|e| e.states());
        let first = it.next()?;
        let mut min = first.0.clone();
        let mut max = first.0.clone();
        for s in it {
            for i in 0..s.len() {
                min[i] = min[i].min(s[i]);
                max[i] = max[i].max(s[i]);
            }
        }
        Some(StateRanges { min, max })
    }

    /// Every stored episode satisfies `next` of step t == `s` of step t+1,
    /// and no episode is longer than K.
    pub fn check_chaining(&self) -> Result<()> {
        for ep in &self.episodes {
            if ep.len() > self.meta.config.k {
                return Err(Error::Artifact(format!("episode {} is longer than K", ep.index)));
            }
            for (t, w) in ep.transitions.windows(2).enumerate() {
                if w[0].next != w[1].s {
                    return Err(Error::Artifact(format!("episode {} breaks chaining at step {t}", ep.index)));
                }
            }
        }
        Ok(())
    }

    /// One transition per line: `episode \t t \t s \t a \t s'`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for ep in &self.episodes {
            for (t, tr) in ep.transitions.iter().enumerate() {
                let _ = write!(out, "{}\t{t}\t", ep.index);
                push_floats(&mut out, &tr.s);
                out.push('\t');
                push_floats(&mut out, &tr.a);
                out.push('\t');
                push_floats(&mut out, &tr.next);
                out.push('\n');
            }
        }
        out
    }

    fn meta_text(&self) -> String {
        serde_json::to_string_pretty(&self.meta).expect("metadata serializes") + "\n"
    }

    /// Same digest as `artifact::content_hash` of the saved file.
    pub fn content_hash(&self) -> String {
        sha256_hex(format!("{}\0meta\0{}", self.to_text(), self.meta_text()).as_bytes())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text())?;
        fs::write(meta_path(path), self.meta_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let meta: BufferMeta = serde_json::from_str(&fs::read_to_string(meta_path(path))?)?;
        let text = fs::read_to_string(path)?;
        let mut episodes: Vec<Episode> = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 5 {
                return Err(Error::Artifact(format!("buffer line {}: expected 5 fields", n + 1)));
            }
            let bad = |e: std::num::ParseIntError| Error::Artifact(format!("buffer line {}: {e}", n + 1));
            let index: usize = fields[0].parse().map_err(bad)?;
            let t: usize = fields[1].parse().map_err(bad)?;
            let tr = Transition {
                s: SimState(parse_floats(fields[2], n + 1)?),
                a: parse_floats(fields[3], n + 1)?,
                next: SimState(parse_floats(fields[4], n + 1)?),
            };
            match episodes.last_mut() {
                Some(ep) if ep.index == index && ep.len() == t => ep.transitions.push(tr),
                _ if t == 0 => episodes.push(Episode { index, transitions: vec![tr] }),
                _ => return Err(Error::Artifact(format!("buffer line {}: out-of-order step", n + 1))),
            }
        }
        let buf = ExplorationBuffer { meta, episodes };
        buf.check_chaining()?;
        Ok(buf)
    }
}
