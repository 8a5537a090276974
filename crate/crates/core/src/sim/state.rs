use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

/// Flattened observable state of an agent.
///
/// The meaning of each slot is described by the owning environment's
/// [`StateLayout`](super::StateLayout). All file formats store it as a flat
/// array of `f64`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimState(pub Vec<f64>);

impl SimState {
    pub fn zeros(dim: usize) -> Self {
        SimState(vec![0.0; dim])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for SimState {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for SimState {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for SimState {
    fn from(v: Vec<f64>) -> Self {
        SimState(v)
    }
}
