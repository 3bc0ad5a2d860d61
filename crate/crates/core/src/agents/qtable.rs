use std::collections::HashMap;

use crate::environment::{Action, SensedState};
use crate::error::{DsaError, Result};
use crate::rng::SimRng;

use super::{epsilon_greedy, Experience, PolicyParams, QRow};

/// Lazily allocated Q-table keyed by the packed sensed bit-vector.
/// Unseen (state, action) pairs read as 0.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QTable {
    n_channels: usize,
    rows: HashMap<u64, Vec<f64>>,
}

impl QTable {
    pub fn new(n_channels: usize) -> Result<Self> {
        if n_channels > 63 {
            return Err(DsaError::config(
                "scenario.n_channels",
                "tabular Q-learning supports at most 63 channels",
            ));
        }
        Ok(Self {
            n_channels,
            rows: HashMap::new(),
        })
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn n_actions(&self) -> usize {
        self.n_channels + 1
    }

    /// Number of allocated states.
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, state: &SensedState) -> Result<Vec<f64>> {
        Ok(self
            .rows
            .get(&state.key()?)
            .cloned()
            .unwrap_or_else(|| vec![0.0; self.n_actions()]))
    }

    pub fn get(&self, state: &SensedState, action: Action) -> Result<f64> {
        Ok(self.rows.get(&state.key()?).map_or(0.0, |r| r[action.0]))
    }

    pub fn max(&self, state: &SensedState) -> Result<f64> {
        Ok(self
            .rows
            .get(&state.key()?)
            .map_or(0.0, |r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max)))
    }

    pub fn set(&mut self, state: &SensedState, action: Action, value: f64) -> Result<()> {
        if action.0 >= self.n_actions() {
            return Err(DsaError::Contract(format!("action {} out of range", action.0)));
        }
        let n = self.n_actions();
        self.rows.entry(state.key()?).or_insert_with(|| vec![0.0; n])[action.0] = value;
        Ok(())
    }

    pub fn rows_sorted(&self) -> Vec<QRow> {
        let mut rows: Vec<QRow> = self
            .rows
            .iter()
            .map(|(&state, q)| QRow { state, q: q.clone() })
            .collect();
        rows.sort_by_key(|r| r.state);
        rows
    }

    pub fn from_rows(n_channels: usize, rows: &[QRow]) -> Result<Self> {
        let mut t = Self::new(n_channels)?;
        for r in rows {
            if r.q.len() != t.n_actions() {
                return Err(DsaError::Parse {
                    what: "q-table checkpoint".into(),
                    message: format!("row for state {} has {} values", r.state, r.q.len()),
                });
            }
            t.rows.insert(r.state, r.q.clone());
        }
        Ok(t)
    }
}

/// Q(s,a) += α·[r + γ·max Q(s',·) − Q(s,a)]
pub fn q_learning_update(table: &mut QTable, e: &Experience, alpha: f64, gamma: f64) -> Result<()> {
    let q = table.get(&e.s, e.a)?;
    let target = e.r + gamma * table.max(&e.s_next)?;
    let updated = q + alpha * (target - q);
    if updated != q || table.rows.contains_key(&e.s.key()?) {
        table.set(&e.s, e.a, updated)?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct QLearningAgent {
    pub params: PolicyParams,
    pub epsilon: f64,
    pub table: QTable,
}

impl QLearningAgent {
    pub fn new(n_channels: usize, params: PolicyParams) -> Result<Self> {
        Ok(Self {
            epsilon: params.epsilon.at(0),
            params,
            table: QTable::new(n_channels)?,
        })
    }

    pub fn act(&mut self, sensed: &SensedState, rng: &mut SimRng) -> Result<Action> {
        Ok(epsilon_greedy(&self.table.row(sensed)?, self.epsilon, rng))
    }

    pub fn observe(&mut self, e: &Experience) -> Result<()> {
        q_learning_update(&mut self.table, e, self.params.learning_rate, self.params.gamma)
    }
}
