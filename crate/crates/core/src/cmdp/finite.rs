use super::{TabularModel, TabularStep};
use crate::{Error, Result};

/// Explicit tables for next state, reward, cost and termination.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteCmdp {
    next: Vec<Vec<usize>>,
    reward: Vec<Vec<f64>>,
    cost: Vec<Vec<f64>>,
    terminal: Vec<Vec<bool>>,
    start: usize,
}

impl FiniteCmdp {
    pub fn new(
        next: Vec<Vec<usize>>,
        reward: Vec<Vec<f64>>,
        cost: Vec<Vec<f64>>,
        terminal: Vec<Vec<bool>>,
        start: usize,
    ) -> Result<Self> {
        let states = next.len();
        let actions = next.first().map_or(0, Vec::len);
        if states == 0 || actions == 0 {
            return Err(Error::contract("model needs at least one state and one action"));
        }
        let shaped = |rows: usize, cols: &[usize]| rows == states && cols.iter().all(|&c| c == actions);
        if !shaped(next.len(), &next.iter().map(Vec::len).collect::<Vec<_>>())
            || !shaped(reward.len(), &reward.iter().map(Vec::len).collect::<Vec<_>>())
            || !shaped(cost.len(), &cost.iter().map(Vec::len).collect::<Vec<_>>())
            || !shaped(terminal.len(), &terminal.iter().map(Vec::len).collect::<Vec<_>>())
        {
            return Err(Error::contract("tables must all be states × actions"));
        }
        if start >= states || next.iter().flatten().any(|&s| s >= states) {
            return Err(Error::contract("state index out of range"));
        }
        if reward.iter().flatten().any(|r| !r.is_finite()) {
            return Err(Error::contract("rewards must be finite"));
        }
        if cost.iter().flatten().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::contract("costs must lie in [0, 1]"));
        }
        Ok(Self {
            next,
            reward,
            cost,
            terminal,
            start,
        })
    }

    /// One state, one action, cost 1 forever.
    pub fn self_loop(cost: f64) -> Self {
        Self::new(vec![vec![0]], vec![vec![0.0]], vec![vec![cost]], vec![vec![false]], 0).expect("valid self-loop")
    }

    /// `hazards` costly cells in a row followed by a terminal exit; one action.
    pub fn corridor(hazards: usize) -> Self {
        let n = hazards + 1;
        let next = (0..n).map(|s| vec![(s + 1).min(n - 1)]).collect();
        let cost = (0..n).map(|s| vec![if s < hazards { 1.0 } else { 0.0 }]).collect();
        let terminal = (0..n).map(|s| vec![s + 1 >= n]).collect();
        Self::new(next, vec![vec![0.0]; n], cost, terminal, 0).expect("valid corridor")
    }
}

impl TabularModel for FiniteCmdp {
    fn num_states(&self) -> usize {
        self.next.len()
    }

    fn num_actions(&self) -> usize {
        self.next[0].len()
    }

    fn start_state(&self) -> usize {
        self.start
    }

    fn transition(&self, state: usize, action: usize) -> TabularStep {
        TabularStep {
            next: self.next[state][action],
            reward: self.reward[state][action],
            cost: self.cost[state][action],
            terminal: self.terminal[state][action],
        }
    }
}
