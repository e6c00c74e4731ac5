use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::{TabularModel, TabularStep};
use crate::{Error, Result};

pub const GOAL_BONUS: f64 = 10.0;
pub const PROGRESS_REWARD: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub x: usize,
    pub y: usize,
}

impl Cell {
    pub const fn new(x: usize, y: usize) -> Self {
        Cell { x, y }
    }

    pub fn manhattan(self, other: Cell) -> usize {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }
}

/// What happens when the agent steps onto the goal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalMode {
    /// The episode ends.
    #[default]
    Terminal,
    /// The agent is teleported back to the start and the episode continues
    /// until the step budget runs out.
    Respawn,
}

/// Gridworld with a band of hazard cells between start and goal.
///
/// Actions: 0 = up (y − 1), 1 = right, 2 = down, 3 = left. Moves off the grid
/// leave the agent in place. Cost is 1 whenever the cell occupied after the
/// move is a hazard. Reward is 1 when the Manhattan distance to the goal
/// strictly decreases, plus a bonus of 10 on reaching the goal.
#[derive(Debug, Clone, PartialEq)]
pub struct HazardGrid {
    width: usize,
    height: usize,
    start: Cell,
    goal: Cell,
    hazards: BTreeSet<Cell>,
    goal_mode: GoalMode,
}

impl Default for HazardGrid {
    /// 7×7, start (0,0), goal (4,6); hazards fill rows 2–4 of columns 0–4.
    ///
    /// Any monotone path crosses three hazard cells; the safe route through
    /// the gap in columns 5–6 costs two extra steps.
    fn default() -> Self {
        let hazards = (0..=4).flat_map(|x| (2..=4).map(move |y| Cell::new(x, y))).collect();
        Self::new(7, 7, Cell::new(0, 0), Cell::new(4, 6), hazards, GoalMode::Terminal).expect("default layout is valid")
    }
}

impl HazardGrid {
    pub fn new(
        width: usize,
        height: usize,
        start: Cell,
        goal: Cell,
        hazards: BTreeSet<Cell>,
        goal_mode: GoalMode,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::config("grid must be at least 1×1"));
        }
        let inside = |c: Cell| c.x < width && c.y < height;
        if !inside(start) || !inside(goal) || !hazards.iter().all(|&c| inside(c)) {
            return Err(Error::config("start, goal and hazards must lie inside the grid"));
        }
        if start == goal {
            return Err(Error::config("start and goal must differ"));
        }
        if hazards.contains(&start) || hazards.contains(&goal) {
            return Err(Error::config("start and goal cannot be hazards"));
        }
        let grid = Self {
            width,
            height,
            start,
            goal,
            hazards,
            goal_mode,
        };
        if grid.safe_path_length().is_none() {
            return Err(Error::config("layout has no hazard-free path from start to goal"));
        }
        Ok(grid)
    }

    pub fn with_goal_mode(mut self, mode: GoalMode) -> Self {
        self.goal_mode = mode;
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn start(&self) -> Cell {
        self.start
    }

    pub fn goal(&self) -> Cell {
        self.goal
    }

    pub fn goal_mode(&self) -> GoalMode {
        self.goal_mode
    }

    pub fn hazards(&self) -> &BTreeSet<Cell> {
        &self.hazards
    }

    pub fn is_hazard(&self, c: Cell) -> bool {
        self.hazards.contains(&c)
    }

    pub fn index(&self, c: Cell) -> usize {
        c.y * self.width + c.x
    }

    pub fn cell(&self, index: usize) -> Cell {
        Cell::new(index % self.width, index / self.width)
    }

    /// Cell reached by `action` from `c`, before any goal handling.
    pub fn moved(&self, c: Cell, action: usize) -> Cell {
        match action {
            0 if c.y > 0 => Cell::new(c.x, c.y - 1),
            1 if c.x + 1 < self.width => Cell::new(c.x + 1, c.y),
            2 if c.y + 1 < self.height => Cell::new(c.x, c.y + 1),
            3 if c.x > 0 => Cell::new(c.x - 1, c.y),
            _ => c,
        }
    }

    /// Length of the shortest start→goal path avoiding hazards (BFS).
    pub fn safe_path_length(&self) -> Option<usize> {
        let mut dist = vec![usize::MAX; self.width * self.height];
        let mut queue = VecDeque::from([self.start]);
        dist[self.index(self.start)] = 0;
        while let Some(c) = queue.pop_front() {
            if c == self.goal {
                return Some(dist[self.index(c)]);
            }
            for a in 0..4 {
                let n = self.moved(c, a);
                if !self.is_hazard(n) && dist[self.index(n)] == usize::MAX {
                    dist[self.index(n)] = dist[self.index(c)] + 1;
                    queue.push_back(n);
                }
            }
        }
        None
    }
}

impl TabularModel for HazardGrid {
    fn num_states(&self) -> usize {
        self.width * self.height
    }

    fn num_actions(&self) -> usize {
        4
    }

    fn start_state(&self) -> usize {
        self.index(self.start)
    }

    fn transition(&self, state: usize, action: usize) -> TabularStep {
        let here = self.cell(state);
        let there = self.moved(here, action);
        let cost = if self.is_hazard(there) { 1.0 } else { 0.0 };
        let mut reward = if there.manhattan(self.goal) < here.manhattan(self.goal) {
            PROGRESS_REWARD
        } else {
            0.0
        };
        let (next, terminal) = if there == self.goal {
            reward += GOAL_BONUS;
            match self.goal_mode {
                GoalMode::Terminal => (there, true),
                GoalMode::Respawn => (self.start, false),
            }
        } else {
            (there, false)
        };
        TabularStep {
            next: self.index(next),
            reward,
            cost,
            terminal,
        }
    }
}
