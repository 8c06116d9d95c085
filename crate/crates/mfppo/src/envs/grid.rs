//! Grid-world cooperative tasks: navigation (cover the landmarks) and push
//! (herd a ball to a landmark).
//!
//! Cells are indexed row-major, `id = y·side + x`.  Per-agent moves are
//! `0 = stay, 1 = up (y−1), 2 = down (y+1), 3 = left, 4 = right`, clamped at
//! walls; with probability `slip` the executed move is drawn uniformly from
//! all five.  Navigation exposes two team commands — approach the nearest
//! landmark, or rebalance toward another one — so `|Ā| = 2`; push exposes
//! the five constant maps plus a chase-the-ball map, `|Ā| = 6`.

use rand::Rng;
use rand::RngCore;

use crate::error::{MfError, Result};
use crate::mdp::{AgentState, JointConfig, LocalActionMap, MeanFieldEnv, StateHistogram};

/// Shared shape/dynamics parameters of the grid tasks.
#[derive(Clone, Copy, Debug)]
pub struct GridWorldSpec {
    pub side: usize,
    pub num_agents: usize,
    pub gamma: f64,
    pub slip: f64,
}

impl GridWorldSpec {
    fn validate(&self) -> Result<()> {
        if self.side < 2 {
            return Err(MfError::InvalidParameter(format!("side {} < 2", self.side)));
        }
        if self.num_agents == 0 {
            return Err(MfError::InvalidParameter("zero agents".into()));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(MfError::InvalidParameter(format!("gamma {}", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.slip) {
            return Err(MfError::InvalidParameter(format!("slip {}", self.slip)));
        }
        Ok(())
    }

    fn cells(&self) -> usize {
        self.side * self.side
    }

    /// Length of the grid diagonal, the per-landmark reward normalizer.
    pub fn diagonal(&self) -> f64 {
        (self.side as f64 - 1.0) * 2f64.sqrt()
    }
}

const MOVES: usize = 5;

fn cell_xy(cell: usize, side: usize) -> (usize, usize) {
    (cell % side, cell / side)
}

fn xy_cell(x: usize, y: usize, side: usize) -> usize {
    y * side + x
}

/// Applies a move with wall clamping.
fn moved(cell: usize, mv: usize, side: usize) -> usize {
    let (x, y) = cell_xy(cell, side);
    let (nx, ny) = match mv {
        0 => (x, y),
        1 => (x, y.saturating_sub(1)),
        2 => (x, (y + 1).min(side - 1)),
        3 => (x.saturating_sub(1), y),
        4 => ((x + 1).min(side - 1), y),
        _ => unreachable!("move {mv}"),
    };
    xy_cell(nx, ny, side)
}

fn dist(a: (usize, usize), b: (usize, usize)) -> f64 {
    let dx = a.0 as f64 - b.0 as f64;
    let dy = a.1 as f64 - b.1 as f64;
    (dx * dx + dy * dy).sqrt()
}

fn manhattan(a: (usize, usize), b: (usize, usize)) -> usize {
    a.0.abs_diff(b.0) + a.1.abs_diff(b.1)
}

/// Slipped-move next-cell distribution, merged over coinciding cells and
/// sorted by cell id.
fn slipped_row(cell: usize, mv: usize, side: usize, slip: f64) -> Vec<(AgentState, f64)> {
    let mut mass = std::collections::BTreeMap::new();
    for exec in 0..MOVES {
        let mut p = slip / MOVES as f64;
        if exec == mv {
            p += 1.0 - slip;
        }
        if p > 0.0 {
            *mass.entry(moved(cell, exec, side)).or_insert(0.0) += p;
        }
    }
    mass.into_iter().map(|(c, p)| (AgentState(c), p)).collect()
}

/// Unnormalized navigation team reward: for each landmark, the negated
/// distance to the closest agent, summed over landmarks.
pub fn navigation_reward(agents: &[(f64, f64)], landmarks: &[(f64, f64)]) -> Result<f64> {
    if agents.is_empty() || landmarks.is_empty() {
        return Err(MfError::Degenerate("navigation reward needs agents and landmarks".into()));
    }
    let mut total = 0.0;
    for &(lx, ly) in landmarks {
        let mut best = f64::INFINITY;
        for &(ax, ay) in agents {
            let d = ((ax - lx).powi(2) + (ay - ly).powi(2)).sqrt();
            best = best.min(d);
        }
        total -= best;
    }
    Ok(total)
}

/// Unnormalized push team reward: negated distance from the closest agent to
/// the ball, minus the distance from the ball to the landmark.
pub fn push_reward(agents: &[(f64, f64)], ball: (f64, f64), landmark: (f64, f64)) -> Result<f64> {
    if agents.is_empty() {
        return Err(MfError::Degenerate("push reward needs agents".into()));
    }
    let mut best = f64::INFINITY;
    for &(ax, ay) in agents {
        let d = ((ax - ball.0).powi(2) + (ay - ball.1).powi(2)).sqrt();
        best = best.min(d);
    }
    let to_landmark = ((ball.0 - landmark.0).powi(2) + (ball.1 - landmark.1).powi(2)).sqrt();
    Ok(-best - to_landmark)
}

/// Target rule of the navigation menu's second command.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum RebalanceRule {
    /// Walk toward the second-nearest landmark.
    SecondNearest,
    /// Walk toward the farthest landmark.
    Farthest,
}

/// Cooperative navigation: local state is the agent's cell; the team is
/// rewarded for covering all landmarks.  Rewards are normalized by
/// `#landmarks · diagonal` so they live in `[−1, 0]`.  The action menu is
/// `[approach, rebalance]`.
#[derive(Clone, Debug)]
pub struct GridNavEnv {
    spec: GridWorldSpec,
    landmarks: Vec<(usize, usize)>,
    actions: Vec<LocalActionMap>,
    /// Precomputed `kernel[cell][move]`; navigation is histogram-free.
    kernel: Vec<Vec<Vec<(AgentState, f64)>>>,
    name: String,
}

impl GridNavEnv {
    pub fn new(spec: GridWorldSpec, landmarks: Vec<(usize, usize)>, name: &str) -> Result<Self> {
        Self::with_rule(spec, landmarks, RebalanceRule::Farthest, name)
    }

    pub fn with_rule(
        spec: GridWorldSpec,
        landmarks: Vec<(usize, usize)>,
        rule: RebalanceRule,
        name: &str,
    ) -> Result<Self> {
        spec.validate()?;
        if landmarks.is_empty() {
            return Err(MfError::Degenerate("navigation needs at least one landmark".into()));
        }
        for &(x, y) in &landmarks {
            if x >= spec.side || y >= spec.side {
                return Err(MfError::IndexOutOfRange(format!(
                    "landmark ({x}, {y}) outside a {0}×{0} grid",
                    spec.side
                )));
            }
        }
        let cells = spec.cells();

        // Team commands: approach (walk toward the nearest landmark, stay
        // once on it) and rebalance (walk toward a landmark other than the
        // nearest — the command that redistributes a crowded team).  Approach
        // sits at id 0 so that greedy tie-breaking picks it.  With a single
        // landmark the menu degenerates to [approach, hold].
        let mut approach = Vec::with_capacity(cells);
        let mut rebalance = Vec::with_capacity(cells);
        for cell in 0..cells {
            let here = cell_xy(cell, spec.side);
            // Landmark ranks by distance, ties toward the lowest index.
            let mut order: Vec<usize> = (0..landmarks.len()).collect();
            order.sort_by(|&a, &b| dist(here, landmarks[a]).total_cmp(&dist(here, landmarks[b])));
            // Move that gets closest to the target, ties toward the lowest
            // move id (so "stay" wins once on target).
            let toward = |target: (usize, usize)| -> usize {
                let mut best = (0, f64::INFINITY);
                for mv in 0..MOVES {
                    let d = dist(cell_xy(moved(cell, mv, spec.side), spec.side), target);
                    if d < best.1 - 1e-12 {
                        best = (mv, d);
                    }
                }
                best.0
            };
            approach.push(toward(landmarks[order[0]]));
            if landmarks.len() > 1 {
                let target = match rule {
                    RebalanceRule::SecondNearest => order[1],
                    RebalanceRule::Farthest => *order.last().unwrap(),
                };
                rebalance.push(toward(landmarks[target]));
            }
        }
        let second = if landmarks.len() > 1 {
            LocalActionMap::new(rebalance)?
        } else {
            LocalActionMap::constant(cells, 0)
        };
        let actions = vec![LocalActionMap::new(approach)?, second];

        let kernel = (0..cells)
            .map(|cell| (0..MOVES).map(|mv| slipped_row(cell, mv, spec.side, spec.slip)).collect())
            .collect();
        Ok(Self { spec, landmarks, actions, kernel, name: name.to_string() })
    }

    pub fn spec(&self) -> &GridWorldSpec {
        &self.spec
    }

    pub fn landmarks(&self) -> &[(usize, usize)] {
        &self.landmarks
    }
}

impl MeanFieldEnv for GridNavEnv {
    fn num_states(&self) -> usize {
        self.spec.cells()
    }

    fn num_agents(&self) -> usize {
        self.spec.num_agents
    }

    fn action_set(&self) -> &[LocalActionMap] {
        &self.actions
    }

    fn gamma(&self) -> f64 {
        self.spec.gamma
    }

    fn reward_bound(&self) -> f64 {
        1.0
    }

    fn local_kernel(
        &self,
        state: AgentState,
        _hist: &StateHistogram,
        action: usize,
        out: &mut Vec<(AgentState, f64)>,
    ) {
        out.clear();
        out.extend_from_slice(&self.kernel[state.0][action]);
    }

    fn reward(&self, _state: AgentState, hist: &StateHistogram, _abar: &LocalActionMap) -> f64 {
        let occupied: Vec<(f64, f64)> = hist
            .mass
            .iter()
            .enumerate()
            .filter(|(_, &m)| m > 0.0)
            .map(|(cell, _)| {
                let (x, y) = cell_xy(cell, self.spec.side);
                (x as f64, y as f64)
            })
            .collect();
        let landmarks: Vec<(f64, f64)> =
            self.landmarks.iter().map(|&(x, y)| (x as f64, y as f64)).collect();
        let raw = navigation_reward(&occupied, &landmarks).expect("non-empty by construction");
        raw / (self.landmarks.len() as f64 * self.spec.diagonal())
    }

    fn reset(&self, rng: &mut dyn RngCore) -> JointConfig {
        let cells = self.spec.cells();
        JointConfig {
            states: (0..self.spec.num_agents)
                .map(|_| AgentState(rng.gen_range(0..cells)))
                .collect(),
        }
    }

    fn name(&self) -> &str {
        &self.name
    }
}

/// Cooperative push: local state is `(agent cell, ball cell)` encoded as
/// `agent_cell · side² + ball_cell`.  The ball is a deterministic function of
/// the population: if the nearest occupied cell is within Manhattan distance
/// 1 it rolls one step away from it.  Rewards are normalized by twice the
/// diagonal so they live in `[−1, 0]`.
#[derive(Clone, Debug)]
pub struct GridPushEnv {
    spec: GridWorldSpec,
    landmark: (usize, usize),
    actions: Vec<LocalActionMap>,
    name: String,
}

impl GridPushEnv {
    pub fn new(spec: GridWorldSpec, landmark: (usize, usize), name: &str) -> Result<Self> {
        spec.validate()?;
        if landmark.0 >= spec.side || landmark.1 >= spec.side {
            return Err(MfError::IndexOutOfRange(format!(
                "landmark ({}, {}) outside a {2}×{2} grid",
                landmark.0, landmark.1, spec.side
            )));
        }
        let cells = spec.cells();
        let states = cells * cells;
        let mut actions: Vec<LocalActionMap> =
            (0..MOVES).map(|m| LocalActionMap::constant(states, m)).collect();
        // Greedy-toward-ball map: chase the ball component of the own state.
        let mut greedy = Vec::with_capacity(states);
        for state in 0..states {
            let agent = cell_xy(state / cells, spec.side);
            let ball = cell_xy(state % cells, spec.side);
            let mut best_mv = 0;
            let mut best_d = f64::INFINITY;
            for mv in 0..MOVES {
                let next = cell_xy(moved(xy_cell(agent.0, agent.1, spec.side), mv, spec.side), spec.side);
                let d = dist(next, ball);
                if d < best_d - 1e-12 {
                    best_d = d;
                    best_mv = mv;
                }
            }
            greedy.push(best_mv);
        }
        actions.push(LocalActionMap::new(greedy)?);
        Ok(Self { spec, landmark, actions, name: name.to_string() })
    }

    fn decode(&self, state: usize) -> (usize, usize) {
        let cells = self.spec.cells();
        (state / cells, state % cells)
    }

    /// Occupied *agent* cells of a histogram over composite states.
    fn occupied_cells(&self, hist: &StateHistogram) -> Vec<usize> {
        let mut cells: Vec<usize> = hist
            .mass
            .iter()
            .enumerate()
            .filter(|(_, &m)| m > 0.0)
            .map(|(s, _)| self.decode(s).0)
            .collect();
        cells.sort_unstable();
        cells.dedup();
        cells
    }

    /// Where the ball rolls given the occupied agent cells: one step away
    /// from the nearest agent if that agent is adjacent (Manhattan ≤ 1).
    fn ball_next(&self, ball: usize, occupied: &[usize]) -> usize {
        let side = self.spec.side;
        let ball_xy = cell_xy(ball, side);
        let mut nearest = occupied[0];
        for &c in &occupied[1..] {
            if dist(cell_xy(c, side), ball_xy) < dist(cell_xy(nearest, side), ball_xy) {
                nearest = c;
            }
        }
        let nearest_xy = cell_xy(nearest, side);
        if manhattan(nearest_xy, ball_xy) > 1 {
            return ball;
        }
        // Roll in the direction that maximizes distance from the pusher;
        // ties toward the lowest move id.  Staying is not an option unless
        // every escape is blocked by walls back onto the same cell.
        let mut best = ball;
        let mut best_d = f64::NEG_INFINITY;
        for mv in 1..MOVES {
            let next = moved(ball, mv, side);
            let d = dist(cell_xy(next, side), nearest_xy);
            if d > best_d + 1e-12 {
                best_d = d;
                best = next;
            }
        }
        best
    }
}

impl MeanFieldEnv for GridPushEnv {
    fn num_states(&self) -> usize {
        self.spec.cells() * self.spec.cells()
    }

    fn num_agents(&self) -> usize {
        self.spec.num_agents
    }

    fn action_set(&self) -> &[LocalActionMap] {
        &self.actions
    }

    fn gamma(&self) -> f64 {
        self.spec.gamma
    }

    fn reward_bound(&self) -> f64 {
        1.0
    }

    fn local_kernel(
        &self,
        state: AgentState,
        hist: &StateHistogram,
        action: usize,
        out: &mut Vec<(AgentState, f64)>,
    ) {
        let cells = self.spec.cells();
        let (agent, ball) = self.decode(state.0);
        let occupied = self.occupied_cells(hist);
        let ball_next = self.ball_next(ball, &occupied);
        out.clear();
        for (cell, p) in slipped_row(agent, action, self.spec.side, self.spec.slip) {
            out.push((AgentState(cell.0 * cells + ball_next), p));
        }
    }

    fn reward(&self, state: AgentState, hist: &StateHistogram, _abar: &LocalActionMap) -> f64 {
        let side = self.spec.side;
        let (_, ball) = self.decode(state.0);
        let agents: Vec<(f64, f64)> = self
            .occupied_cells(hist)
            .iter()
            .map(|&c| {
                let (x, y) = cell_xy(c, side);
                (x as f64, y as f64)
            })
            .collect();
        let ball_xy = cell_xy(ball, side);
        let raw = push_reward(
            &agents,
            (ball_xy.0 as f64, ball_xy.1 as f64),
            (self.landmark.0 as f64, self.landmark.1 as f64),
        )
        .expect("non-empty by construction");
        raw / (2.0 * self.spec.diagonal())
    }

    fn reset(&self, rng: &mut dyn RngCore) -> JointConfig {
        let cells = self.spec.cells();
        let ball = rng.gen_range(0..cells);
        JointConfig {
            states: (0..self.spec.num_agents)
                .map(|_| AgentState(rng.gen_range(0..cells) * cells + ball))
                .collect(),
        }
    }

    fn name(&self) -> &str {
        &self.name
    }
}
