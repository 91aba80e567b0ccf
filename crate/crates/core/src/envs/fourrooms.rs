//! The Four Rooms grid world: an odd-sized square grid split into four rooms
//! by a central wall cross, with one doorway per wall segment. Contexts vary
//! the doorway positions, the agent's start cell and facing, and the goal.
//! Actions are turn left, turn right, move forward; reward is 1 on reaching
//! the goal and 0 elsewhere.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{HashSet, VecDeque};

use super::rollout::{Environment, StepResult};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dir {
    N = 0,
    E = 1,
    S = 2,
    W = 3,
}

impl Dir {
    pub fn from_index(i: usize) -> Dir {
        match i % 4 {
            0 => Dir::N,
            1 => Dir::E,
            2 => Dir::S,
            _ => Dir::W,
        }
    }

    pub fn index(&self) -> usize {
        *self as usize
    }

    pub fn left(&self) -> Dir {
        Dir::from_index((self.index() + 3) % 4)
    }

    pub fn right(&self) -> Dir {
        Dir::from_index((self.index() + 1) % 4)
    }

    /// (dcol, drow) with rows growing downward.
    pub fn offset(&self) -> (isize, isize) {
        match self {
            Dir::N => (0, -1),
            Dir::E => (1, 0),
            Dir::S => (0, 1),
            Dir::W => (-1, 0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridAction {
    Left,
    Right,
    Forward,
}

pub const GRID_ACTIONS: [GridAction; 3] = [GridAction::Left, GridAction::Right, GridAction::Forward];

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FourRoomsContext {
    pub size: usize,
    /// walls[row][col]
    pub walls: Vec<Vec<bool>>,
    pub start: (usize, usize, Dir),
    pub goal: (usize, usize),
}

/// JSON form: `{walls: ["1111...", ...], start: [col, row, dir], goal: [col, row]}`.
#[derive(Serialize, Deserialize)]
struct ContextWire {
    walls: Vec<String>,
    start: [usize; 3],
    goal: [usize; 2],
}

impl Serialize for FourRoomsContext {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let wire = ContextWire {
            walls: self
                .walls
                .iter()
                .map(|row| row.iter().map(|&w| if w { '1' } else { '0' }).collect())
                .collect(),
            start: [self.start.0, self.start.1, self.start.2.index()],
            goal: [self.goal.0, self.goal.1],
        };
        wire.serialize(ser)
    }
}

impl<'de> Deserialize<'de> for FourRoomsContext {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let wire = ContextWire::deserialize(de)?;
        let walls: Vec<Vec<bool>> =
            wire.walls.iter().map(|row| row.chars().map(|c| c == '1').collect()).collect();
        let size = walls.len();
        Ok(FourRoomsContext {
            size,
            walls,
            start: (wire.start[0], wire.start[1], Dir::from_index(wire.start[2])),
            goal: (wire.goal[0], wire.goal[1]),
        })
    }
}

impl FourRoomsContext {
    pub fn is_wall(&self, col: usize, row: usize) -> bool {
        self.walls[row][col]
    }

    /// Flattened one-hot encoding: wall map, goal map, agent map, facing.
    pub fn encode(&self, s: &GridState) -> Vec<f64> {
        let n = self.size;
        let mut v = vec![0.0; 3 * n * n + 4];
        for r in 0..n {
            for c in 0..n {
                if self.walls[r][c] {
                    v[r * n + c] = 1.0;
                }
            }
        }
        v[n * n + self.goal.1 * n + self.goal.0] = 1.0;
        v[2 * n * n + s.row * n + s.col] = 1.0;
        v[3 * n * n + s.dir.index()] = 1.0;
        v
    }

    pub fn encoding_dim(&self) -> usize {
        3 * self.size * self.size + 4
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridState {
    pub col: usize,
    pub row: usize,
    pub dir: Dir,
    pub steps: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct FourRoomsEnv {
    pub max_steps: usize,
}

impl Default for FourRoomsEnv {
    fn default() -> Self {
        FourRoomsEnv { max_steps: 200 }
    }
}

impl Environment for FourRoomsEnv {
    type Ctx = FourRoomsContext;
    type State = GridState;
    type Action = GridAction;

    fn reset(&self, ctx: &FourRoomsContext) -> GridState {
        GridState { col: ctx.start.0, row: ctx.start.1, dir: ctx.start.2, steps: 0 }
    }

    fn step(&self, ctx: &FourRoomsContext, s: &GridState, a: &GridAction) -> StepResult<GridState> {
        let mut next = *s;
        match a {
            GridAction::Left => next.dir = s.dir.left(),
            GridAction::Right => next.dir = s.dir.right(),
            GridAction::Forward => {
                let (dc, dr) = s.dir.offset();
                let nc = s.col as isize + dc;
                let nr = s.row as isize + dr;
                if nc >= 0
                    && nr >= 0
                    && (nc as usize) < ctx.size
                    && (nr as usize) < ctx.size
                    && !ctx.is_wall(nc as usize, nr as usize)
                {
                    next.col = nc as usize;
                    next.row = nr as usize;
                }
            }
        }
        next.steps += 1;
        let at_goal = (next.col, next.row) == ctx.goal;
        StepResult {
            next,
            reward: if at_goal { 1.0 } else { 0.0 },
            terminated: at_goal,
            truncated: !at_goal && next.steps >= self.max_steps,
        }
    }
}

fn build_walls(size: usize, doors: [usize; 4]) -> Vec<Vec<bool>> {
    let mid = size / 2;
    let mut walls = vec![vec![false; size]; size];
    for i in 0..size {
        walls[0][i] = true;
        walls[size - 1][i] = true;
        walls[i][0] = true;
        walls[i][size - 1] = true;
        walls[mid][i] = true;
        walls[i][mid] = true;
    }
    // doors: [vertical-top row, vertical-bottom row, horizontal-left col, horizontal-right col]
    walls[doors[0]][mid] = false;
    walls[doors[1]][mid] = false;
    walls[mid][doors[2]] = false;
    walls[mid][doors[3]] = false;
    walls
}

fn floor_cells(walls: &[Vec<bool>]) -> Vec<(usize, usize)> {
    let n = walls.len();
    let mut cells = Vec::new();
    for r in 0..n {
        for c in 0..n {
            if !walls[r][c] {
                cells.push((c, r));
            }
        }
    }
    cells
}

/// Cell-graph BFS reachability, the solvability oracle for generation.
pub fn reachable(ctx: &FourRoomsContext, from: (usize, usize), to: (usize, usize)) -> bool {
    let n = ctx.size;
    let mut seen = vec![vec![false; n]; n];
    let mut q = VecDeque::new();
    seen[from.1][from.0] = true;
    q.push_back(from);
    while let Some((c, r)) = q.pop_front() {
        if (c, r) == to {
            return true;
        }
        for (dc, dr) in [(0isize, -1isize), (1, 0), (0, 1), (-1, 0)] {
            let nc = c as isize + dc;
            let nr = r as isize + dr;
            if nc >= 0 && nr >= 0 && (nc as usize) < n && (nr as usize) < n {
                let (nc, nr) = (nc as usize, nr as usize);
                if !ctx.is_wall(nc, nr) && !seen[nr][nc] {
                    seen[nr][nc] = true;
                    q.push_back((nc, nr));
                }
            }
        }
    }
    false
}

fn sample_context(size: usize, rng: &mut ChaCha8Rng) -> FourRoomsContext {
    let mid = size / 2;
    let doors = [
        rng.gen_range(1..mid),
        rng.gen_range(mid + 1..size - 1),
        rng.gen_range(1..mid),
        rng.gen_range(mid + 1..size - 1),
    ];
    let walls = build_walls(size, doors);
    let cells = floor_cells(&walls);
    let start_cell = cells[rng.gen_range(0..cells.len())];
    let dir = Dir::from_index(rng.gen_range(0..4));
    let goal = loop {
        let g = cells[rng.gen_range(0..cells.len())];
        if g != start_cell {
            break g;
        }
    };
    FourRoomsContext { size, walls, start: (start_cell.0, start_cell.1, dir), goal }
}

/// Generates disjoint train/val/test context lists, deterministic in the
/// seed. Every context is solvable and the splits are disjoint as full
/// (walls, start, goal) tuples.
pub fn generate(
    seed: u64,
    n_train: usize,
    n_val: usize,
    n_test: usize,
    size: usize,
) -> Result<(Vec<FourRoomsContext>, Vec<FourRoomsContext>, Vec<FourRoomsContext>)> {
    if n_train == 0 || n_val == 0 || n_test == 0 {
        return Err(Error::Config("context counts must be >= 1".into()));
    }
    if size < 9 || size % 2 == 0 {
        return Err(Error::Config(format!("grid size must be odd and >= 9, got {size}")));
    }
    let total = n_train + n_val + n_test;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen: HashSet<FourRoomsContext> = HashSet::new();
    let mut all = Vec::with_capacity(total);
    let mut attempts = 0usize;
    while all.len() < total {
        attempts += 1;
        if attempts > 1000 * total {
            return Err(Error::Config(format!(
                "could not sample {total} distinct solvable contexts on a {size}x{size} grid"
            )));
        }
        let ctx = sample_context(size, &mut rng);
        if !reachable(&ctx, (ctx.start.0, ctx.start.1), ctx.goal) {
            continue;
        }
        if seen.insert(ctx.clone()) {
            all.push(ctx);
        }
    }
    let test = all.split_off(n_train + n_val);
    let val = all.split_off(n_train);
    Ok((all, val, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simple_ctx() -> FourRoomsContext {
        let walls = build_walls(9, [2, 6, 2, 6]);
        FourRoomsContext { size: 9, walls, start: (1, 1, Dir::E), goal: (7, 7) }
    }

    #[test]
    fn forward_into_wall_is_noop() {
        let env = FourRoomsEnv::default();
        let ctx = simple_ctx();
        let s = GridState { col: 1, row: 1, dir: Dir::N, steps: 0 };
        let r = env.step(&ctx, &s, &GridAction::Forward);
        assert_eq!((r.next.col, r.next.row), (1, 1));
        assert_eq!(r.reward, 0.0);
        assert!(!r.terminated);
    }

    #[test]
    fn four_rights_restore_facing() {
        let env = FourRoomsEnv::default();
        let ctx = simple_ctx();
        let mut s = env.reset(&ctx);
        let dir0 = s.dir;
        for _ in 0..4 {
            s = env.step(&ctx, &s, &GridAction::Right).next;
        }
        assert_eq!(s.dir, dir0);
        // left and right are inverse turns
        let l = env.step(&ctx, &s, &GridAction::Left).next;
        let lr = env.step(&ctx, &l, &GridAction::Right).next;
        assert_eq!(lr.dir, s.dir);
    }

    #[test]
    fn reaching_goal_terminates_with_reward_one() {
        let env = FourRoomsEnv::default();
        let ctx = simple_ctx();
        let s = GridState { col: 6, row: 7, dir: Dir::E, steps: 0 };
        let r = env.step(&ctx, &s, &GridAction::Forward);
        assert_eq!((r.next.col, r.next.row), (7, 7));
        assert_eq!(r.reward, 1.0);
        assert!(r.terminated);
    }

    #[test]
    fn generate_is_deterministic_solvable_disjoint() {
        let (tr1, v1, te1) = generate(7, 20, 8, 20, 13).unwrap();
        let (tr2, v2, te2) = generate(7, 20, 8, 20, 13).unwrap();
        assert_eq!(tr1, tr2);
        assert_eq!(v1, v2);
        assert_eq!(te1, te2);
        assert_eq!((tr1.len(), v1.len(), te1.len()), (20, 8, 20));
        let mut all: Vec<&FourRoomsContext> = tr1.iter().chain(&v1).chain(&te1).collect();
        for ctx in &all {
            assert!(reachable(ctx, (ctx.start.0, ctx.start.1), ctx.goal));
            assert_ne!((ctx.start.0, ctx.start.1), ctx.goal);
        }
        let n = all.len();
        all.sort_by_key(|c| format!("{c:?}"));
        all.dedup();
        assert_eq!(all.len(), n);
        // a different seed gives different splits
        let (tr3, _, _) = generate(8, 20, 8, 20, 13).unwrap();
        assert_ne!(tr1, tr3);
    }

    #[test]
    fn generate_rejects_bad_config() {
        assert!(generate(0, 0, 1, 1, 13).is_err());
        assert!(generate(0, 1, 1, 1, 8).is_err());
        assert!(generate(0, 1, 1, 1, 7).is_err());
    }

    #[test]
    fn context_json_round_trip() {
        let ctx = simple_ctx();
        let s = serde_json::to_string(&ctx).unwrap();
        assert!(s.contains("\"walls\""));
        let back: FourRoomsContext = serde_json::from_str(&s).unwrap();
        assert_eq!(ctx, back);
    }

    #[test]
    fn encoding_shape_and_one_hots() {
        let ctx = simple_ctx();
        let env = FourRoomsEnv::default();
        let s = env.reset(&ctx);
        let v = ctx.encode(&s);
        assert_eq!(v.len(), 3 * 81 + 4);
        let agent_plane: f64 = v[2 * 81..3 * 81].iter().sum();
        let goal_plane: f64 = v[81..2 * 81].iter().sum();
        let dir_plane: f64 = v[3 * 81..].iter().sum();
        assert_eq!((agent_plane, goal_plane, dir_plane), (1.0, 1.0, 1.0));
    }
}
