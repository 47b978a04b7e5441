//! Discrete grid-city driving world.
//!
//! Intersections sit on a `grid_height x grid_width` lattice. Roadblocks live
//! on the road segments between orthogonally adjacent intersections. The car
//! never U-turns voluntarily: at every intersection it may turn left, continue
//! straight or turn right. Driving into a roadblocked segment is a *blocked
//! excursion*: the car drives in, turns around and comes back, which costs two
//! steps and leaves position and heading unchanged.

use std::collections::BTreeSet;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::planner;
use crate::rng::{self, Stream};

/// Version tag written into serialized task documents.
pub const TASK_FORMAT_VERSION: u32 = 1;

/// Maximum number of intersections a participant may decide at per task.
pub const DEFAULT_INTERACTION_CAP: u32 = 20;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WorldError {
    #[error("position ({row}, {col}) is outside the {height}x{width} grid")]
    OutOfBounds {
        row: usize,
        col: usize,
        height: usize,
        width: usize,
    },
    #[error("intersections {a} and {b} are not orthogonally adjacent")]
    NotAdjacent { a: GridPos, b: GridPos },
    #[error("direction {dir} is not available at {pos} heading {heading}")]
    DirectionUnavailable {
        dir: Direction,
        pos: GridPos,
        heading: Heading,
    },
    #[error("no selectable direction at {pos} heading {heading}")]
    NoOptions { pos: GridPos, heading: Heading },
    #[error("no valid task layout found after {attempts} attempts")]
    GenerationExhausted { attempts: u32 },
    #[error("invalid world config: {0}")]
    InvalidConfig(String),
    #[error("task {task_id} violates its invariants: {reason}")]
    InvalidTask { task_id: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridPos {
    pub row: usize,
    pub col: usize,
}

impl GridPos {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    pub fn manhattan(self, other: GridPos) -> usize {
        self.row.abs_diff(other.row) + self.col.abs_diff(other.col)
    }
}

impl fmt::Display for GridPos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

/// Compass heading. Row 0 is the northern edge of the map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Heading {
    North,
    East,
    South,
    West,
}

impl Heading {
    pub const ALL: [Heading; 4] = [Heading::North, Heading::East, Heading::South, Heading::West];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Heading {
        Self::ALL[i % 4]
    }

    pub fn turn(self, dir: Direction) -> Heading {
        let offset = match dir {
            Direction::Left => 3,
            Direction::Straight => 0,
            Direction::Right => 1,
        };
        Self::from_index(self.index() + offset)
    }

    pub fn reverse(self) -> Heading {
        Self::from_index(self.index() + 2)
    }

    /// Row/column delta of one step in this heading.
    pub fn delta(self) -> (isize, isize) {
        match self {
            Heading::North => (-1, 0),
            Heading::East => (0, 1),
            Heading::South => (1, 0),
            Heading::West => (0, -1),
        }
    }

    /// The relative direction that turns `self` into `to`, if it is not a U-turn.
    pub fn relative(self, to: Heading) -> Option<Direction> {
        Direction::ALL.into_iter().find(|&d| self.turn(d) == to)
    }
}

impl fmt::Display for Heading {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Relative driving direction offered at an intersection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    Left,
    Straight,
    Right,
}

impl Direction {
    pub const ALL: [Direction; 3] = [Direction::Left, Direction::Straight, Direction::Right];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Direction> {
        Self::ALL.get(i).copied()
    }

    /// Left and Right swap; Straight has no opposite among the menu options.
    pub fn opposite(self) -> Option<Direction> {
        match self {
            Direction::Left => Some(Direction::Right),
            Direction::Right => Some(Direction::Left),
            Direction::Straight => None,
        }
    }

    pub fn is_lateral(self) -> bool {
        self != Direction::Straight
    }

    pub fn phrase(self) -> &'static str {
        match self {
            Direction::Left => "turn left",
            Direction::Straight => "continue straight",
            Direction::Right => "turn right",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Road segment between two adjacent intersections, stored with `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "[GridPos; 2]", into = "[GridPos; 2]")]
pub struct RoadSegment {
    a: GridPos,
    b: GridPos,
}

impl RoadSegment {
    pub fn new(p: GridPos, q: GridPos) -> Result<Self, WorldError> {
        if p.manhattan(q) != 1 {
            return Err(WorldError::NotAdjacent { a: p, b: q });
        }
        let (a, b) = if p < q { (p, q) } else { (q, p) };
        Ok(Self { a, b })
    }

    pub fn a(&self) -> GridPos {
        self.a
    }

    pub fn b(&self) -> GridPos {
        self.b
    }

    /// Midpoint in (row, col) coordinates.
    pub fn midpoint(&self) -> (f64, f64) {
        (
            (self.a.row + self.b.row) as f64 / 2.0,
            (self.a.col + self.b.col) as f64 / 2.0,
        )
    }

    pub fn obstacle(&self) -> ObstacleKind {
        ObstacleKind::for_segment(self)
    }
}

impl TryFrom<[GridPos; 2]> for RoadSegment {
    type Error = WorldError;

    fn try_from(value: [GridPos; 2]) -> Result<Self, Self::Error> {
        RoadSegment::new(value[0], value[1])
    }
}

impl From<RoadSegment> for [GridPos; 2] {
    fn from(s: RoadSegment) -> Self {
        [s.a, s.b]
    }
}

/// What is physically blocking a roadblocked segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ObstacleKind {
    Construction,
    Crash,
}

impl ObstacleKind {
    /// Fixed per segment so a layout always shows the same obstacles.
    pub fn for_segment(seg: &RoadSegment) -> ObstacleKind {
        if (seg.a.row * 31 + seg.a.col * 17 + seg.b.row + seg.b.col).is_multiple_of(2) {
            ObstacleKind::Construction
        } else {
            ObstacleKind::Crash
        }
    }
}

/// One navigation problem.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CityTask {
    pub task_id: String,
    pub grid_height: usize,
    pub grid_width: usize,
    pub roadblocks: BTreeSet<RoadSegment>,
    pub start: GridPos,
    pub start_heading: Heading,
    pub goal: GridPos,
    pub optimal_length: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl CityTask {
    pub fn in_bounds(&self, pos: GridPos) -> bool {
        pos.row < self.grid_height && pos.col < self.grid_width
    }

    pub fn cell_count(&self) -> usize {
        self.grid_height * self.grid_width
    }

    pub fn cell_index(&self, pos: GridPos) -> usize {
        pos.row * self.grid_width + pos.col
    }

    /// Intersection one step away in `heading`, if it lies on the grid.
    pub fn neighbor(&self, pos: GridPos, heading: Heading) -> Option<GridPos> {
        let (dr, dc) = heading.delta();
        let row = pos.row.checked_add_signed(dr)?;
        let col = pos.col.checked_add_signed(dc)?;
        let next = GridPos::new(row, col);
        self.in_bounds(next).then_some(next)
    }

    pub fn is_blocked(&self, p: GridPos, q: GridPos) -> bool {
        RoadSegment::new(p, q)
            .map(|s| self.roadblocks.contains(&s))
            .unwrap_or(false)
    }

    /// Roadblocked segment hit by driving `dir` from the given pose, if any.
    pub fn blocked_segment(&self, pos: GridPos, heading: Heading, dir: Direction) -> Option<RoadSegment> {
        let next = self.neighbor(pos, heading.turn(dir))?;
        let seg = RoadSegment::new(pos, next).ok()?;
        self.roadblocks.contains(&seg).then_some(seg)
    }

    pub fn total_segments(&self) -> usize {
        all_segments(self.grid_height, self.grid_width).len()
    }

    /// Checks every structural invariant of a task (bounds, reachability,
    /// uniqueness of the shortest path and the start-heading constraint).
    pub fn validate(&self) -> Result<(), WorldError> {
        let invalid = |reason: String| WorldError::InvalidTask {
            task_id: self.task_id.clone(),
            reason,
        };
        if self.grid_height == 0 || self.grid_width == 0 {
            return Err(invalid("empty grid".into()));
        }
        for p in [self.start, self.goal] {
            if !self.in_bounds(p) {
                return Err(invalid(format!("{p} is off the grid")));
            }
        }
        for seg in &self.roadblocks {
            if !self.in_bounds(seg.a) || !self.in_bounds(seg.b) {
                return Err(invalid(format!("roadblock {}-{} is off the grid", seg.a, seg.b)));
            }
        }
        if self.start == self.goal {
            return Err(invalid("start equals goal".into()));
        }
        let field = planner::compute_distances(self).map_err(|e| invalid(e.to_string()))?;
        let cell = field.dist(self.start).ok_or_else(|| invalid("goal unreachable".into()))?;
        if cell != self.optimal_length {
            return Err(invalid(format!(
                "optimal_length {} does not match shortest distance {cell}",
                self.optimal_length
            )));
        }
        if field.drive_dist(self.start, self.start_heading) != Some(cell) {
            return Err(invalid("start heading forces a detour off the shortest path".into()));
        }
        let paths = planner::count_shortest_paths(self);
        if paths != 1 {
            return Err(invalid(format!("{paths} distinct shortest paths")));
        }
        Ok(())
    }
}

/// Every road segment of a grid in canonical order.
pub fn all_segments(height: usize, width: usize) -> Vec<RoadSegment> {
    let mut out = Vec::new();
    for row in 0..height {
        for col in 0..width {
            let p = GridPos::new(row, col);
            if col + 1 < width {
                out.push(RoadSegment { a: p, b: GridPos::new(row, col + 1) });
            }
            if row + 1 < height {
                out.push(RoadSegment { a: p, b: GridPos::new(row + 1, col) });
            }
        }
    }
    out.sort();
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CarState {
    pub pos: GridPos,
    pub heading: Heading,
    pub steps_taken: u32,
    pub interactions_used: u32,
    /// Set when the most recent move was a blocked excursion.
    #[serde(default)]
    pub last_move_blocked: bool,
}

impl CarState {
    pub fn at_start(task: &CityTask) -> Self {
        Self {
            pos: task.start,
            heading: task.start_heading,
            steps_taken: 0,
            interactions_used: 0,
            last_move_blocked: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Terminal {
    GoalReached,
    InteractionCapHit,
    Ongoing,
}

/// Directions whose target intersection is on the grid, in Left/Straight/Right
/// order, minus `mask`. Roadblocked directions stay selectable.
pub fn available_directions(
    task: &CityTask,
    car: &CarState,
    mask: Option<Direction>,
) -> Result<Vec<Direction>, WorldError> {
    if !task.in_bounds(car.pos) {
        return Err(WorldError::OutOfBounds {
            row: car.pos.row,
            col: car.pos.col,
            height: task.grid_height,
            width: task.grid_width,
        });
    }
    let dirs: Vec<Direction> = Direction::ALL
        .into_iter()
        .filter(|&d| Some(d) != mask)
        .filter(|&d| task.neighbor(car.pos, car.heading.turn(d)).is_some())
        .collect();
    if dirs.is_empty() {
        return Err(WorldError::NoOptions { pos: car.pos, heading: car.heading });
    }
    Ok(dirs)
}

pub fn apply_move(task: &CityTask, car: &CarState, dir: Direction) -> Result<CarState, WorldError> {
    let available = available_directions(task, car, None)?;
    if !available.contains(&dir) {
        return Err(WorldError::DirectionUnavailable { dir, pos: car.pos, heading: car.heading });
    }
    let heading = car.heading.turn(dir);
    // Available directions always have an on-grid neighbour.
    let next = task
        .neighbor(car.pos, heading)
        .ok_or(WorldError::DirectionUnavailable { dir, pos: car.pos, heading: car.heading })?;
    let mut out = *car;
    out.interactions_used += 1;
    if task.is_blocked(car.pos, next) {
        out.steps_taken += 2;
        out.last_move_blocked = true;
    } else {
        out.pos = next;
        out.heading = heading;
        out.steps_taken += 1;
        out.last_move_blocked = false;
    }
    Ok(out)
}

pub fn is_terminal(task: &CityTask, car: &CarState, interaction_cap: u32) -> Terminal {
    if car.pos == task.goal {
        Terminal::GoalReached
    } else if car.interactions_used >= interaction_cap {
        Terminal::InteractionCapHit
    } else {
        Terminal::Ongoing
    }
}

/// Parameters of the task generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub grid_height: usize,
    pub grid_width: usize,
    pub roadblocks_min: usize,
    pub roadblocks_max: usize,
    pub min_optimal_length: u32,
    pub max_optimal_length: u32,
    pub interaction_cap: u32,
    pub max_attempts: u32,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            grid_height: 7,
            grid_width: 7,
            roadblocks_min: 8,
            roadblocks_max: 14,
            min_optimal_length: 6,
            max_optimal_length: 12,
            interaction_cap: DEFAULT_INTERACTION_CAP,
            max_attempts: 10_000,
        }
    }
}

impl WorldConfig {
    pub fn with_roadblocks(mut self, n: usize) -> Self {
        self.roadblocks_min = n;
        self.roadblocks_max = n;
        self
    }

    fn check(&self) -> Result<(), WorldError> {
        if self.grid_height < 2 || self.grid_width < 2 {
            return Err(WorldError::InvalidConfig("grid must be at least 2x2".into()));
        }
        if self.roadblocks_min > self.roadblocks_max {
            return Err(WorldError::InvalidConfig("roadblocks_min > roadblocks_max".into()));
        }
        if self.min_optimal_length > self.max_optimal_length {
            return Err(WorldError::InvalidConfig("min_optimal_length > max_optimal_length".into()));
        }
        if self.min_optimal_length == 0 {
            return Err(WorldError::InvalidConfig("min_optimal_length must be positive".into()));
        }
        Ok(())
    }
}

/// Rejection-samples a layout satisfying every [`CityTask`] invariant.
///
/// Beyond uniqueness of the shortest path, accepted layouts also guarantee
/// that every intersection along the optimal route offers at least two
/// directions, and that no pose reachable from the start is a trap from which
/// the goal can no longer be reached.
pub fn generate_task(seed: u64, config: &WorldConfig) -> Result<CityTask, WorldError> {
    config.check()?;
    let mut rng = rng::stream(seed, Stream::Tasks);
    let segments = all_segments(config.grid_height, config.grid_width);
    let cells = config.grid_height * config.grid_width;

    for _attempt in 0..config.max_attempts {
        let count = rng.random_range(config.roadblocks_min..=config.roadblocks_max);
        if count > segments.len() {
            continue;
        }
        let roadblocks: BTreeSet<RoadSegment> = rand::seq::index::sample(&mut rng, segments.len(), count)
            .into_iter()
            .map(|i| segments[i])
            .collect();
        let s = rng.random_range(0..cells);
        let g = rng.random_range(0..cells);
        if s == g {
            continue;
        }
        let start = GridPos::new(s / config.grid_width, s % config.grid_width);
        let goal = GridPos::new(g / config.grid_width, g % config.grid_width);
        let heading_draw = rng.random_range(0..3usize);

        let mut task = CityTask {
            task_id: format!("task-{seed}"),
            grid_height: config.grid_height,
            grid_width: config.grid_width,
            roadblocks,
            start,
            start_heading: Heading::North,
            goal,
            optimal_length: 0,
            seed: Some(seed),
        };
        let Ok(field) = planner::compute_distances(&task) else {
            continue;
        };
        let Some(len) = field.dist(start) else {
            continue;
        };
        if len < config.min_optimal_length || len > config.max_optimal_length || len >= config.interaction_cap {
            continue;
        }
        if planner::count_shortest_paths(&task) != 1 {
            continue;
        }
        // First step of the unique path fixes which headings avoid a U-turn.
        let Some(first) = Heading::ALL.into_iter().find(|&h| {
            task.neighbor(start, h)
                .is_some_and(|n| !task.is_blocked(start, n) && field.dist(n) == Some(len - 1))
        }) else {
            continue;
        };
        let headings: Vec<Heading> = Heading::ALL.into_iter().filter(|&h| h != first.reverse()).collect();
        task.start_heading = headings[heading_draw];
        task.optimal_length = len;

        if !route_has_choices(&task, &field) || has_trap_states(&task, &field) {
            continue;
        }
        return Ok(task);
    }
    Err(WorldError::GenerationExhausted { attempts: config.max_attempts })
}

/// Every pose on the optimal route offers at least two directions.
fn route_has_choices(task: &CityTask, field: &planner::DistanceField) -> bool {
    let mut car = CarState::at_start(task);
    while car.pos != task.goal {
        match available_directions(task, &car, None) {
            Ok(d) if d.len() >= 2 => {}
            _ => return false,
        }
        let Ok(dir) = planner::optimal_direction(task, &car, field) else {
            return false;
        };
        match apply_move(task, &car, dir) {
            Ok(next) if !next.last_move_blocked => car = next,
            _ => return false,
        }
        if car.steps_taken > task.optimal_length {
            return false;
        }
    }
    true
}

/// Any pose reachable from the start whose goal distance is undefined.
fn has_trap_states(task: &CityTask, field: &planner::DistanceField) -> bool {
    let mut seen = vec![false; task.cell_count() * 4];
    let mut stack = vec![(task.start, task.start_heading)];
    while let Some((pos, heading)) = stack.pop() {
        let idx = task.cell_index(pos) * 4 + heading.index();
        if seen[idx] {
            continue;
        }
        seen[idx] = true;
        if pos == task.goal {
            continue;
        }
        if field.drive_dist(pos, heading).is_none() {
            return true;
        }
        for dir in Direction::ALL {
            let h = heading.turn(dir);
            if let Some(n) = task.neighbor(pos, h) {
                if !task.is_blocked(pos, n) {
                    stack.push((n, h));
                }
            }
        }
    }
    false
}

/// Versioned on-disk form of a list of tasks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskBank {
    pub version: u32,
    pub tasks: Vec<CityTask>,
}

impl TaskBank {
    pub fn new(tasks: Vec<CityTask>) -> Self {
        Self { version: TASK_FORMAT_VERSION, tasks }
    }

    /// Generates `count` tasks from consecutive seeds derived from `seed`.
    pub fn generate(count: usize, seed: u64, config: &WorldConfig) -> Result<Self, WorldError> {
        let tasks = (0..count as u64)
            .map(|i| generate_task(rng::derive_seed(seed, i), config))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::new(tasks))
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("task bank serializes")
    }

    pub fn get(&self, task_id: &str) -> Option<&CityTask> {
        self.tasks.iter().find(|t| t.task_id == task_id)
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        if self.version != TASK_FORMAT_VERSION {
            return Err(WorldError::InvalidConfig(format!("unsupported task bank version {}", self.version)));
        }
        self.tasks.iter().try_for_each(CityTask::validate)
    }
}
