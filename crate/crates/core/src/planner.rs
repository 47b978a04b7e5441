//! Breadth-first navigation oracle.
//!
//! Two distance tables are kept per task. `dist` is the plain intersection
//! distance to the goal with roadblocked segments removed. `drive` is the
//! distance from a *pose* (intersection plus heading) under the no-U-turn
//! rule; it equals `dist` along any shortest route but is the quantity that
//! decides which menu option is best once the car has left that route.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world::{available_directions, CarState, CityTask, Direction, GridPos, Heading, WorldError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlannerError {
    #[error("goal of task {task_id} is unreachable from the start")]
    GoalUnreachable { task_id: String },
    #[error("no direction at {pos} heading {heading} leads to the goal")]
    NoProgress { pos: GridPos, heading: Heading },
    #[error("optimal direction at {pos} heading {heading} is ambiguous between {candidates:?}")]
    Ambiguous {
        pos: GridPos,
        heading: Heading,
        candidates: Vec<Direction>,
    },
    #[error(transparent)]
    World(#[from] WorldError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceField {
    pub task_id: String,
    height: usize,
    width: usize,
    cells: Vec<Option<u32>>,
    drive: Vec<Option<u32>>,
}

/// Best direction at a pose, with a flag for poses where several directions
/// tie and the fixed Left < Straight < Right order decided.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptimalChoice {
    pub direction: Direction,
    pub tied: bool,
}

impl DistanceField {
    fn cell_index(&self, pos: GridPos) -> Option<usize> {
        (pos.row < self.height && pos.col < self.width).then(|| pos.row * self.width + pos.col)
    }

    /// Steps from `pos` to the goal ignoring heading; `None` if unreachable.
    pub fn dist(&self, pos: GridPos) -> Option<u32> {
        self.cell_index(pos).and_then(|i| self.cells[i])
    }

    /// Steps from a pose to the goal without U-turns; `None` if unreachable.
    pub fn drive_dist(&self, pos: GridPos, heading: Heading) -> Option<u32> {
        self.cell_index(pos).and_then(|i| self.drive[i * 4 + heading.index()])
    }

    /// Cost-to-goal of every available direction at the car's pose. A blocked
    /// direction costs the two-step excursion plus the current distance.
    pub fn direction_costs(&self, task: &CityTask, car: &CarState) -> Result<Vec<(Direction, Option<u32>)>, PlannerError> {
        let here = self.drive_dist(car.pos, car.heading);
        let dirs = available_directions(task, car, None)?;
        Ok(dirs
            .into_iter()
            .map(|d| {
                let heading = car.heading.turn(d);
                let cost = match task.neighbor(car.pos, heading) {
                    Some(next) if task.is_blocked(car.pos, next) => here.map(|h| h + 2),
                    Some(next) => self.drive_dist(next, heading).map(|h| h + 1),
                    None => None,
                };
                (d, cost)
            })
            .collect())
    }
}

pub fn compute_distances(task: &CityTask) -> Result<DistanceField, PlannerError> {
    let n = task.cell_count();
    let mut cells = vec![None; n];
    let mut queue = VecDeque::new();
    if task.in_bounds(task.goal) {
        cells[task.cell_index(task.goal)] = Some(0);
        queue.push_back(task.goal);
    }
    while let Some(p) = queue.pop_front() {
        let d = cells[task.cell_index(p)].expect("queued cells have a distance");
        for h in Heading::ALL {
            if let Some(q) = task.neighbor(p, h) {
                let qi = task.cell_index(q);
                if cells[qi].is_none() && !task.is_blocked(p, q) {
                    cells[qi] = Some(d + 1);
                    queue.push_back(q);
                }
            }
        }
    }

    // Reverse BFS over poses: (p, h) precedes (q, hq) when driving from p in
    // heading hq reaches q and hq is not a U-turn relative to h.
    let mut drive = vec![None; n * 4];
    let mut poses = VecDeque::new();
    if task.in_bounds(task.goal) {
        for h in Heading::ALL {
            drive[task.cell_index(task.goal) * 4 + h.index()] = Some(0);
            poses.push_back((task.goal, h));
        }
    }
    while let Some((q, hq)) = poses.pop_front() {
        let d = drive[task.cell_index(q) * 4 + hq.index()].expect("queued poses have a distance");
        let Some(p) = task.neighbor(q, hq.reverse()) else {
            continue;
        };
        if task.is_blocked(p, q) {
            continue;
        }
        for h in Heading::ALL {
            if h == hq.reverse() {
                continue;
            }
            let idx = task.cell_index(p) * 4 + h.index();
            if drive[idx].is_none() {
                drive[idx] = Some(d + 1);
                poses.push_back((p, h));
            }
        }
    }

    let field = DistanceField {
        task_id: task.task_id.clone(),
        height: task.grid_height,
        width: task.grid_width,
        cells,
        drive,
    };
    if field.dist(task.start).is_none() {
        return Err(PlannerError::GoalUnreachable { task_id: task.task_id.clone() });
    }
    Ok(field)
}

fn best_directions(task: &CityTask, car: &CarState, field: &DistanceField) -> Result<Vec<Direction>, PlannerError> {
    let costs = field.direction_costs(task, car)?;
    let best = costs.iter().filter_map(|&(_, c)| c).min();
    let Some(best) = best else {
        return Err(PlannerError::NoProgress { pos: car.pos, heading: car.heading });
    };
    Ok(costs.into_iter().filter(|&(_, c)| c == Some(best)).map(|(d, _)| d).collect())
}

/// The unique direction minimizing cost-to-goal. Ties are an error.
pub fn optimal_direction(task: &CityTask, car: &CarState, field: &DistanceField) -> Result<Direction, PlannerError> {
    let best = best_directions(task, car, field)?;
    match best.as_slice() {
        [d] => Ok(*d),
        _ => Err(PlannerError::Ambiguous { pos: car.pos, heading: car.heading, candidates: best }),
    }
}

/// Like [`optimal_direction`] but breaks ties by direction order. Used for
/// poses off the optimal route, where equal-length detours are common.
pub fn resolve_optimal(task: &CityTask, car: &CarState, field: &DistanceField) -> Result<OptimalChoice, PlannerError> {
    let best = best_directions(task, car, field)?;
    Ok(OptimalChoice { direction: best[0], tied: best.len() > 1 })
}

/// Number of distinct shortest intersection paths from start to goal.
pub fn count_shortest_paths(task: &CityTask) -> u64 {
    let Ok(field) = compute_distances(task) else {
        return 0;
    };
    let mut order: Vec<GridPos> = (0..task.grid_height)
        .flat_map(|r| (0..task.grid_width).map(move |c| GridPos::new(r, c)))
        .filter(|&p| field.dist(p).is_some())
        .collect();
    order.sort_by_key(|&p| field.dist(p));
    let mut count = vec![0u64; task.cell_count()];
    for p in order {
        let d = field.dist(p).expect("filtered to reachable");
        count[task.cell_index(p)] = if d == 0 {
            1
        } else {
            Heading::ALL
                .into_iter()
                .filter_map(|h| task.neighbor(p, h))
                .filter(|&q| !task.is_blocked(p, q) && field.dist(q) == Some(d - 1))
                .map(|q| count[task.cell_index(q)])
                .fold(0u64, u64::saturating_add)
        };
    }
    count[task.cell_index(task.start)]
}

/// Directions obtained by following [`optimal_direction`] from the start.
pub fn optimal_route(task: &CityTask, field: &DistanceField) -> Result<Vec<Direction>, PlannerError> {
    let mut car = CarState::at_start(task);
    let mut route = Vec::new();
    while car.pos != task.goal {
        if route.len() > task.cell_count() * 4 {
            return Err(PlannerError::NoProgress { pos: car.pos, heading: car.heading });
        }
        let d = optimal_direction(task, &car, field)?;
        car = crate::world::apply_move(task, &car, d)?;
        route.push(d);
    }
    Ok(route)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{apply_move, generate_task, RoadSegment, WorldConfig};
    use std::collections::BTreeSet;

    fn open_task(goal: GridPos, start: GridPos) -> CityTask {
        CityTask {
            task_id: "open".into(),
            grid_height: 7,
            grid_width: 7,
            roadblocks: BTreeSet::new(),
            start,
            start_heading: Heading::North,
            goal,
            optimal_length: 0,
            seed: None,
        }
    }

    fn car(pos: GridPos, heading: Heading) -> CarState {
        CarState { pos, heading, steps_taken: 0, interactions_used: 0, last_move_blocked: false }
    }

    #[test]
    fn open_grid_is_manhattan() {
        let task = open_task(GridPos::new(0, 0), GridPos::new(6, 6));
        let field = compute_distances(&task).unwrap();
        assert_eq!(field.dist(GridPos::new(3, 4)), Some(7));
        assert_eq!(field.dist(GridPos::new(0, 0)), Some(0));
    }

    #[test]
    fn cut_segment_makes_start_unreachable() {
        let mut task = open_task(GridPos::new(0, 0), GridPos::new(0, 1));
        task.grid_height = 1;
        task.grid_width = 2;
        task.roadblocks.insert(RoadSegment::new(GridPos::new(0, 0), GridPos::new(0, 1)).unwrap());
        assert!(matches!(compute_distances(&task), Err(PlannerError::GoalUnreachable { .. })));
    }

    #[test]
    fn goal_straight_ahead() {
        let task = open_task(GridPos::new(3, 4), GridPos::new(3, 3));
        let field = compute_distances(&task).unwrap();
        let d = optimal_direction(&task, &car(GridPos::new(3, 3), Heading::East), &field).unwrap();
        assert_eq!(d, Direction::Straight);
    }

    #[test]
    fn goal_on_the_left() {
        let task = open_task(GridPos::new(3, 2), GridPos::new(3, 3));
        let field = compute_distances(&task).unwrap();
        let d = optimal_direction(&task, &car(GridPos::new(3, 3), Heading::North), &field).unwrap();
        assert_eq!(d, Direction::Left);
    }

    #[test]
    fn ambiguity_is_reported_and_resolvable() {
        // Goal diagonally ahead-left on an open grid: Left and Straight tie.
        let task = open_task(GridPos::new(2, 2), GridPos::new(3, 3));
        let field = compute_distances(&task).unwrap();
        let c = car(GridPos::new(3, 3), Heading::North);
        assert!(matches!(optimal_direction(&task, &c, &field), Err(PlannerError::Ambiguous { .. })));
        let choice = resolve_optimal(&task, &c, &field).unwrap();
        assert_eq!(choice, OptimalChoice { direction: Direction::Left, tied: true });
    }

    #[test]
    fn blocked_direction_costs_excursion() {
        let mut task = open_task(GridPos::new(0, 3), GridPos::new(3, 3));
        task.roadblocks.insert(RoadSegment::new(GridPos::new(3, 3), GridPos::new(2, 3)).unwrap());
        let field = compute_distances(&task).unwrap();
        let c = car(GridPos::new(3, 3), Heading::North);
        let here = field.drive_dist(c.pos, c.heading).unwrap();
        let costs = field.direction_costs(&task, &c).unwrap();
        assert_eq!(costs[1], (Direction::Straight, Some(here + 2)));
        assert_ne!(resolve_optimal(&task, &c, &field).unwrap().direction, Direction::Straight);
    }

    #[test]
    fn generated_routes_reach_goal_in_optimal_length() {
        for seed in 0..30 {
            let task = generate_task(seed, &WorldConfig::default()).unwrap();
            let field = compute_distances(&task).unwrap();
            let route = optimal_route(&task, &field).unwrap();
            assert_eq!(route.len() as u32, task.optimal_length);
            let mut c = CarState::at_start(&task);
            for d in route {
                assert!(task.blocked_segment(c.pos, c.heading, d).is_none());
                c = apply_move(&task, &c, d).unwrap();
            }
            assert_eq!(c.pos, task.goal);
            assert_eq!(c.steps_taken, task.optimal_length);
        }
    }

    #[test]
    fn open_grid_has_many_shortest_paths() {
        // C(4, 2) = 6 monotone lattice paths on a 2x2 block.
        let task = open_task(GridPos::new(0, 0), GridPos::new(2, 2));
        assert_eq!(count_shortest_paths(&task), 6);
    }
}
