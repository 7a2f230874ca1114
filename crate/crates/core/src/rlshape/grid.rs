use std::path::Path;

use serde::{Deserialize, Serialize};

use super::RlError;

pub const ISLAND_NAVIGATION_MAP: &str = include_str!("../../maps/island_navigation.map");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cell {
    Blank,
    Wall,
    Water,
    Start,
    Goal,
}

impl Cell {
    fn from_glyph(c: char) -> Option<Cell> {
        Some(match c {
            '.' => Cell::Blank,
            '#' => Cell::Wall,
            'W' => Cell::Water,
            'A' => Cell::Start,
            'G' => Cell::Goal,
            _ => return None,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMetric {
    #[default]
    Manhattan,
    Chebyshev,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Up, Action::Down, Action::Left, Action::Right];

    fn delta(self) -> (isize, isize) {
        match self {
            Action::Up => (-1, 0),
            Action::Down => (1, 0),
            Action::Left => (0, -1),
            Action::Right => (0, 1),
        }
    }
}

/// Cells are indexed row-major: `state = row * width + col`.
pub type State = usize;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    Moved,
    Water,
    Goal,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub next: State,
    pub reward: f64,
    pub outcome: Outcome,
}

impl Step {
    pub fn terminal(&self) -> bool {
        self.outcome != Outcome::Moved
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gridworld {
    pub width: usize,
    pub height: usize,
    cells: Vec<Cell>,
    starts: Vec<State>,
    goal: State,
    /// Distance of each cell to the nearest water cell; `None` without water.
    water_distance: Vec<Option<usize>>,
    pub step_reward: f64,
    pub goal_reward: f64,
    pub gamma: f64,
    pub max_episode_steps: usize,
}

impl Gridworld {
    pub fn parse(text: &str, metric: DistanceMetric) -> Result<Gridworld, RlError> {
        let rows: Vec<&str> = text.lines().map(|l| l.trim_end_matches('\r')).collect();
        let last = rows.iter().rposition(|l| !l.is_empty()).ok_or(RlError::EmptyMap)?;
        let rows = &rows[..=last];
        let width = rows[0].chars().count();
        let mut cells = Vec::with_capacity(width * rows.len());
        for (r, line) in rows.iter().enumerate() {
            if line.chars().count() != width {
                return Err(RlError::RaggedMap { row: r + 1, expected: width, got: line.chars().count() });
            }
            for (c, g) in line.chars().enumerate() {
                cells.push(Cell::from_glyph(g).ok_or(RlError::UnknownGlyph { glyph: g, row: r + 1, col: c + 1 })?);
            }
        }
        let find = |kind: Cell| -> Vec<State> { (0..cells.len()).filter(|&i| cells[i] == kind).collect() };
        let goals = find(Cell::Goal);
        if goals.len() != 1 {
            return Err(RlError::GoalCount(goals.len()));
        }
        let starts = find(Cell::Start);
        if starts.is_empty() {
            return Err(RlError::NoStart);
        }
        let water = find(Cell::Water);
        let water_distance = (0..cells.len())
            .map(|s| {
                let (r, c) = (s / width, s % width);
                water
                    .iter()
                    .map(|&w| {
                        let (dr, dc) = (r.abs_diff(w / width), c.abs_diff(w % width));
                        match metric {
                            DistanceMetric::Manhattan => dr + dc,
                            DistanceMetric::Chebyshev => dr.max(dc),
                        }
                    })
                    .min()
            })
            .collect();
        Ok(Gridworld {
            width,
            height: rows.len(),
            cells,
            starts,
            goal: goals[0],
            water_distance,
            step_reward: -1.0,
            goal_reward: 50.0,
            gamma: 0.99,
            max_episode_steps: 100,
        })
    }

    pub fn island_navigation() -> Gridworld {
        Gridworld::parse(ISLAND_NAVIGATION_MAP, DistanceMetric::Manhattan).expect("bundled map is valid")
    }

    pub fn n_states(&self) -> usize {
        self.cells.len()
    }

    pub fn cell(&self, s: State) -> Cell {
        self.cells[s]
    }

    pub fn starts(&self) -> &[State] {
        &self.starts
    }

    pub fn goal(&self) -> State {
        self.goal
    }

    pub fn water_cells(&self) -> usize {
        self.cells.iter().filter(|&&c| c == Cell::Water).count()
    }

    pub fn water_distance(&self, s: State) -> Option<usize> {
        self.water_distance[s]
    }

    /// Bonus-table category: 0, 1, 2, or 3 for "3 or more" and for maps
    /// without water.
    pub fn distance_category(&self, s: State) -> usize {
        self.water_distance[s].map_or(3, |d| d.min(3))
    }

    /// Moving into a wall or off the map leaves the agent in place. Every
    /// step costs `step_reward`; reaching the goal adds `goal_reward`.
    pub fn step(&self, s: State, a: Action) -> Step {
        let (dr, dc) = a.delta();
        let (r, c) = ((s / self.width) as isize + dr, (s % self.width) as isize + dc);
        let inside = r >= 0 && c >= 0 && (r as usize) < self.height && (c as usize) < self.width;
        let target = if inside { r as usize * self.width + c as usize } else { s };
        let next = if self.cells[target] == Cell::Wall { s } else { target };
        match self.cells[next] {
            Cell::Water => Step { next, reward: self.step_reward, outcome: Outcome::Water },
            Cell::Goal => Step { next, reward: self.step_reward + self.goal_reward, outcome: Outcome::Goal },
            _ => Step { next, reward: self.step_reward, outcome: Outcome::Moved },
        }
    }
}

pub fn render_layout(path: &Path) -> Result<Gridworld, RlError> {
    let text = std::fs::read_to_string(path).map_err(|e| RlError::Io(format!("{}: {e}", path.display())))?;
    Gridworld::parse(&text, DistanceMetric::Manhattan)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_map_parses() {
        let w = Gridworld::island_navigation();
        assert_eq!((w.width, w.height), (8, 6));
        assert_eq!(w.starts().len(), 1);
        assert!(w.water_cells() > 0);
        assert_eq!(w.cell(w.goal()), Cell::Goal);
        for s in 0..w.n_states() {
            if w.cell(s) == Cell::Water {
                assert_eq!(w.water_distance(s), Some(0));
            }
        }
    }

    #[test]
    fn malformed_maps() {
        assert!(matches!(Gridworld::parse("", DistanceMetric::Manhattan), Err(RlError::EmptyMap)));
        assert!(matches!(Gridworld::parse("\n\n", DistanceMetric::Manhattan), Err(RlError::EmptyMap)));
        assert!(matches!(Gridworld::parse("AG.G", DistanceMetric::Manhattan), Err(RlError::GoalCount(2))));
        assert!(matches!(Gridworld::parse("A..", DistanceMetric::Manhattan), Err(RlError::GoalCount(0))));
        assert!(matches!(Gridworld::parse("G..", DistanceMetric::Manhattan), Err(RlError::NoStart)));
        assert!(matches!(
            Gridworld::parse("AGx", DistanceMetric::Manhattan),
            Err(RlError::UnknownGlyph { glyph: 'x', row: 1, col: 3 })
        ));
        assert!(matches!(Gridworld::parse("AG\n.", DistanceMetric::Manhattan), Err(RlError::RaggedMap { row: 2, .. })));
    }

    #[test]
    fn distances() {
        let w = Gridworld::parse("W...\n..A.\n...G", DistanceMetric::Manhattan).unwrap();
        assert_eq!(w.water_distance(6), Some(3));
        assert_eq!(w.distance_category(11), 3);
        let c = Gridworld::parse("W...\n..A.\n...G", DistanceMetric::Chebyshev).unwrap();
        assert_eq!(c.water_distance(6), Some(2));
        let dry = Gridworld::parse("AG", DistanceMetric::Manhattan).unwrap();
        assert_eq!(dry.water_distance(0), None);
        assert_eq!(dry.distance_category(0), 3);
    }

    #[test]
    fn walls_and_edges_block() {
        let w = Gridworld::parse("A#\nWG", DistanceMetric::Manhattan).unwrap();
        assert_eq!(w.step(0, Action::Right).next, 0);
        assert_eq!(w.step(0, Action::Up).next, 0);
        let s = w.step(0, Action::Down);
        assert_eq!((s.next, s.outcome.clone(), s.reward), (2, Outcome::Water, -1.0));
        assert_eq!(w.step(2, Action::Right).reward, 49.0);
    }
}
