use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::grid::{Action, Cell, Gridworld, Outcome, State};
use super::{shaping_term, RlError, Shaping};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QParams {
    pub alpha: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of the step budget over which epsilon decays linearly.
    pub anneal_fraction: f64,
}

impl Default for QParams {
    fn default() -> Self {
        QParams { alpha: 0.1, epsilon_start: 1.0, epsilon_end: 0.05, anneal_fraction: 0.5 }
    }
}

impl QParams {
    pub fn epsilon(&self, step: usize, total: usize) -> f64 {
        let horizon = (total as f64 * self.anneal_fraction).max(1.0);
        let f = (step as f64 / horizon).min(1.0);
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * f
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingStats {
    pub seed: u64,
    pub shaped: bool,
    /// Completed episodes (goal, water, or step limit).
    pub episodes: usize,
    pub total_safety_violations: usize,
    /// Unshaped environment return of each completed episode.
    pub returns: Vec<f64>,
}

impl TrainingStats {
    pub fn mean_return_last(&self, n: usize) -> f64 {
        let tail = &self.returns[self.returns.len().saturating_sub(n)..];
        if tail.is_empty() {
            0.0
        } else {
            tail.iter().sum::<f64>() / tail.len() as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QTable {
    values: Vec<[f64; 4]>,
}

impl QTable {
    fn new(n_states: usize) -> Self {
        QTable { values: vec![[0.0; 4]; n_states] }
    }

    pub fn get(&self, s: State) -> &[f64; 4] {
        &self.values[s]
    }

    fn max(&self, s: State) -> f64 {
        self.values[s].iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// First maximizing action in `Action::ALL` order.
    pub fn greedy(&self, s: State) -> Action {
        let m = self.max(s);
        Action::ALL[self.values[s].iter().position(|&v| v == m).unwrap_or(0)]
    }

    fn greedy_random_tie<R: Rng>(&self, s: State, rng: &mut R) -> Action {
        let m = self.max(s);
        let ties: Vec<usize> = (0..4).filter(|&i| self.values[s][i] == m).collect();
        Action::ALL[ties[rng.gen_range(0..ties.len())]]
    }
}

#[derive(Clone, Debug)]
pub struct TrainingRun {
    pub stats: TrainingStats,
    pub q: QTable,
}

impl TrainingRun {
    /// Steps the greedy policy needs to reach the goal from `start` without
    /// entering water, if it does so within the episode limit.
    pub fn greedy_path_len(&self, world: &Gridworld, start: State) -> Option<usize> {
        let mut s = start;
        for t in 1..=world.max_episode_steps {
            let step = world.step(s, self.q.greedy(s));
            match step.outcome {
                Outcome::Goal => return Some(t),
                Outcome::Water => return None,
                Outcome::Moved => s = step.next,
            }
        }
        None
    }

    pub fn reaches_goal(&self, world: &Gridworld) -> bool {
        world.starts().iter().all(|&s| self.greedy_path_len(world, s).is_some())
    }
}

/// Fewest steps from `start` to the goal avoiding water and walls.
pub fn shortest_path_len(world: &Gridworld, start: State) -> Option<usize> {
    let mut dist = vec![usize::MAX; world.n_states()];
    let mut queue = VecDeque::from([start]);
    dist[start] = 0;
    while let Some(s) = queue.pop_front() {
        if s == world.goal() {
            return Some(dist[s]);
        }
        for a in Action::ALL {
            let next = world.step(s, a).next;
            if world.cell(next) != Cell::Water && dist[next] == usize::MAX {
                dist[next] = dist[s] + 1;
                queue.push_back(next);
            }
        }
    }
    None
}

/// Epsilon-greedy tabular Q-learning for `steps` environment steps. The
/// update target uses the shaped reward when `shaping` is set; recorded
/// returns and violations always refer to the environment itself. Water
/// and goal end the episode, as does `max_episode_steps` (bootstrapped,
/// not terminal).
pub fn train_q_learning(
    world: &Gridworld,
    shaping: Option<&Shaping>,
    steps: usize,
    seed: u64,
    params: &QParams,
) -> Result<TrainingRun, RlError> {
    if steps == 0 {
        return Err(RlError::InvalidParam("steps must be at least 1".into()));
    }
    if !(params.alpha > 0.0 && params.alpha <= 1.0) {
        return Err(RlError::InvalidParam(format!("alpha {} outside (0, 1]", params.alpha)));
    }
    if !(world.gamma > 0.0 && world.gamma <= 1.0) {
        return Err(RlError::InvalidParam(format!("gamma {} outside (0, 1]", world.gamma)));
    }
    let mut rng = seed::rng(seed);
    let mut q = QTable::new(world.n_states());
    let starts = world.starts();
    let mut stats = TrainingStats {
        seed,
        shaped: shaping.is_some(),
        episodes: 0,
        total_safety_violations: 0,
        returns: Vec::new(),
    };

    let mut s = starts[rng.gen_range(0..starts.len())];
    let (mut ep_return, mut ep_len) = (0.0, 0);
    for t in 0..steps {
        let a = if rng.gen::<f64>() < params.epsilon(t, steps) {
            Action::ALL[rng.gen_range(0..4)]
        } else {
            q.greedy_random_tie(s, &mut rng)
        };
        let step = world.step(s, a);
        let reward = step.reward + shaping.map_or(0.0, |sh| shaping_term(world, s, step.next, sh));
        let target = if step.terminal() { reward } else { reward + world.gamma * q.max(step.next) };
        let qa = &mut q.values[s][a as usize];
        *qa += params.alpha * (target - *qa);

        if step.outcome == Outcome::Water {
            stats.total_safety_violations += 1;
        }
        ep_return += step.reward;
        ep_len += 1;
        if step.terminal() || ep_len == world.max_episode_steps {
            stats.episodes += 1;
            stats.returns.push(ep_return);
            (ep_return, ep_len) = (0.0, 0);
            s = starts[rng.gen_range(0..starts.len())];
        } else {
            s = step.next;
        }
    }
    Ok(TrainingRun { stats, q })
}
