//! Node placement, radio range and mobility.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn distance(&self, o: &Position) -> f64 {
        ((self.x - o.x).powi(2) + (self.y - o.y).powi(2)).sqrt()
    }
}

/// Initial placement of the nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layout {
    /// Row-major grid with `ceil(sqrt(n))` columns.
    Grid { spacing: f64 },
    /// Uniform placement inside a `width` by `height` area.
    Random { width: f64, height: f64 },
    Explicit { positions: Vec<Position> },
}

impl Default for Layout {
    fn default() -> Self {
        Layout::Grid { spacing: 3.0 }
    }
}

impl Layout {
    pub fn place(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<Position> {
        match self {
            Layout::Grid { spacing } => {
                let cols = (n as f64).sqrt().ceil().max(1.0) as usize;
                (0..n)
                    .map(|i| Position {
                        x: (i % cols) as f64 * spacing,
                        y: (i / cols) as f64 * spacing,
                    })
                    .collect()
            }
            Layout::Random { width, height } => (0..n)
                .map(|_| Position {
                    x: rng.random_range(0.0..=*width),
                    y: rng.random_range(0.0..=*height),
                })
                .collect(),
            Layout::Explicit { positions } => {
                let mut p = positions.clone();
                p.resize(n, Position::default());
                p
            }
        }
    }
}

/// Random waypoint movement inside a rectangular room.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomWaypoint {
    pub width: f64,
    pub height: f64,
    /// Meters per second.
    pub speed: f64,
    /// Simulated milliseconds between position updates.
    pub step: u64,
}

impl Default for RandomWaypoint {
    fn default() -> Self {
        RandomWaypoint {
            width: 30.0,
            height: 30.0,
            speed: 1.0,
            step: 100,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MobilityState {
    pub model: RandomWaypoint,
    targets: Vec<Position>,
}

impl MobilityState {
    pub fn new(model: RandomWaypoint, n: usize, rng: &mut ChaCha8Rng) -> Self {
        let targets = (0..n).map(|_| Self::waypoint(&model, rng)).collect();
        MobilityState { model, targets }
    }

    fn waypoint(m: &RandomWaypoint, rng: &mut ChaCha8Rng) -> Position {
        Position {
            x: rng.random_range(0.0..=m.width),
            y: rng.random_range(0.0..=m.height),
        }
    }

    /// Advances every node by one step toward its waypoint, picking a new
    /// waypoint on arrival.
    pub fn step(&mut self, positions: &mut [Position], rng: &mut ChaCha8Rng) {
        let reach = self.model.speed * self.model.step as f64 / 1000.0;
        for (p, t) in positions.iter_mut().zip(self.targets.iter_mut()) {
            let d = p.distance(t);
            if d <= reach {
                *p = *t;
                *t = Self::waypoint(&self.model, rng);
            } else {
                p.x += (t.x - p.x) * reach / d;
                p.y += (t.y - p.y) * reach / d;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn grid_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = Layout::Grid { spacing: 2.0 }.place(5, &mut rng);
        // 3 columns
        assert_eq!(p[2], Position { x: 4.0, y: 0.0 });
        assert_eq!(p[3], Position { x: 0.0, y: 2.0 });
    }

    #[test]
    fn waypoint_stays_in_room_and_moves_at_speed() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = RandomWaypoint::default();
        let mut pos = Layout::Random { width: 30.0, height: 30.0 }.place(10, &mut rng);
        let mut m = MobilityState::new(model, 10, &mut rng);
        for _ in 0..1000 {
            let before = pos.clone();
            m.step(&mut pos, &mut rng);
            for (a, b) in before.iter().zip(&pos) {
                assert!(a.distance(b) <= 0.1 + 1e-9);
                assert!((0.0..=30.0).contains(&b.x) && (0.0..=30.0).contains(&b.y));
            }
        }
    }
}
