use crate::linalg::Vector;
use crate::signal::{GridSignal, TimeGrid};

/// Uniformly sampled solution columns: state, co-state, input, output and
/// Hamiltonian output.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub x: Vec<Vector>,
    pub p: Vec<Vector>,
    pub u: Vec<Vector>,
    pub y: Vec<Vector>,
    pub yplus: Vec<Vector>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.grid.times()
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn input(&self) -> GridSignal {
        GridSignal {
            grid: self.grid,
            values: self.u.clone(),
        }
    }

    pub fn state(&self) -> GridSignal {
        GridSignal {
            grid: self.grid,
            values: self.x.clone(),
        }
    }

    pub fn output(&self) -> GridSignal {
        GridSignal {
            grid: self.grid,
            values: self.y.clone(),
        }
    }
}
