//! The `(t, y, z)` grid.

use super::HjbError;

/// Uniform tensor grid on `[0, T] × [y_lo, y_hi] × [z_lo, z_hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid3 {
    pub horizon: f64,
    /// Number of time steps `K`; there are `K + 1` time nodes.
    pub steps: usize,
    pub y_lo: f64,
    pub y_hi: f64,
    pub y_nodes: usize,
    pub z_lo: f64,
    pub z_hi: f64,
    pub z_nodes: usize,
}

impl Grid3 {
    pub fn new(
        horizon: f64,
        steps: usize,
        (y_lo, y_hi): (f64, f64),
        y_nodes: usize,
        (z_lo, z_hi): (f64, f64),
        z_nodes: usize,
    ) -> Result<Self, HjbError> {
        let bad = |what: &str| Err(HjbError::BadGrid(what.to_string()));
        if !(horizon > 0.0) || steps == 0 {
            return bad("need a positive horizon and at least one time step");
        }
        if !(y_hi > y_lo) || y_nodes < 3 {
            return bad("y-range must be nonempty with at least 3 nodes");
        }
        if !(z_hi > z_lo) || z_nodes < 3 {
            return bad("z-range must be nonempty with at least 3 nodes");
        }
        Ok(Grid3 {
            horizon,
            steps,
            y_lo,
            y_hi,
            y_nodes,
            z_lo,
            z_hi,
            z_nodes,
        })
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn dy(&self) -> f64 {
        (self.y_hi - self.y_lo) / (self.y_nodes - 1) as f64
    }

    pub fn dz(&self) -> f64 {
        (self.z_hi - self.z_lo) / (self.z_nodes - 1) as f64
    }

    pub fn t(&self, k: usize) -> f64 {
        if k == self.steps {
            self.horizon
        } else {
            self.dt() * k as f64
        }
    }

    pub fn y(&self, i: usize) -> f64 {
        if i == self.y_nodes - 1 {
            self.y_hi
        } else {
            self.y_lo + self.dy() * i as f64
        }
    }

    pub fn z(&self, j: usize) -> f64 {
        if j == self.z_nodes - 1 {
            self.z_hi
        } else {
            self.z_lo + self.dz() * j as f64
        }
    }

    pub fn ys(&self) -> Vec<f64> {
        (0..self.y_nodes).map(|i| self.y(i)).collect()
    }

    pub fn zs(&self) -> Vec<f64> {
        (0..self.z_nodes).map(|j| self.z(j)).collect()
    }

    /// Nodes per time slice.
    pub fn slice_len(&self) -> usize {
        self.y_nodes * self.z_nodes
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * self.z_nodes + j
    }

    /// Index of the node at or below `y` (clamped into range) and the
    /// fractional offset towards the next node.
    pub fn locate_y(&self, y: f64) -> (usize, f64) {
        locate(y, self.y_lo, self.dy(), self.y_nodes)
    }

    pub fn locate_z(&self, z: f64) -> (usize, f64) {
        locate(z, self.z_lo, self.dz(), self.z_nodes)
    }

    pub fn locate_t(&self, t: f64) -> (usize, f64) {
        locate(t, 0.0, self.dt(), self.steps + 1)
    }

    pub fn contains(&self, t: f64, y: f64, z: f64) -> bool {
        let eps = 1e-12;
        (-eps..=self.horizon * (1.0 + eps)).contains(&t)
            && (self.y_lo - eps..=self.y_hi + eps).contains(&y)
            && (self.z_lo - eps..=self.z_hi + eps).contains(&z)
    }
}

fn locate(x: f64, lo: f64, h: f64, nodes: usize) -> (usize, f64) {
    let u = ((x - lo) / h).max(0.0);
    let i = (u.floor() as usize).min(nodes - 2);
    (i, (u - i as f64).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_and_endpoints() {
        let g = Grid3::new(1.0, 4, (-1.0, 1.0), 5, (0.0, 4.0), 81).unwrap();
        assert_eq!(g.dt(), 0.25);
        assert_eq!(g.dy(), 0.5);
        assert_eq!(g.dz(), 0.05);
        assert_eq!(g.z(80), 4.0);
        assert_eq!(g.t(4), 1.0);
        assert_eq!(g.locate_y(1.0), (3, 1.0));
        assert_eq!(g.locate_y(-0.25), (1, 0.5));
    }

    #[test]
    fn rejects_degenerate_ranges() {
        assert!(Grid3::new(1.0, 4, (1.0, 1.0), 5, (0.0, 1.0), 5).is_err());
        assert!(Grid3::new(1.0, 0, (0.0, 1.0), 5, (0.0, 1.0), 5).is_err());
        assert!(Grid3::new(1.0, 4, (0.0, 1.0), 5, (0.0, 1.0), 2).is_err());
    }
}
