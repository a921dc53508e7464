use serde::{Deserialize, Serialize};

/// `x = R_k (x_hat - c_ref) + c_glob` with `R_k` a counter-clockwise
/// rotation by `k` quarter turns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotoTranslation {
    pub quarter_turns: u8,
    pub center_ref: [f64; 2],
    pub center_glob: [f64; 2],
}

impl Default for RotoTranslation {
    fn default() -> Self {
        Self::identity()
    }
}

impl RotoTranslation {
    pub fn identity() -> Self {
        Self {
            quarter_turns: 0,
            center_ref: [0.0; 2],
            center_glob: [0.0; 2],
        }
    }

    pub fn new(quarter_turns: u8, center_ref: [f64; 2], center_glob: [f64; 2]) -> Self {
        Self {
            quarter_turns: quarter_turns % 4,
            center_ref,
            center_glob,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.quarter_turns == 0 && self.center_ref == self.center_glob
    }

    /// `R v`
    pub fn rotate(&self, v: [f64; 2]) -> [f64; 2] {
        match self.quarter_turns {
            0 => v,
            1 => [-v[1], v[0]],
            2 => [-v[0], -v[1]],
            _ => [v[1], -v[0]],
        }
    }

    /// `R^T v`
    pub fn rotate_back(&self, v: [f64; 2]) -> [f64; 2] {
        match self.quarter_turns {
            0 => v,
            1 => [v[1], -v[0]],
            2 => [-v[0], -v[1]],
            _ => [-v[1], v[0]],
        }
    }

    pub fn apply(&self, x: [f64; 2]) -> [f64; 2] {
        let r = self.rotate([x[0] - self.center_ref[0], x[1] - self.center_ref[1]]);
        [r[0] + self.center_glob[0], r[1] + self.center_glob[1]]
    }

    pub fn inverse_apply(&self, x: [f64; 2]) -> [f64; 2] {
        let r = self.rotate_back([x[0] - self.center_glob[0], x[1] - self.center_glob[1]]);
        [r[0] + self.center_ref[0], r[1] + self.center_ref[1]]
    }

    /// `R^T D R` for a 2x2 matrix `D`.
    pub fn pull_back_tensor(&self, d: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
        let c0 = self.rotate_back(self.mat_col(d, self.rotate([1.0, 0.0])));
        let c1 = self.rotate_back(self.mat_col(d, self.rotate([0.0, 1.0])));
        [[c0[0], c1[0]], [c0[1], c1[1]]]
    }

    fn mat_col(&self, d: [[f64; 2]; 2], v: [f64; 2]) -> [f64; 2] {
        [d[0][0] * v[0] + d[0][1] * v[1], d[1][0] * v[0] + d[1][1] * v[1]]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_rotation() {
        for k in 0..4 {
            let m = RotoTranslation::new(k, [0.05, 0.05], [0.35, 0.15]);
            let x = [0.01, 0.07];
            let y = m.inverse_apply(m.apply(x));
            assert!((x[0] - y[0]).abs() < 1e-15 && (x[1] - y[1]).abs() < 1e-15);
            let v = m.rotate_back(m.rotate([0.3, -0.2]));
            assert!((v[0] - 0.3).abs() < 1e-15 && (v[1] + 0.2).abs() < 1e-15);
        }
        let m = RotoTranslation::new(1, [0.0; 2], [0.0; 2]);
        assert_eq!(m.rotate([-1.0, 0.0]), [0.0, -1.0]);
    }

    #[test]
    fn tensor_pull_back() {
        let m = RotoTranslation::new(1, [0.0; 2], [0.0; 2]);
        let d = [[2.0, 0.5], [0.1, 3.0]];
        let t = m.pull_back_tensor(d);
        // R = [[0,-1],[1,0]]; R^T D R
        let expect = [[3.0, -0.1], [-0.5, 2.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((t[i][j] - expect[i][j]).abs() < 1e-15);
            }
        }
    }
}
