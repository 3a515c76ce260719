//! Piecewise cubic Hermite interpolation on a sorted grid with known slopes.

/// Cubic Hermite interpolant through `(x_i, y_i)` with slopes `dy_i`.
///
/// Outside the grid the end segments are extrapolated.
#[derive(Debug, Clone)]
pub struct Hermite {
    x: Vec<f64>,
    y: Vec<f64>,
    dy: Vec<f64>,
}

impl Hermite {
    /// Panics if the lengths differ, fewer than two nodes are given, or `x`
    /// is not strictly increasing.
    pub fn new(x: Vec<f64>, y: Vec<f64>, dy: Vec<f64>) -> Self {
        assert!(x.len() >= 2 && x.len() == y.len() && x.len() == dy.len());
        assert!(x.windows(2).all(|w| w[1] > w[0]), "grid must be strictly increasing");
        Self { x, y, dy }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.x
    }

    pub fn values(&self) -> &[f64] {
        &self.y
    }

    pub fn slopes(&self) -> &[f64] {
        &self.dy
    }

    fn segment(&self, t: f64) -> usize {
        let i = self.x.partition_point(|&v| v <= t);
        i.clamp(1, self.x.len() - 1) - 1
    }

    pub fn eval(&self, t: f64) -> f64 {
        let i = self.segment(t);
        let h = self.x[i + 1] - self.x[i];
        let u = (t - self.x[i]) / h;
        let u2 = u * u;
        let u3 = u2 * u;
        let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
        let h10 = u3 - 2.0 * u2 + u;
        let h01 = -2.0 * u3 + 3.0 * u2;
        let h11 = u3 - u2;
        h00 * self.y[i] + h10 * h * self.dy[i] + h01 * self.y[i + 1] + h11 * h * self.dy[i + 1]
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let i = self.segment(t);
        let h = self.x[i + 1] - self.x[i];
        let u = (t - self.x[i]) / h;
        let u2 = u * u;
        let d00 = (6.0 * u2 - 6.0 * u) / h;
        let d10 = 3.0 * u2 - 4.0 * u + 1.0;
        let d01 = (-6.0 * u2 + 6.0 * u) / h;
        let d11 = 3.0 * u2 - 2.0 * u;
        d00 * self.y[i] + d10 * self.dy[i] + d01 * self.y[i + 1] + d11 * self.dy[i + 1]
    }
}
