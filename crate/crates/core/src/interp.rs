//! Shape-preserving (PCHIP) cubic interpolation.

/// Piecewise cubic Hermite interpolant with Fritsch–Butland slopes.
///
/// Monotone data gives a monotone interpolant. Outside the knot range the
/// end values are held constant.
#[derive(Debug, Clone)]
pub struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    slope: Vec<f64>,
}

impl MonotoneCubic {
    /// `x` must be strictly increasing and of the same length as `y` (>= 2).
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        assert!(x.len() >= 2 && x.len() == y.len(), "need at least two knots");
        debug_assert!(x.windows(2).all(|w| w[1] > w[0]), "knots must increase");
        let n = x.len();
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
        let mut slope = vec![0.0; n];
        if n == 2 {
            slope[0] = delta[0];
            slope[1] = delta[0];
        } else {
            for k in 1..n - 1 {
                let (d0, d1) = (delta[k - 1], delta[k]);
                if d0 * d1 <= 0.0 {
                    slope[k] = 0.0;
                } else {
                    let w1 = 2.0 * h[k] + h[k - 1];
                    let w2 = h[k] + 2.0 * h[k - 1];
                    slope[k] = (w1 + w2) / (w1 / d0 + w2 / d1);
                }
            }
            slope[0] = end_slope(h[0], h[1], delta[0], delta[1]);
            slope[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        }
        MonotoneCubic { x, y, slope }
    }

    /// Hermite interpolant with caller-supplied slopes, limited
    /// (Fritsch–Carlson) so that monotone data stays monotone.
    pub fn with_slopes(x: Vec<f64>, y: Vec<f64>, mut slope: Vec<f64>) -> Self {
        assert!(x.len() >= 2 && x.len() == y.len() && y.len() == slope.len(), "knot/slope length mismatch");
        for k in 0..x.len() - 1 {
            let delta = (y[k + 1] - y[k]) / (x[k + 1] - x[k]);
            if delta == 0.0 {
                slope[k] = 0.0;
                slope[k + 1] = 0.0;
                continue;
            }
            if slope[k] * delta < 0.0 {
                slope[k] = 0.0;
            }
            if slope[k + 1] * delta < 0.0 {
                slope[k + 1] = 0.0;
            }
            let (a, b) = (slope[k] / delta, slope[k + 1] / delta);
            let r = a * a + b * b;
            if r > 9.0 {
                let t = 3.0 / r.sqrt();
                slope[k] = t * a * delta;
                slope[k + 1] = t * b * delta;
            }
        }
        MonotoneCubic { x, y, slope }
    }

    pub fn knots(&self) -> (&[f64], &[f64]) {
        (&self.x, &self.y)
    }

    fn locate(&self, t: f64) -> usize {
        let k = self.x.partition_point(|&v| v <= t);
        k.clamp(1, self.x.len() - 1) - 1
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        if t <= self.x[0] {
            return self.y[0];
        }
        if t >= self.x[n - 1] {
            return self.y[n - 1];
        }
        let k = self.locate(t);
        let h = self.x[k + 1] - self.x[k];
        let s = (t - self.x[k]) / h;
        let (h10, h01, h11) = (s * (1.0 - s) * (1.0 - s), s * s * (3.0 - 2.0 * s), s * s * (s - 1.0));
        // increment form keeps flat segments exact
        self.y[k] + h01 * (self.y[k + 1] - self.y[k]) + h * (h10 * self.slope[k] + h11 * self.slope[k + 1])
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let n = self.x.len();
        if t < self.x[0] || t > self.x[n - 1] {
            return 0.0;
        }
        let k = self.locate(t);
        let h = self.x[k + 1] - self.x[k];
        let s = (t - self.x[k]) / h;
        let dh00 = 6.0 * s * s - 6.0 * s;
        let dh10 = 3.0 * s * s - 4.0 * s + 1.0;
        let dh01 = -dh00;
        let dh11 = 3.0 * s * s - 2.0 * s;
        (dh00 * self.y[k] + dh01 * self.y[k + 1]) / h + dh10 * self.slope[k] + dh11 * self.slope[k + 1]
    }
}

fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if d * d0 <= 0.0 {
        0.0
    } else if d0 * d1 <= 0.0 && d.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reproduces_knots_and_lines() {
        let c = MonotoneCubic::new(vec![0.0, 1.0, 2.0, 4.0], vec![1.0, 3.0, 5.0, 9.0]);
        assert!((c.eval(1.0) - 3.0).abs() < 1e-15);
        assert!((c.eval(3.0) - 7.0).abs() < 1e-12);
        assert!((c.derivative(2.5) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn exact_slopes_give_fourth_order_accuracy() {
        let x: Vec<f64> = (0..=40).map(|k| k as f64 * 0.1).collect();
        let y: Vec<f64> = x.iter().map(|t| (-t).exp()).collect();
        let s: Vec<f64> = y.iter().map(|v| -v).collect();
        let c = MonotoneCubic::with_slopes(x, y, s);
        for k in 0..400 {
            let t = k as f64 * 0.01 + 0.003;
            assert!((c.eval(t) - (-t).exp()).abs() < 1e-6);
        }
    }

    proptest! {
        #[test]
        fn decreasing_data_gives_decreasing_interpolant(
            steps in proptest::collection::vec(0.0f64..1.0, 3..20),
            gaps in proptest::collection::vec(0.01f64..2.0, 20),
        ) {
            let mut y = vec![10.0];
            for s in &steps { let last = *y.last().unwrap(); y.push(last - s); }
            let mut x = vec![0.0];
            for g in gaps.iter().take(y.len() - 1) { let last = *x.last().unwrap(); x.push(last + g); }
            let c = MonotoneCubic::new(x.clone(), y);
            let (lo, hi) = (x[0], *x.last().unwrap());
            let mut prev = f64::INFINITY;
            for k in 0..=400 {
                let t = lo + (hi - lo) * k as f64 / 400.0;
                let v = c.eval(t);
                prop_assert!(v <= prev + 1e-12);
                prev = v;
            }
        }
    }
}
