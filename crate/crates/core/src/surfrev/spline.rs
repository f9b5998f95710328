/// Natural cubic spline through `(s_i, f_i)`.
#[derive(Debug, Clone)]
pub(super) struct Spline {
    s: Vec<f64>,
    f: Vec<f64>,
    m: Vec<f64>,
}

impl Spline {
    pub(super) fn natural(s: &[f64], f: &[f64]) -> Self {
        let n = s.len();
        let mut m = vec![0.0; n];
        // Thomas algorithm for the second derivatives, m_0 = m_{n−1} = 0.
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        for i in 1..n - 1 {
            let (h0, h1) = (s[i] - s[i - 1], s[i + 1] - s[i]);
            let rhs = 6.0 * ((f[i + 1] - f[i]) / h1 - (f[i] - f[i - 1]) / h0);
            let diag = 2.0 * (h0 + h1) - h0 * c[i - 1];
            c[i] = h1 / diag;
            d[i] = (rhs - h0 * d[i - 1]) / diag;
        }
        for i in (1..n - 1).rev() {
            m[i] = d[i] - c[i] * m[i + 1];
        }
        Spline { s: s.to_vec(), f: f.to_vec(), m }
    }

    /// Value, first and second derivative; clamps to the end intervals outside the grid.
    pub(super) fn eval(&self, x: f64) -> (f64, f64, f64) {
        let n = self.s.len();
        let i = self.s.partition_point(|&v| v <= x).clamp(1, n - 1) - 1;
        let h = self.s[i + 1] - self.s[i];
        let (a, b) = ((self.s[i + 1] - x) / h, (x - self.s[i]) / h);
        let (m0, m1) = (self.m[i], self.m[i + 1]);
        let val = a * self.f[i] + b * self.f[i + 1] + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0;
        let d1 = (self.f[i + 1] - self.f[i]) / h + ((1.0 - 3.0 * a * a) * m0 + (3.0 * b * b - 1.0) * m1) * h / 6.0;
        let d2 = a * m0 + b * m1;
        (val, d1, d2)
    }
}
