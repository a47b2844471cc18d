//! Adaptive Gauss–Kronrod (7/15) quadrature and Wynn's ε-algorithm.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

/// Gauss weights for the nodes `XGK[1], XGK[3], XGK[5], XGK[7]`.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

/// One 15-point Kronrod panel; the error is `|K15 − G7|`.
pub fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error).then(other.a.total_cmp(&self.a))
    }
}

/// Integrates over `[breaks[0], breaks[last]]`, starting from the given panel
/// boundaries and bisecting the worst panel until the summed error estimate
/// is below `tol` or `max_panels` is reached.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, breaks: &[f64], tol: f64, max_panels: usize) -> Estimate {
    let mut heap = BinaryHeap::new();
    let mut evaluations = 0;
    let mut total_err = 0.0;
    for w in breaks.windows(2) {
        let (value, error) = gk15(&mut f, w[0], w[1]);
        evaluations += 15;
        total_err += error;
        heap.push(Panel { a: w[0], b: w[1], value, error });
    }
    while total_err > tol && heap.len() < max_panels {
        let worst = heap.pop().expect("nonempty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            heap.push(worst);
            break;
        }
        let (v1, e1) = gk15(&mut f, worst.a, mid);
        let (v2, e2) = gk15(&mut f, mid, worst.b);
        evaluations += 30;
        total_err += e1 + e2 - worst.error;
        heap.push(Panel { a: worst.a, b: mid, value: v1, error: e1 });
        heap.push(Panel { a: mid, b: worst.b, value: v2, error: e2 });
    }
    let mut panels = heap.into_vec();
    panels.sort_by(|p, q| p.a.total_cmp(&q.a));
    let value = panels.iter().map(|p| p.value).sum();
    let error = panels.iter().map(|p| p.error).sum();
    Estimate { value, error, evaluations }
}

/// Wynn's ε-algorithm over the partial sums `s`.
///
/// Returns the highest-order even-column estimate and the change from the
/// previous diagonal as an error proxy.
pub fn wynn_epsilon(s: &[f64]) -> (f64, f64) {
    let n = s.len();
    if n == 0 {
        return (0.0, f64::INFINITY);
    }
    if n < 3 {
        let e = if n == 2 { (s[1] - s[0]).abs() } else { f64::INFINITY };
        return (s[n - 1], e);
    }
    // prev = column k−1, cur = column k; column −1 is zeros
    let mut prev = vec![0.0; n + 1];
    let mut cur: Vec<f64> = s.to_vec();
    let mut best = s[n - 1];
    let mut best_prev = s[n - 2];
    let mut k = 0;
    while cur.len() > 1 {
        let mut next = Vec::with_capacity(cur.len() - 1);
        for i in 0..cur.len() - 1 {
            let diff = cur[i + 1] - cur[i];
            if diff == 0.0 {
                return (cur[i + 1], (best - cur[i + 1]).abs());
            }
            next.push(prev[i + 1] + 1.0 / diff);
        }
        k += 1;
        prev = cur;
        cur = next;
        if k % 2 == 0 && !cur.is_empty() {
            let m = cur.len();
            let last = cur[m - 1];
            if !last.is_finite() {
                break;
            }
            best_prev = if m >= 2 { cur[m - 2] } else { best };
            best = last;
        }
    }
    (best, (best - best_prev).abs())
}
