//! Uniform-grid trapezoid rule with compensated summation.

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::default();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// Trapezoid weight of node `i` on a grid with `n` intervals, in units of the step.
pub fn weight(i: usize, n: usize) -> f64 {
    if i == 0 || i == n {
        0.5
    } else {
        1.0
    }
}

/// Trapezoid rule for samples on a uniform grid with signed step `step`.
pub fn trapezoid(samples: &[f64], step: f64) -> f64 {
    let n = samples.len().saturating_sub(1);
    if n == 0 {
        return 0.0;
    }
    let acc: CompensatedSum = samples
        .iter()
        .enumerate()
        .map(|(i, &f)| weight(i, n) * f)
        .collect();
    step * acc.value()
}

/// Running trapezoid integral; `out[j]` integrates from the first sample to sample `j`.
pub fn cumulative_trapezoid(samples: &[f64], step: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(samples.len());
    let mut acc = CompensatedSum::default();
    out.push(0.0);
    for pair in samples.windows(2) {
        acc.add(0.5 * step * (pair[0] + pair[1]));
        out.push(acc.value());
    }
    out.truncate(samples.len());
    out
}
