use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

/// Per-class scores ordered by class label. Normalized vectors lie on the
/// probability simplex.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreVector {
    pub values: Vec<f64>,
    pub normalized: bool,
}

impl ScoreVector {
    pub fn normalized(values: Vec<f64>) -> Self {
        Self {
            values,
            normalized: true,
        }
    }

    pub fn raw(values: Vec<f64>) -> Self {
        Self {
            values,
            normalized: false,
        }
    }

    pub fn argmax(&self) -> usize {
        super::argmax(&self.values)
    }
}

/// What a per-stream classifier emits before fusion.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreMode {
    #[default]
    Softmax,
    /// Raw decision values.
    Raw,
}

pub fn softmax(margins: &[f64]) -> Vec<f64> {
    let max = margins.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = margins.iter().map(|m| (m - max).exp()).collect();
    let sum = exact_sum(&exps);
    exps.into_iter().map(|e| e / sum).collect()
}

/// Elementwise mean of the stream scores.
///
/// Each coordinate is the correctly rounded mean of its inputs, so the
/// result does not depend on stream order and averaging copies of one vector
/// returns it unchanged.
pub fn fuse_scores(streams: &[ScoreVector]) -> Result<ScoreVector> {
    let first = streams.first().ok_or_else(|| contract!("cannot fuse an empty list of scores"))?;
    let n = first.values.len();
    if let Some(s) = streams.iter().find(|s| s.values.len() != n) {
        return Err(contract!("score vectors differ in length: {} vs {}", n, s.values.len()));
    }
    if streams.iter().any(|s| s.normalized != first.normalized) {
        return Err(contract!("cannot fuse normalized and raw scores together"));
    }
    let mut column = Vec::with_capacity(streams.len());
    let values = (0..n)
        .map(|c| {
            column.clear();
            column.extend(streams.iter().map(|s| s.values[c]));
            exact_mean(&column)
        })
        .collect();
    Ok(ScoreVector {
        values,
        normalized: first.normalized,
    })
}

/// Non-overlapping partials whose exact sum equals the exact sum of `xs`.
fn partials(xs: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut parts: Vec<f64> = Vec::new();
    for mut x in xs {
        let mut i = 0;
        for j in 0..parts.len() {
            let mut y = parts[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                parts[i] = lo;
                i += 1;
            }
            x = hi;
        }
        parts.truncate(i);
        parts.push(x);
    }
    parts
}

/// Correctly rounded value of a partials expansion.
fn round_partials(parts: &[f64]) -> f64 {
    let mut n = parts.len();
    if n == 0 {
        return 0.0;
    }
    n -= 1;
    let mut hi = parts[n];
    let mut lo = 0.0;
    while n > 0 {
        let x = hi;
        n -= 1;
        let y = parts[n];
        hi = x + y;
        let yr = hi - x;
        lo = y - yr;
        if lo != 0.0 {
            break;
        }
    }
    // half-way case: nudge towards the remaining partials' sign
    if n > 0 && ((lo < 0.0 && parts[n - 1] < 0.0) || (lo > 0.0 && parts[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        if y == x - hi {
            hi = x;
        }
    }
    hi
}

/// Correctly rounded sum.
pub fn exact_sum(xs: &[f64]) -> f64 {
    round_partials(&partials(xs.iter().copied()))
}

/// Mean of `xs` rounded to the nearest double. An exact tie between two
/// doubles goes to the one with the shorter shortest-round-trip decimal
/// form (so the mean of 0.2 and 0.4 is 0.3), then towards zero.
pub fn exact_mean(xs: &[f64]) -> f64 {
    let sum = partials(xs.iter().copied());
    let n = xs.len() as f64;
    let guess = round_partials(&sum) / n;
    if !guess.is_finite() {
        // overflowing sums: scale first and give up exactness
        return xs.iter().map(|x| x / n).sum();
    }
    let product = |c: f64| {
        let p = c * n;
        [-p, -c.mul_add(n, -p)]
    };
    // sign of S - c*n, computed exactly
    let side = |c: f64| round_partials(&partials(sum.iter().copied().chain(product(c))));
    let mut a = guess;
    while side(a) < 0.0 {
        a = a.next_down();
    }
    let mut b = a.next_up();
    while side(b) > 0.0 {
        a = b;
        b = a.next_up();
    }
    if side(a) == 0.0 {
        return a;
    }
    if side(b) == 0.0 {
        return b;
    }
    // compare with the midpoint: sign of 2S - a*n - b*n
    let mid = round_partials(&partials(
        sum.iter().map(|s| 2.0 * s).chain(product(a)).chain(product(b)),
    ));
    if mid > 0.0 {
        return b;
    }
    if mid < 0.0 {
        return a;
    }
    let (la, lb) = (a.to_string().len(), b.to_string().len());
    if la < lb || (la == lb && a.abs() <= b.abs()) {
        a
    } else {
        b
    }
}
