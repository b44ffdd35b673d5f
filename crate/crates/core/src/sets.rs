//! Compact box-shaped descriptors for the flow and jump sets over `r`.

use serde::{Deserialize, Serialize};

use crate::{Result, ShdsError};

/// A compact subset of `R^p` built from closed boxes.
///
/// Membership is exact: no tolerance is applied, so a timer must land on a
/// singleton jump set bit-exactly to be inside it. The solver's event
/// detection snaps the state onto the set when it crosses into it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SetDescriptor {
    /// Product of closed intervals `[lo_i, hi_i]`.
    Box { bounds: Vec<[f64; 2]> },
    /// A single point.
    Singleton { point: Vec<f64> },
    /// Finite union of closed boxes of equal dimension.
    Union { boxes: Vec<Vec<[f64; 2]>> },
}

impl SetDescriptor {
    pub fn interval(lo: f64, hi: f64) -> Self {
        SetDescriptor::Box {
            bounds: vec![[lo, hi]],
        }
    }

    pub fn point(value: f64) -> Self {
        SetDescriptor::Singleton { point: vec![value] }
    }

    pub fn dim(&self) -> usize {
        match self {
            SetDescriptor::Box { bounds } => bounds.len(),
            SetDescriptor::Singleton { point } => point.len(),
            SetDescriptor::Union { boxes } => boxes.first().map_or(0, Vec::len),
        }
    }

    /// The set as a list of (possibly degenerate) boxes.
    pub fn boxes(&self) -> Vec<Vec<[f64; 2]>> {
        match self {
            SetDescriptor::Box { bounds } => vec![bounds.clone()],
            SetDescriptor::Singleton { point } => vec![point.iter().map(|&c| [c, c]).collect()],
            SetDescriptor::Union { boxes } => boxes.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let boxes = self.boxes();
        if boxes.is_empty() {
            return Err(ShdsError::InvalidParameter("empty set union".into()));
        }
        let dim = boxes[0].len();
        for b in &boxes {
            if b.len() != dim {
                return Err(ShdsError::DimensionMismatch {
                    what: "set union member".into(),
                    expected: dim,
                    got: b.len(),
                });
            }
            for &[lo, hi] in b {
                if !lo.is_finite() || !hi.is_finite() {
                    return Err(ShdsError::InvalidParameter(
                        "set bounds must be finite (sets are compact)".into(),
                    ));
                }
                if lo > hi {
                    return Err(ShdsError::InvalidParameter(format!(
                        "empty interval [{lo}, {hi}]"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, r: &[f64]) -> bool {
        match self {
            SetDescriptor::Box { bounds } => box_contains(bounds, r),
            SetDescriptor::Singleton { point } => {
                point.len() == r.len() && point.iter().zip(r).all(|(a, b)| a == b)
            }
            SetDescriptor::Union { boxes } => boxes.iter().any(|b| box_contains(b, r)),
        }
    }

    /// Euclidean distance from `r` to the set.
    pub fn distance(&self, r: &[f64]) -> f64 {
        self.boxes()
            .iter()
            .map(|b| box_distance(b, r))
            .fold(f64::INFINITY, f64::min)
    }

    /// Projects `r` onto box `index` of [`SetDescriptor::boxes`].
    pub fn clamp_into(&self, index: usize, r: &mut [f64]) {
        let boxes = self.boxes();
        for (ri, &[lo, hi]) in r.iter_mut().zip(&boxes[index]) {
            *ri = ri.clamp(lo, hi);
        }
    }

    /// Earliest `s` in `[0, dt]` at which `r + s * rate` enters the set,
    /// together with the index of the box that is entered first.
    ///
    /// Exact for affine motion, which is the case for timers.
    pub fn entry_time(&self, r: &[f64], rate: &[f64], dt: f64) -> Option<(f64, usize)> {
        let mut best: Option<(f64, usize)> = None;
        for (k, b) in self.boxes().iter().enumerate() {
            if let Some(s) = box_entry_time(b, r, rate, dt) {
                if best.is_none_or(|(bs, _)| s < bs) {
                    best = Some((s, k));
                }
            }
        }
        best
    }

    /// Uniform grid with `per_dim` points along each non-degenerate axis.
    pub fn grid(&self, per_dim: usize) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        for b in self.boxes() {
            let axes: Vec<Vec<f64>> = b
                .iter()
                .map(|&[lo, hi]| {
                    if lo == hi || per_dim <= 1 {
                        vec![lo]
                    } else {
                        linspace(lo, hi, per_dim)
                    }
                })
                .collect();
            out.extend(cartesian(&axes));
        }
        out
    }
}

/// Distance from `r` to `C ∪ D`.
pub fn union_distance(c: &SetDescriptor, d: &SetDescriptor, r: &[f64]) -> f64 {
    c.distance(r).min(d.distance(r))
}

fn box_contains(bounds: &[[f64; 2]], r: &[f64]) -> bool {
    bounds.len() == r.len()
        && bounds
            .iter()
            .zip(r)
            .all(|(&[lo, hi], &v)| lo <= v && v <= hi)
}

fn box_distance(bounds: &[[f64; 2]], r: &[f64]) -> f64 {
    bounds
        .iter()
        .zip(r)
        .map(|(&[lo, hi], &v)| {
            let gap = if v < lo {
                lo - v
            } else if v > hi {
                v - hi
            } else {
                0.0
            };
            gap * gap
        })
        .sum::<f64>()
        .sqrt()
}

fn box_entry_time(bounds: &[[f64; 2]], r: &[f64], rate: &[f64], dt: f64) -> Option<f64> {
    let mut enter = 0.0_f64;
    let mut leave = dt;
    for ((&[lo, hi], &ri), &wi) in bounds.iter().zip(r).zip(rate) {
        if wi == 0.0 {
            if ri < lo || ri > hi {
                return None;
            }
            continue;
        }
        let (a, b) = ((lo - ri) / wi, (hi - ri) / wi);
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        enter = enter.max(a);
        leave = leave.min(b);
    }
    (enter <= leave).then_some(enter)
}

pub(crate) fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count)
            .map(|i| {
                if i + 1 == count {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (count - 1) as f64
                }
            })
            .collect(),
    }
}

/// Cartesian product in row-major order (last axis fastest).
pub(crate) fn cartesian(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::with_capacity(axes.len())];
    for axis in axes {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for prefix in &out {
            for &v in axis {
                let mut p = prefix.clone();
                p.push(v);
                next.push(p);
            }
        }
        out = next;
    }
    out
}
