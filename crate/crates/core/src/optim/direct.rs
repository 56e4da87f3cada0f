//! DIRECT (dividing rectangles) global maximization over a box.
//!
//! Works in the unit cube. Every rectangle is split by trisecting its
//! longest side (lowest dimension index on ties), so a rectangle's shape is
//! fully described by how many times it has been divided. Potentially optimal
//! rectangles are picked with the classic lower-right convex hull rule and
//! the `epsilon` balance parameter.

use std::collections::BTreeMap;

use log::warn;

use super::SearchSpace;
use crate::error::{Error, Result};

/// Balance parameter of the potentially-optimal rule.
pub const DIRECT_EPSILON: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct DirectOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct Rect {
    center: Vec<f64>,
    levels: Vec<u32>,
    divisions: u32,
    /// Objective value; non-finite evaluations are stored as `-inf`.
    value: f64,
}

impl Rect {
    fn half_diagonal(&self) -> f64 {
        0.5 * self.levels.iter().map(|&l| 3f64.powi(-2 * l as i32)).sum::<f64>().sqrt()
    }

    fn split_dim(&self) -> usize {
        let min = *self.levels.iter().min().expect("non-empty");
        self.levels.iter().position(|&l| l == min).expect("min exists")
    }
}

/// Full search state; kept around so callers can pick refinement starts.
pub(crate) struct DirectState {
    pub rects: Vec<Rect>,
    pub best: usize,
    pub evaluations: usize,
}

impl DirectState {
    pub fn outcome(&self, space: &SearchSpace) -> DirectOutcome {
        let r = &self.rects[self.best];
        DirectOutcome { x: space.from_unit(&r.center), value: r.value, evaluations: self.evaluations }
    }

    /// Centers (in box coordinates) of up to `k` good rectangles, best first.
    /// After the incumbent, a rectangle qualifies only if its center is at least
    /// `separation` (unit-cube distance) away from every start already taken.
    pub fn starts(&self, space: &SearchSpace, k: usize, separation: f64) -> Vec<(Vec<f64>, f64)> {
        let mut order: Vec<usize> = (0..self.rects.len()).filter(|&i| self.rects[i].value.is_finite()).collect();
        order.sort_by(|&a, &b| {
            self.rects[b].value.partial_cmp(&self.rects[a].value).expect("finite").then(a.cmp(&b))
        });
        if let Some(pos) = order.iter().position(|&i| i == self.best) {
            order.remove(pos);
        }
        order.insert(0, self.best);
        let mut picked: Vec<usize> = Vec::with_capacity(k);
        for i in order {
            if picked.len() == k {
                break;
            }
            let far = picked.iter().all(|&j| {
                let d2: f64 = self.rects[i]
                    .center
                    .iter()
                    .zip(&self.rects[j].center)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                d2.sqrt() >= separation
            });
            if far {
                picked.push(i);
            }
        }
        picked.into_iter().map(|i| (space.from_unit(&self.rects[i].center), self.rects[i].value)).collect()
    }
}

fn sanitize(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        warn!("DIRECT: non-finite objective value {v}; treating as -inf");
        f64::NEG_INFINITY
    }
}

/// Maximize `f` over `space` with at most `max_evals` evaluations.
pub fn direct_maximize<F>(f: F, space: &SearchSpace, max_evals: usize) -> Result<DirectOutcome>
where
    F: FnMut(&[f64]) -> f64,
{
    Ok(direct_search(f, space, max_evals)?.outcome(space))
}

pub(crate) fn direct_search<F>(mut f: F, space: &SearchSpace, max_evals: usize) -> Result<DirectState>
where
    F: FnMut(&[f64]) -> f64,
{
    let d = space.dim();
    if d == 0 {
        return Err(Error::contract("DIRECT needs at least one dimension"));
    }
    if max_evals < 2 * d + 1 {
        return Err(Error::contract(format!("DIRECT budget {max_evals} below 2d+1 = {}", 2 * d + 1)));
    }
    let mut eval = |u: &[f64]| sanitize(f(&space.from_unit(u)));

    let center = vec![0.5; d];
    let value = eval(&center);
    let mut state = DirectState {
        rects: vec![Rect { center, levels: vec![0; d], divisions: 0, value }],
        best: 0,
        evaluations: 1,
    };

    while state.evaluations + 2 <= max_evals {
        let chosen = potentially_optimal(&state.rects);
        if chosen.is_empty() {
            break;
        }
        for idx in chosen {
            if state.evaluations + 2 > max_evals {
                break;
            }
            let dim = state.rects[idx].split_dim();
            let level = state.rects[idx].levels[dim] + 1;
            let delta = 3f64.powi(-(level as i32));
            let mut children = Vec::with_capacity(2);
            for sign in [-1.0, 1.0] {
                let mut c = state.rects[idx].center.clone();
                c[dim] += sign * delta;
                let v = eval(&c);
                state.evaluations += 1;
                let mut levels = state.rects[idx].levels.clone();
                levels[dim] = level;
                children.push(Rect { center: c, levels, divisions: state.rects[idx].divisions + 1, value: v });
            }
            let parent = &mut state.rects[idx];
            parent.levels[dim] = level;
            parent.divisions += 1;
            for child in children {
                // Strict improvement keeps the earliest incumbent on ties.
                if child.value > state.rects[state.best].value {
                    state.best = state.rects.len();
                }
                state.rects.push(child);
            }
        }
    }
    Ok(state)
}

/// Indices of potentially optimal rectangles, largest first.
fn potentially_optimal(rects: &[Rect]) -> Vec<usize> {
    // Work with g = -f so the rule reads as in the minimization literature.
    let mut groups: BTreeMap<u32, usize> = BTreeMap::new();
    for (i, r) in rects.iter().enumerate() {
        if !r.value.is_finite() {
            continue;
        }
        groups
            .entry(r.divisions)
            .and_modify(|j| {
                if r.value > rects[*j].value {
                    *j = i;
                }
            })
            .or_insert(i);
    }
    if groups.is_empty() {
        // Everything evaluated non-finite: keep subdividing the largest box.
        let i = (0..rects.len()).min_by_key(|&i| (rects[i].divisions, i));
        return i.into_iter().collect();
    }
    // Ascending diameter = descending division count.
    let pts: Vec<(f64, f64, usize)> =
        groups.values().rev().map(|&i| (rects[i].half_diagonal(), -rects[i].value, i)).collect();
    let g_min = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    // Among ties for the minimum, start the hull at the largest rectangle.
    let start = pts.iter().rposition(|p| p.1 == g_min).expect("min exists");

    let mut hull: Vec<usize> = Vec::new();
    for k in start..pts.len() {
        while hull.len() >= 2 {
            let a = pts[hull[hull.len() - 2]];
            let b = pts[hull[hull.len() - 1]];
            let c = pts[k];
            let cross = (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(k);
    }

    let threshold = g_min - DIRECT_EPSILON * g_min.abs();
    let mut chosen = Vec::new();
    for (h, &k) in hull.iter().enumerate() {
        let (d, g, idx) = pts[k];
        let ok = match hull.get(h + 1) {
            None => true,
            Some(&n) => {
                let (d2, g2, _) = pts[n];
                let slope = (g2 - g) / (d2 - d);
                g - slope * d <= threshold
            }
        };
        if ok {
            chosen.push(idx);
        }
    }
    chosen.reverse();
    chosen
}
