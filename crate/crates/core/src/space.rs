//! Discrete design spaces built as Cartesian products of factor levels, plus
//! the reflection-orbit structure used to tie weights.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ResponseModel;

pub const DEFAULT_MAX_POINTS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpaceError {
    #[error("design space has {points} points, more than the cap of {cap}")]
    Capacity { points: usize, cap: usize },
    #[error("factor {index}: {reason}")]
    InvalidFactor { index: usize, reason: String },
    #[error("a design space needs at least one factor")]
    NoFactors,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorSpec {
    /// `count` equally spaced values from `lo` to `hi`, endpoints included.
    Grid { lo: f64, hi: f64, count: usize },
    /// Explicit, strictly increasing levels (qualitative factors use 0/1 etc).
    Levels(Vec<f64>),
}

impl FactorSpec {
    pub fn grid(lo: f64, hi: f64, count: usize) -> Self {
        FactorSpec::Grid { lo, hi, count }
    }

    pub fn levels(values: Vec<f64>) -> Self {
        FactorSpec::Levels(values)
    }

    pub fn validate(&self) -> Result<(), String> {
        match self {
            FactorSpec::Grid { lo, hi, count } => {
                if *count < 2 {
                    Err(format!("grid needs at least 2 points, got {count}"))
                } else if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                    Err(format!("grid needs finite lo < hi, got [{lo}, {hi}]"))
                } else {
                    Ok(())
                }
            }
            FactorSpec::Levels(v) => {
                if v.is_empty() {
                    Err("levels must be nonempty".into())
                } else if v.iter().any(|x| !x.is_finite()) {
                    Err("levels must be finite".into())
                } else if v.windows(2).any(|w| !(w[0] < w[1])) {
                    Err("levels must be strictly increasing".into())
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Level values. Grid values are `((n-1-k)·lo + k·hi)/(n-1)`, which makes
    /// grids symmetric about zero exactly symmetric in floating point.
    pub fn values(&self) -> Vec<f64> {
        match self {
            FactorSpec::Grid { lo, hi, count } => {
                let d = (*count - 1) as f64;
                (0..*count)
                    .map(|k| ((d - k as f64) * lo + k as f64 * hi) / d)
                    .collect()
            }
            FactorSpec::Levels(v) => v.clone(),
        }
    }
}

/// Full Cartesian product of the factor levels. Point indices run
/// lexicographically with the first factor varying slowest.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSpace {
    factors: Vec<FactorSpec>,
    levels: Vec<Vec<f64>>,
    strides: Vec<usize>,
    points: Vec<f64>,
    n: usize,
}

impl DesignSpace {
    pub fn build(factors: &[FactorSpec]) -> Result<Self, SpaceError> {
        Self::build_capped(factors, DEFAULT_MAX_POINTS)
    }

    pub fn build_capped(factors: &[FactorSpec], cap: usize) -> Result<Self, SpaceError> {
        if factors.is_empty() {
            return Err(SpaceError::NoFactors);
        }
        for (index, f) in factors.iter().enumerate() {
            f.validate()
                .map_err(|reason| SpaceError::InvalidFactor { index: index + 1, reason })?;
        }
        let levels: Vec<Vec<f64>> = factors.iter().map(FactorSpec::values).collect();
        let n = levels
            .iter()
            .try_fold(1usize, |acc, l| acc.checked_mul(l.len()))
            .unwrap_or(usize::MAX);
        if n > cap {
            return Err(SpaceError::Capacity { points: n, cap });
        }
        Ok(Self::from_levels(factors.to_vec(), levels))
    }

    fn from_levels(factors: Vec<FactorSpec>, levels: Vec<Vec<f64>>) -> Self {
        let p = levels.len();
        let mut strides = vec![1usize; p];
        for r in (0..p.saturating_sub(1)).rev() {
            strides[r] = strides[r + 1] * levels[r + 1].len();
        }
        let n = strides[0] * levels[0].len();
        let mut points = Vec::with_capacity(n * p);
        for i in 0..n {
            for r in 0..p {
                points.push(levels[r][(i / strides[r]) % levels[r].len()]);
            }
        }
        Self {
            factors,
            levels,
            strides,
            points,
            n,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Number of design variables `p`.
    pub fn dim(&self) -> usize {
        self.levels.len()
    }

    pub fn factors(&self) -> &[FactorSpec] {
        &self.factors
    }

    pub fn levels(&self, axis: usize) -> &[f64] {
        &self.levels[axis - 1]
    }

    pub fn point(&self, i: usize) -> &[f64] {
        let p = self.dim();
        &self.points[i * p..(i + 1) * p]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim())
    }

    /// Index of the point whose coordinates match `x` (to 1e-9 relative).
    pub fn index_of(&self, x: &[f64]) -> Option<usize> {
        assert_eq!(x.len(), self.dim());
        let mut i = 0;
        for (r, &v) in x.iter().enumerate() {
            let k = self.levels[r].iter().position(|&l| approx_eq(l, v, 1e-9))?;
            i += k * self.strides[r];
        }
        Some(i)
    }

    fn level_mirror(&self, axis: usize) -> Option<Vec<usize>> {
        let lv = &self.levels[axis - 1];
        lv.iter()
            .map(|&v| lv.iter().position(|&u| approx_eq(u, -v, 1e-12)))
            .collect()
    }

    /// True iff negating coordinate `axis` (1-based) maps the space onto itself.
    pub fn is_reflection_closed(&self, axis: usize) -> bool {
        axis >= 1 && axis <= self.dim() && self.level_mirror(axis).is_some()
    }

    /// Index of `T_axis u_i`, if that point exists.
    pub fn reflect_index(&self, i: usize, axis: usize) -> Option<usize> {
        let mirror = self.level_mirror(axis)?;
        let r = axis - 1;
        let k = (i / self.strides[r]) % self.levels[r].len();
        Some(i - k * self.strides[r] + mirror[k] * self.strides[r])
    }

    /// Axes (1-based) along which the space is reflection-closed and every
    /// response basis transforms by a constant ±1 diagonal pattern.
    pub fn symmetry_axes(&self, model: &ResponseModel) -> Vec<usize> {
        (1..=self.dim())
            .filter(|&r| self.is_reflection_closed(r))
            .filter(|&r| {
                model
                    .blocks()
                    .iter()
                    .all(|b| b.reflection_signature(r, self).is_some())
            })
            .collect()
    }

    /// Orbits of the group generated by reflections along `axes`.
    ///
    /// Panics if an axis is not reflection-closed.
    pub fn build_orbits(&self, axes: &[usize]) -> OrbitStructure {
        let mirrors: Vec<(usize, Vec<usize>)> = axes
            .iter()
            .map(|&a| {
                let m = self
                    .level_mirror(a)
                    .unwrap_or_else(|| panic!("space is not reflection-closed along x{a}"));
                (a, m)
            })
            .collect();
        let mut orbit_of = vec![usize::MAX; self.n];
        let mut orbits: Vec<Vec<usize>> = Vec::new();
        for i in 0..self.n {
            if orbit_of[i] != usize::MAX {
                continue;
            }
            let id = orbits.len();
            let mut members = vec![i];
            orbit_of[i] = id;
            let mut head = 0;
            while head < members.len() {
                let u = members[head];
                head += 1;
                for (a, mirror) in &mirrors {
                    let r = a - 1;
                    let k = (u / self.strides[r]) % self.levels[r].len();
                    let v = u - k * self.strides[r] + mirror[k] * self.strides[r];
                    if orbit_of[v] == usize::MAX {
                        orbit_of[v] = id;
                        members.push(v);
                    }
                }
            }
            members.sort_unstable();
            orbits.push(members);
        }
        OrbitStructure {
            axes: axes.to_vec(),
            orbits,
            orbit_of,
        }
    }

    /// Space with coordinate `r` multiplied by `t[r]`; indices are preserved.
    pub fn apply_scale(&self, t: &[f64]) -> DesignSpace {
        assert_eq!(t.len(), self.dim(), "one scale factor per design variable");
        assert!(t.iter().all(|&x| x > 0.0), "scale factors must be positive");
        let factors = self
            .factors
            .iter()
            .zip(t)
            .map(|(f, &s)| match f {
                FactorSpec::Grid { lo, hi, count } => FactorSpec::Grid {
                    lo: lo * s,
                    hi: hi * s,
                    count: *count,
                },
                FactorSpec::Levels(v) => FactorSpec::Levels(v.iter().map(|x| x * s).collect()),
            })
            .collect();
        let levels = self
            .levels
            .iter()
            .zip(t)
            .map(|(l, &s)| l.iter().map(|x| x * s).collect())
            .collect();
        Self::from_levels(factors, levels)
    }
}

fn approx_eq(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

/// Partition of point indices into reflection orbits. Orbits are ordered by
/// their smallest member, which is also the representative.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitStructure {
    axes: Vec<usize>,
    orbits: Vec<Vec<usize>>,
    orbit_of: Vec<usize>,
}

impl OrbitStructure {
    pub fn trivial(n: usize) -> Self {
        Self {
            axes: Vec::new(),
            orbits: (0..n).map(|i| vec![i]).collect(),
            orbit_of: (0..n).collect(),
        }
    }

    pub fn axes(&self) -> &[usize] {
        &self.axes
    }

    pub fn len(&self) -> usize {
        self.orbits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.orbits.is_empty()
    }

    pub fn num_points(&self) -> usize {
        self.orbit_of.len()
    }

    pub fn members(&self, k: usize) -> &[usize] {
        &self.orbits[k]
    }

    pub fn orbits(&self) -> &[Vec<usize>] {
        &self.orbits
    }

    pub fn representative(&self, k: usize) -> usize {
        self.orbits[k][0]
    }

    pub fn orbit_of(&self, i: usize) -> usize {
        self.orbit_of[i]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.orbits.iter().map(Vec::len).collect()
    }

    /// Spreads each orbit weight evenly over its members.
    pub fn expand(&self, orbit_weights: &[f64]) -> Vec<f64> {
        assert_eq!(orbit_weights.len(), self.len());
        let mut w = vec![0.0; self.num_points()];
        for (members, &wk) in self.orbits.iter().zip(orbit_weights) {
            let share = wk / members.len() as f64;
            for &i in members {
                w[i] = share;
            }
        }
        w
    }

    /// Sums point weights per orbit.
    pub fn reduce(&self, point_weights: &[f64]) -> Vec<f64> {
        assert_eq!(point_weights.len(), self.num_points());
        self.orbits
            .iter()
            .map(|m| m.iter().map(|&i| point_weights[i]).sum())
            .collect()
    }

    /// Averages a per-point quantity over each orbit.
    pub fn mean(&self, per_point: &[f64]) -> Vec<f64> {
        self.orbits
            .iter()
            .map(|m| m.iter().map(|&i| per_point[i]).sum::<f64>() / m.len() as f64)
            .collect()
    }
}
