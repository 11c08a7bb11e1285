//! One-dimensional parameter sweeps and resonance-window detection.
//!
//! Each grid point is an independent propagation from `|1>`. Points run in
//! parallel on the rayon pool and are collected in index order, so results
//! do not depend on the thread count.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{ground_state, infidelity_of, min_steps, propagate_final};
use crate::error::{Error, Result};
use crate::pulses::Scheme;
use crate::systems::SystemModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SweepParameter {
    Tau,
    Eta,
    Delta,
    Chi,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::Tau => "tau",
            SweepParameter::Eta => "eta",
            SweepParameter::Delta => "delta",
            SweepParameter::Chi => "chi",
        }
    }

    /// Default `(lo, hi, points)` grid.
    pub fn default_grid(self) -> (f64, f64, usize) {
        match self {
            SweepParameter::Tau => (0.4, 30.0, 600),
            SweepParameter::Eta => (-0.2, 0.2, 401),
            SweepParameter::Delta => (-80.0, 80.0, 801),
            SweepParameter::Chi => (0.0, std::f64::consts::FRAC_PI_2, 181),
        }
    }

    /// Copy of `base` with this parameter set to `value`.
    pub fn apply(self, base: &SystemModel, value: f64) -> SystemModel {
        let mut m = base.clone();
        match self {
            SweepParameter::Tau => m.pulses.tau = value,
            SweepParameter::Eta => m.pulses.eta = value,
            SweepParameter::Delta => m.delta = value,
            SweepParameter::Chi => m.pulses.chi = value,
        }
        m
    }
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParameter {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "tau" => Ok(SweepParameter::Tau),
            "eta" => Ok(SweepParameter::Eta),
            "delta" => Ok(SweepParameter::Delta),
            "chi" => Ok(SweepParameter::Chi),
            other => Err(format!("unknown sweep parameter `{other}`")),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
    /// Model supplying every parameter that is not swept. Its pulse family
    /// fixes the level count; the scheme is replaced per series.
    pub base: SystemModel,
    pub schemes: Vec<Scheme>,
}

impl SweepSpec {
    /// Spec on the parameter's default grid.
    pub fn new(parameter: SweepParameter, base: SystemModel, schemes: Vec<Scheme>) -> Self {
        let (lo, hi, points) = parameter.default_grid();
        Self { parameter, lo, hi, points, base, schemes }
    }

    pub fn with_range(mut self, lo: f64, hi: f64, points: usize) -> Self {
        self.lo = lo;
        self.hi = hi;
        self.points = points;
        self
    }

    pub fn axis(&self) -> Vec<f64> {
        let n = (self.points - 1) as f64;
        (0..self.points).map(|k| self.lo + (self.hi - self.lo) * (k as f64 / n)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSweep(msg));
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return bad(format!("range [{}, {}] is empty", self.lo, self.hi));
        }
        if self.points < 2 {
            return bad(format!("need at least 2 points, got {}", self.points));
        }
        if self.schemes.is_empty() {
            return bad("no scheme selected".into());
        }
        match self.parameter {
            SweepParameter::Eta if self.lo <= -1.0 => return bad("eta range must stay above -1".into()),
            SweepParameter::Tau if self.lo <= 0.0 => return bad("tau range must be positive".into()),
            SweepParameter::Chi if self.base.levels() != 4 => return bad("chi sweeps need a four-level system".into()),
            _ => {}
        }
        for &scheme in &self.schemes {
            let base = SystemModel { pulses: self.base.pulses.clone().with_scheme(scheme)?, ..self.base.clone() };
            for v in [self.lo, self.hi] {
                self.parameter.apply(&base, v).validate()?;
            }
        }
        Ok(())
    }
}

/// A maximal run of grid points below a threshold.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Window {
    pub scheme: Scheme,
    pub lo: f64,
    pub hi: f64,
    pub start: usize,
    pub end: usize,
    pub min_location: f64,
    pub min_value: f64,
    /// The run touches the first or last grid point.
    pub truncated: bool,
}

#[derive(Clone, Debug)]
pub struct SchemeSeries {
    pub scheme: Scheme,
    pub infidelity: Vec<f64>,
    /// Final populations per grid point.
    pub populations: Vec<Vec<f64>>,
    pub windows: Vec<Window>,
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub parameter: SweepParameter,
    pub axis: Vec<f64>,
    pub series: Vec<SchemeSeries>,
}

impl SweepResult {
    pub fn series(&self, scheme: Scheme) -> Option<&SchemeSeries> {
        self.series.iter().find(|s| s.scheme == scheme)
    }

    pub fn windows(&self) -> impl Iterator<Item = &Window> {
        self.series.iter().flat_map(|s| &s.windows)
    }
}

fn run_point(spec: &SweepSpec, base: &SystemModel, index: usize, value: f64) -> Result<Vec<f64>> {
    let m = spec.parameter.apply(base, value);
    propagate_final(&m, &ground_state(m.levels()), min_steps(&m))
        .map(|f| f.populations)
        .map_err(|e| Error::SweepPoint { index, parameter: spec.parameter.name(), value, source: Box::new(e) })
}

/// Propagates every grid point of every scheme. Windows are left empty;
/// see [`find_windows`].
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    let axis = spec.axis();
    let series = spec
        .schemes
        .iter()
        .map(|&scheme| {
            let base = SystemModel { pulses: spec.base.pulses.clone().with_scheme(scheme)?, ..spec.base.clone() };
            let populations: Vec<Vec<f64>> = axis
                .par_iter()
                .enumerate()
                .map(|(k, &v)| run_point(spec, &base, k, v))
                .collect::<Result<_>>()?;
            let infidelity = populations.iter().map(|p| infidelity_of(p)).collect();
            Ok(SchemeSeries { scheme, infidelity, populations, windows: Vec::new() })
        })
        .collect::<Result<_>>()?;
    Ok(SweepResult { parameter: spec.parameter, axis, series })
}

/// Vertex of the parabola through three equally spaced points, as an
/// offset in grid steps from the middle point and the fitted value.
fn parabola_vertex(fl: f64, fm: f64, fr: f64) -> Option<(f64, f64)> {
    let curv = fl - 2.0 * fm + fr;
    if curv <= 0.0 {
        return None;
    }
    let offset = 0.5 * (fl - fr) / curv;
    Some((offset, fm - 0.25 * (fl - fr) * offset))
}

fn windows_of(scheme: Scheme, axis: &[f64], f: &[f64], threshold: f64) -> Vec<Window> {
    let n = f.len();
    let mut out = Vec::new();
    let mut k = 0;
    while k < n {
        if !(f[k] < threshold) {
            k += 1;
            continue;
        }
        let start = k;
        while k + 1 < n && f[k + 1] < threshold {
            k += 1;
        }
        let end = k;
        k += 1;
        let i = (start..=end).min_by(|&a, &b| f[a].total_cmp(&f[b])).unwrap();
        let (mut loc, mut val) = (axis[i], f[i]);
        if i > 0 && i + 1 < n {
            if let Some((off, v)) = parabola_vertex(f[i - 1], f[i], f[i + 1]) {
                let step = axis[i + 1] - axis[i];
                loc = axis[i] + off * step;
                val = v.clamp(0.0, f[i]);
            }
        }
        out.push(Window {
            scheme,
            lo: axis[start],
            hi: axis[end],
            start,
            end,
            min_location: loc,
            min_value: val,
            truncated: start == 0 || end == n - 1,
        });
    }
    out
}

/// Fills in the windows of every series: maximal runs with infidelity below
/// `threshold`, each with a three-point parabolic estimate of its minimum.
pub fn find_windows(mut r: SweepResult, threshold: f64) -> SweepResult {
    for s in &mut r.series {
        s.windows = windows_of(s.scheme, &r.axis, &s.infidelity, threshold);
    }
    r
}

/// Replaces each refined minimum value by a fresh propagation at the
/// refined location.
pub fn refine_exact(mut r: SweepResult, spec: &SweepSpec) -> Result<SweepResult> {
    for s in &mut r.series {
        let base = SystemModel { pulses: spec.base.pulses.clone().with_scheme(s.scheme)?, ..spec.base.clone() };
        for w in &mut s.windows {
            let p = run_point(spec, &base, w.start, w.min_location)?;
            w.min_value = infidelity_of(&p);
        }
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pulses::PulseSet;

    fn result(f: Vec<f64>) -> SweepResult {
        let axis = (0..f.len()).map(|k| k as f64).collect();
        SweepResult {
            parameter: SweepParameter::Tau,
            axis,
            series: vec![SchemeSeries { scheme: Scheme::Optimized, infidelity: f, populations: vec![], windows: vec![] }],
        }
    }

    #[test]
    fn threshold_above_everything() {
        let r = find_windows(result(vec![0.3, 0.1, 0.2, 0.5]), 0.9);
        let w = &r.series[0].windows;
        assert_eq!(w.len(), 1);
        assert_eq!((w[0].lo, w[0].hi, w[0].truncated), (0.0, 3.0, true));
    }

    #[test]
    fn threshold_below_everything() {
        let r = find_windows(result(vec![0.3, 0.1, 0.2, 0.5]), 0.05);
        assert!(r.series[0].windows.is_empty());
    }

    #[test]
    fn parabolic_refinement() {
        // samples of (x - 2.3)^2 + 0.01
        let f: Vec<f64> = (0..7).map(|k| (k as f64 - 2.3).powi(2) + 0.01).collect();
        let r = find_windows(result(f), 1.0);
        let w = &r.series[0].windows[0];
        assert_eq!((w.start, w.end), (2, 3));
        assert!((w.min_location - 2.3).abs() < 1e-12);
        assert!((w.min_value - 0.01).abs() < 1e-12);
        assert!(!w.truncated);
    }

    #[test]
    fn refined_value_is_clamped() {
        let r = find_windows(result(vec![1.0, 1e-3, 1e-7, 1e-3, 1.0]), 0.5);
        let w = &r.series[0].windows[0];
        assert!(w.min_value >= 0.0 && w.min_value <= 1e-7);
    }

    #[test]
    fn disjoint_sorted_windows() {
        let r = find_windows(result(vec![0.5, 0.01, 0.5, 0.02, 0.03, 0.5, 0.01]), 0.1);
        let w = &r.series[0].windows;
        assert_eq!(w.len(), 3);
        assert!(w.windows(2).all(|p| p[0].end < p[1].start));
        assert!(w[2].truncated && !w[0].truncated);
    }

    #[test]
    fn spec_validation() {
        let base = SystemModel::new(PulseSet::optimized3(35.0, 7.4), 0.0).unwrap();
        let spec = SweepSpec::new(SweepParameter::Eta, base.clone(), vec![Scheme::Optimized]);
        assert!(spec.clone().with_range(-1.5, 0.2, 11).validate().is_err());
        assert!(spec.clone().with_range(0.2, 0.1, 11).validate().is_err());
        assert!(spec.clone().with_range(-0.1, 0.1, 1).validate().is_err());
        assert!(spec.validate().is_ok());
        let chi = SweepSpec::new(SweepParameter::Chi, base, vec![Scheme::Optimized]);
        assert!(chi.validate().is_err());
    }

    #[test]
    fn two_point_grid() {
        let base = SystemModel::new(PulseSet::optimized3(35.0, 4.0), 0.0).unwrap();
        let spec = SweepSpec::new(SweepParameter::Tau, base, vec![Scheme::Optimized, Scheme::Gaussian]).with_range(1.0, 2.0, 2);
        let r = run_sweep(&spec).unwrap();
        assert_eq!(r.axis, vec![1.0, 2.0]);
        assert_eq!(r.series.len(), 2);
        assert!(r.series.iter().all(|s| s.infidelity.len() == 2));
    }
}
