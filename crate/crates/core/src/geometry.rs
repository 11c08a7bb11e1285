//! Dynamical quantum geometric tensor and nonadiabatic transition rates.
//!
//! For an adiabatic level `n` and control parameters `R = (P, S[, Q])` the
//! tensor is
//!
//! ```text
//! D_n,pq = sum_{l outside cluster(n)} Re[<l|dH/dR_p|n><n|dH/dR_q|l>] / (E_n - E_l)^4
//! ```
//!
//! and the total transition rate is `T_n(s) = sqrt(D_n,pq R'_p R'_q)` with
//! primes denoting derivatives in `s`. The rate has units of time (us), and
//! first-order perturbation theory bounds the leakage out of `n` by
//! `(|T_n(s)| ± |T_n(0)|)^2 / tau^2`.

use crate::error::{Error, Result};
use crate::numerics::{eig_hermitian, gauge_continuity, inner, EigenDecomposition, C64};
use crate::systems::{bright_roots, hamiltonian_from_sample, SystemModel};

/// Control parameter labels, in tensor index order.
pub const PARAMETERS: [&str; 3] = ["P", "S", "Q"];

/// Step in `s` of the five-point stencil used by [`RateMethod::Direct`].
pub const DIRECT_STEP: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct DqgtReport {
    pub s: f64,
    pub target_level: usize,
    /// Symmetric `M x M` matrix over `P, S` or `P, S, Q`.
    pub components: Vec<Vec<f64>>,
    /// Levels degenerate with the target, left out of the sum.
    pub excluded_partners: Vec<usize>,
}

impl DqgtReport {
    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn get(&self, p: usize, q: usize) -> f64 {
        self.components[p][q]
    }

    /// Contracts the tensor with a parameter velocity.
    pub fn contract(&self, v: &[f64]) -> f64 {
        let m = self.dim();
        let mut acc = 0.0;
        for p in 0..m {
            for q in 0..m {
                acc += self.components[p][q] * v[p] * v[q];
            }
        }
        acc
    }

    /// Largest componentwise relative difference, against the larger entry
    /// of the two matrices.
    pub fn relative_difference(&self, other: &Self) -> f64 {
        let scale = self
            .components
            .iter()
            .chain(&other.components)
            .flatten()
            .fold(0.0f64, |a, x| a.max(x.abs()));
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for (a, b) in self.components.iter().zip(&other.components) {
            for (x, y) in a.iter().zip(b) {
                worst = worst.max((x - y).abs() / scale);
            }
        }
        worst
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RateMethod {
    /// Contract the numeric tensor with analytic pulse derivatives.
    Metric,
    /// Differentiate gauge-aligned eigenvectors with a five-point stencil.
    Direct,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateSample {
    pub s: f64,
    /// Total rate `T_n(s)`, us.
    pub t_total: f64,
    /// `(l, |T_nl(s)|)` for every partner outside the degenerate cluster.
    pub per_pair: Vec<(usize, f64)>,
}

/// Slot of `dH/dR_p`: each structure matrix holds 1/2 at `(i, j)` and `(j, i)`.
fn slot(p: usize) -> (usize, usize) {
    [(0, 1), (1, 2), (1, 3)][p]
}

fn derivative_element(p: usize, l: &[C64], n: &[C64]) -> C64 {
    let (i, j) = slot(p);
    (l[i].conj() * n[j] + l[j].conj() * n[i]) * 0.5
}

fn check_level(m: &SystemModel, n: usize) -> Result<()> {
    if n < m.levels() {
        Ok(())
    } else {
        Err(Error::InvalidLevel { n, levels: m.levels() })
    }
}

fn check_s(s: f64) -> Result<()> {
    if (0.0..=1.0).contains(&s) {
        Ok(())
    } else {
        Err(Error::OutOfRange { s })
    }
}

fn numeric_eigensystem(m: &SystemModel, s: f64) -> Result<EigenDecomposition> {
    eig_hermitian(&hamiltonian_from_sample(m.levels(), m.delta, &m.sample(s)))
}

/// Splits the other levels into coupled partners and degenerate ones.
/// A collapsed gap is only accepted between two dark levels.
fn partners(m: &SystemModel, e: &EigenDecomposition, s: f64, n: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    let dark = m.dark_levels();
    let (mut coupled, mut excluded) = (Vec::new(), Vec::new());
    for l in (0..m.levels()).filter(|&l| l != n) {
        let gap = (e.values[n] - e.values[l]).abs();
        if gap >= m.tol_gap() {
            coupled.push(l);
        } else if dark.contains(&n) && dark.contains(&l) {
            excluded.push(l);
        } else {
            return Err(Error::GapCollapse { s, n, l, gap });
        }
    }
    Ok((coupled, excluded))
}

fn tensor_from(m: &SystemModel, e: &EigenDecomposition, s: f64, n: usize) -> Result<DqgtReport> {
    let (coupled, excluded) = partners(m, e, s, n)?;
    let dim = m.levels() - 1;
    let vn = e.vector(n);
    let mut d = vec![vec![0.0; dim]; dim];
    for &l in &coupled {
        let vl = e.vector(l);
        let g = e.values[n] - e.values[l];
        let g4 = (g * g) * (g * g);
        let el: Vec<C64> = (0..dim).map(|p| derivative_element(p, &vl, &vn)).collect();
        for p in 0..dim {
            for q in 0..dim {
                d[p][q] += (el[p] * el[q].conj()).re / g4;
            }
        }
    }
    for p in 0..dim {
        for q in 0..p {
            let avg = 0.5 * (d[p][q] + d[q][p]);
            d[p][q] = avg;
            d[q][p] = avg;
        }
    }
    Ok(DqgtReport { s, target_level: n, components: d, excluded_partners: excluded })
}

/// Tensor from the numeric eigensystem and exact structure matrices.
pub fn dqgt_numeric(m: &SystemModel, s: f64, n: usize) -> Result<DqgtReport> {
    check_s(s)?;
    check_level(m, n)?;
    let e = numeric_eigensystem(m, s)?;
    tensor_from(m, &e, s, n)
}

/// `K = (M+ + M-) / (M+ M-)` with `M± = u±^2 (W^2 + u±^2)`.
pub fn k_factor(delta: f64, omega: f64) -> f64 {
    let (um, up) = bright_roots(delta, omega);
    let mp = up * up * (omega * omega + up * up);
    let mm = um * um * (omega * omega + um * um);
    1.0 / mp + 1.0 / mm
}

/// Closed-form tensor of the dark level (`n = 1` in ascending order).
pub fn dqgt_analytic(m: &SystemModel, s: f64, n: usize) -> Result<DqgtReport> {
    check_s(s)?;
    check_level(m, n)?;
    if n != 1 {
        return Err(Error::UnsupportedLevel { n });
    }
    let x = m.sample(s);
    let omega = x.omega();
    if omega <= m.tol_omega() {
        return Err(Error::VanishingRabiNorm { s, omega });
    }
    let k = 4.0 * k_factor(m.delta, omega) / (omega * omega);
    let (p, st, q) = (x.omega_p, x.omega_s, x.omega_q);
    let components = if m.levels() == 3 {
        vec![vec![k * st * st, -k * p * st], vec![-k * p * st, k * p * p]]
    } else {
        let rho2 = st * st + q * q;
        let kr = if rho2 > 0.0 { k * p * p / rho2 } else { 0.0 };
        vec![
            vec![k * rho2, -k * p * st, -k * p * q],
            vec![-k * p * st, kr * st * st, kr * st * q],
            vec![-k * p * q, kr * st * q, kr * q * q],
        ]
    };
    let excluded = if m.levels() == 4 { vec![2] } else { vec![] };
    Ok(DqgtReport { s, target_level: n, components, excluded_partners: excluded })
}

/// Total nonadiabatic transition rate of level `n` at `s`.
pub fn transition_rate(m: &SystemModel, s: f64, n: usize, method: RateMethod) -> Result<RateSample> {
    check_s(s)?;
    check_level(m, n)?;
    let e = numeric_eigensystem(m, s)?;
    match method {
        RateMethod::Metric => metric_rate(m, &e, s, n),
        RateMethod::Direct => direct_rate(m, &e, s, n),
    }
}

fn metric_rate(m: &SystemModel, e: &EigenDecomposition, s: f64, n: usize) -> Result<RateSample> {
    let d = tensor_from(m, e, s, n)?;
    let x = m.sample(s);
    let v = x.derivatives();
    let t_total = d.contract(&v[..d.dim()]).max(0.0).sqrt();
    let (coupled, _) = partners(m, e, s, n)?;
    let vn = e.vector(n);
    let per_pair = coupled
        .into_iter()
        .map(|l| {
            let vl = e.vector(l);
            let dh: C64 = (0..d.dim()).map(|p| derivative_element(p, &vl, &vn) * v[p]).sum();
            let g = e.values[n] - e.values[l];
            (l, dh.norm() / (g * g))
        })
        .collect();
    Ok(RateSample { s, t_total, per_pair })
}

/// Stencil nodes (as multiples of the step) and weights for `f'(s)`,
/// shifted one-sided near the ends of `[0, 1]`.
fn stencil(s: f64, h: f64) -> ([f64; 5], [f64; 5]) {
    const CENTRAL: ([f64; 5], [f64; 5]) = ([-2.0, -1.0, 0.0, 1.0, 2.0], [1.0, -8.0, 0.0, 8.0, -1.0]);
    const FORWARD: ([f64; 5], [f64; 5]) = ([0.0, 1.0, 2.0, 3.0, 4.0], [-25.0, 48.0, -36.0, 16.0, -3.0]);
    const BACKWARD: ([f64; 5], [f64; 5]) = ([0.0, -1.0, -2.0, -3.0, -4.0], [25.0, -48.0, 36.0, -16.0, 3.0]);
    if s - 2.0 * h < 0.0 {
        FORWARD
    } else if s + 2.0 * h > 1.0 {
        BACKWARD
    } else {
        CENTRAL
    }
}

fn direct_rate(m: &SystemModel, e: &EigenDecomposition, s: f64, n: usize) -> Result<RateSample> {
    let (coupled, _) = partners(m, e, s, n)?;
    let h = DIRECT_STEP;
    let (nodes, weights) = stencil(s, h);
    let mut deriv = vec![C64::new(0.0, 0.0); m.levels()];
    for (&k, &w) in nodes.iter().zip(&weights) {
        if w == 0.0 {
            continue;
        }
        let shifted = gauge_continuity(e, &numeric_eigensystem(m, s + k * h)?)?;
        for (acc, x) in deriv.iter_mut().zip(shifted.vector(n)) {
            *acc += x * (w / (12.0 * h));
        }
    }
    let per_pair: Vec<(usize, f64)> = coupled
        .into_iter()
        .map(|l| (l, inner(&e.vector(l), &deriv).norm() / (e.values[n] - e.values[l]).abs()))
        .collect();
    let t_total = per_pair.iter().map(|(_, t)| t * t).sum::<f64>().sqrt();
    Ok(RateSample { s, t_total, per_pair })
}

/// First-order leakage bounds `(P-, P+) = ((T(s) ∓ T(0)) / tau)^2` built
/// from total rates.
pub fn transition_prob_bounds(t_rate_at_0: f64, t_rate_at_s: f64, tau: f64) -> (f64, f64) {
    let (a, b) = (t_rate_at_s.abs(), t_rate_at_0.abs());
    let tau2 = tau * tau;
    ((a - b).powi(2) / tau2, (a + b).powi(2) / tau2)
}
