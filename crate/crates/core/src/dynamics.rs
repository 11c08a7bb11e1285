//! Time evolution in the bare and adiabatic bases.
//!
//! Both integrators are classical fourth-order Runge-Kutta with a fixed,
//! uniform step. The state is never renormalized; the largest deviation
//! of `|psi|^2` from 1 is reported as `norm_drift` and runs that drift by
//! [`NORM_DRIFT_LIMIT`] or more are rejected.

use crate::error::{Error, Result};
use crate::numerics::{eig_hermitian, gauge_continuity, inner, EigenDecomposition, C64};
use crate::pulses::{PulseFamily, PulseSample};
use crate::systems::{apply_hamiltonian, hamiltonian_from_sample, mixing_angles, SystemModel};

pub const NORM_DRIFT_LIMIT: f64 = 1e-9;

const MIN_STEPS_FLOOR: usize = 4000;
const SAMPLES_PER_PERIOD: f64 = 40.0;
const UNIT_TOL: f64 = 1e-12;
const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Fewest uniform steps accepted for a model:
/// `max(4000, ceil(40 tau (omega0 (1 + |eta|) + |delta|)))`.
pub fn min_steps(m: &SystemModel) -> usize {
    let p = &m.pulses;
    let rate = p.omega0 * (1.0 + p.eta.abs()) + m.delta.abs();
    let n = (SAMPLES_PER_PERIOD * p.tau * rate).ceil();
    MIN_STEPS_FLOOR.max(n as usize)
}

/// Bare-basis trajectory on the uniform grid `s_k = k / steps`.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub s_grid: Vec<f64>,
    pub states: Vec<Vec<C64>>,
    pub populations: Vec<Vec<f64>>,
    pub norm_drift: f64,
    pub model: SystemModel,
}

impl Trajectory {
    pub fn final_populations(&self) -> &[f64] {
        self.populations.last().unwrap()
    }

    pub fn scheme(&self) -> String {
        self.model.pulses.family.name()
    }
}

/// End point of a run, without the intermediate states.
#[derive(Clone, Debug, PartialEq)]
pub struct FinalState {
    pub state: Vec<C64>,
    pub populations: Vec<f64>,
    pub norm_drift: f64,
}

/// `|1>` in a system with `levels` levels.
pub fn ground_state(levels: usize) -> Vec<C64> {
    let mut v = vec![ZERO; levels];
    v[0] = C64::new(1.0, 0.0);
    v
}

fn populations_of(v: &[C64]) -> Vec<f64> {
    v.iter().map(|x| x.norm_sqr()).collect()
}

fn check_initial(m: &SystemModel, psi0: &[C64]) -> Result<()> {
    if psi0.len() != m.levels() {
        return Err(Error::InvalidModel(format!(
            "initial state has {} components for a {}-level system",
            psi0.len(),
            m.levels()
        )));
    }
    let norm = psi0.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > UNIT_TOL {
        return Err(Error::NonUnitInitialState { norm });
    }
    Ok(())
}

fn check_steps(m: &SystemModel, steps: usize) -> Result<()> {
    let min = min_steps(m);
    if steps < min {
        return Err(Error::StepTooCoarse { steps, min, drift: f64::NAN });
    }
    Ok(())
}

fn check_drift(m: &SystemModel, steps: usize, drift: f64) -> Result<()> {
    if drift < NORM_DRIFT_LIMIT {
        Ok(())
    } else {
        Err(Error::StepTooCoarse { steps, min: min_steps(m), drift })
    }
}

/// Runs RK4 on `i dpsi/dt = H psi` and hands every node to `visit`.
/// Returns the largest norm deviation seen.
fn rk4_bare(m: &SystemModel, psi0: &[C64], steps: usize, mut visit: impl FnMut(usize, &[C64; 4])) -> f64 {
    let levels = m.levels();
    let delta = m.delta;
    let h = m.tau() / steps as f64;
    let mut psi = [ZERO; 4];
    psi[..levels].copy_from_slice(psi0);
    visit(0, &psi);
    let rhs = |x: &PulseSample, v: &[C64; 4]| {
        let mut out = apply_hamiltonian(levels, delta, x, v);
        for z in &mut out {
            *z = C64::new(z.im, -z.re);
        }
        out
    };
    let axpy = |v: &[C64; 4], a: f64, k: &[C64; 4]| {
        let mut out = *v;
        for i in 0..4 {
            out[i] += k[i] * a;
        }
        out
    };
    let mut drift = 0.0f64;
    let mut x0 = m.sample(0.0);
    for k in 0..steps {
        let xm = m.sample((k as f64 + 0.5) / steps as f64);
        let x1 = m.sample((k + 1) as f64 / steps as f64);
        let k1 = rhs(&x0, &psi);
        let k2 = rhs(&xm, &axpy(&psi, 0.5 * h, &k1));
        let k3 = rhs(&xm, &axpy(&psi, 0.5 * h, &k2));
        let k4 = rhs(&x1, &axpy(&psi, h, &k3));
        for i in 0..levels {
            psi[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (h / 6.0);
        }
        let n2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        drift = drift.max((n2 - 1.0).abs());
        visit(k + 1, &psi);
        x0 = x1;
    }
    drift
}

/// Integrates the Schrodinger equation over `t in [0, tau]` from `psi0`.
pub fn propagate(m: &SystemModel, psi0: &[C64], steps: usize) -> Result<Trajectory> {
    m.validate()?;
    check_initial(m, psi0)?;
    check_steps(m, steps)?;
    let levels = m.levels();
    let mut states = Vec::with_capacity(steps + 1);
    let drift = rk4_bare(m, psi0, steps, |_, psi| states.push(psi[..levels].to_vec()));
    check_drift(m, steps, drift)?;
    Ok(Trajectory {
        s_grid: (0..=steps).map(|k| k as f64 / steps as f64).collect(),
        populations: states.iter().map(|v| populations_of(v)).collect(),
        states,
        norm_drift: drift,
        model: m.clone(),
    })
}

/// Same integration as [`propagate`], keeping only the final state.
pub fn propagate_final(m: &SystemModel, psi0: &[C64], steps: usize) -> Result<FinalState> {
    m.validate()?;
    check_initial(m, psi0)?;
    check_steps(m, steps)?;
    let levels = m.levels();
    let mut last = [ZERO; 4];
    let drift = rk4_bare(m, psi0, steps, |_, psi| last = *psi);
    check_drift(m, steps, drift)?;
    let state = last[..levels].to_vec();
    Ok(FinalState { populations: populations_of(&state), state, norm_drift: drift })
}

/// `|psi|^2 - P3` for the Lambda system and `|psi|^2 - P3 - P4` for the
/// tripod, from final populations.
pub fn infidelity_of(populations: &[f64]) -> f64 {
    let total: f64 = populations.iter().sum();
    total - populations[2..].iter().sum::<f64>()
}

pub fn infidelity(t: &Trajectory) -> f64 {
    infidelity_of(t.final_populations())
}

/// Amplitudes in the instantaneous eigenbasis for a start in level `n`.
#[derive(Clone, Debug)]
pub struct AdiabaticTrajectory {
    pub s_grid: Vec<f64>,
    pub target_level: usize,
    /// `c_l(s)` in the gauge-continuous eigenbasis, ascending energy order.
    pub amplitudes: Vec<Vec<C64>>,
    /// `sum_{l != n} |c_l(s)|^2`.
    pub p_transition: Vec<f64>,
    /// Populations of `sum_l c_l |E_l(s)>` in the bare basis.
    pub bare_populations: Vec<Vec<f64>>,
    pub norm_drift: f64,
}

/// Step in `s` for differentiating degenerate eigenvectors.
const DEGENERATE_STEP: f64 = 1e-5;

/// Eigensystem and basis connection `A_lm = <E_l| d/ds |E_m>` at one node.
struct Frame {
    eig: EigenDecomposition,
    connection: Vec<Vec<C64>>,
}

fn eigensystem_at(m: &SystemModel, s: f64) -> Result<EigenDecomposition> {
    eig_hermitian(&hamiltonian_from_sample(m.levels(), m.delta, &m.sample(s)))
}

/// Reports a failed eigenvector matching as the smallest gap at `s`.
fn as_gap_collapse(e: &EigenDecomposition, s: f64) -> Error {
    let mut worst = (0, 1, f64::INFINITY);
    for l in 1..e.values.len() {
        let gap = e.values[l] - e.values[l - 1];
        if gap < worst.2 {
            worst = (l - 1, l, gap);
        }
    }
    Error::GapCollapse { s, n: worst.0, l: worst.1, gap: worst.2 }
}

fn align(m: &SystemModel, prev: &EigenDecomposition, s: f64) -> Result<EigenDecomposition> {
    let cur = eigensystem_at(m, s)?;
    gauge_continuity(prev, &cur).map_err(|_| as_gap_collapse(&cur, s))
}

/// Builds the frame at `s`, gauge-aligned to `prev`.
fn frame_at(m: &SystemModel, prev: &EigenDecomposition, s: f64) -> Result<Frame> {
    let eig = align(m, prev, s)?;
    let levels = m.levels();
    let x = m.sample(s);
    // dH/ds has the coupling pattern of H with the pulse derivatives in place
    let rates = PulseSample { omega_p: x.d_omega_p, omega_s: x.d_omega_s, omega_q: x.d_omega_q, ..x };
    let dh = hamiltonian_from_sample(levels, 0.0, &rates);
    let vectors: Vec<Vec<C64>> = (0..levels).map(|k| eig.vector(k)).collect();
    let tol = m.tol_gap();
    let mut connection = vec![vec![ZERO; levels]; levels];
    let mut degenerate = false;
    for l in 0..levels {
        for k in 0..levels {
            if l == k {
                continue;
            }
            let gap = eig.values[k] - eig.values[l];
            if gap.abs() >= tol {
                connection[l][k] = inner(&vectors[l], &dh.mat_vec(&vectors[k])) / gap;
            } else {
                degenerate = true;
            }
        }
    }
    if degenerate {
        let ahead = align(m, &eig, s + DEGENERATE_STEP)?;
        let behind = align(m, &eig, s - DEGENERATE_STEP)?;
        for l in 0..levels {
            for k in 0..levels {
                if l != k && (eig.values[k] - eig.values[l]).abs() < tol {
                    let d = inner(&vectors[l], &ahead.vector(k)) - inner(&vectors[l], &behind.vector(k));
                    connection[l][k] = d / (2.0 * DEGENERATE_STEP);
                }
            }
        }
    }
    Ok(Frame { eig, connection })
}

/// `dc/ds = -i tau E c - A c`.
fn adiabatic_rhs(f: &Frame, tau: f64, c: &[C64]) -> Vec<C64> {
    let n = c.len();
    (0..n)
        .map(|l| {
            let mut acc = c[l] * C64::new(0.0, -tau * f.eig.values[l]);
            for k in 0..n {
                acc -= f.connection[l][k] * c[k];
            }
            acc
        })
        .collect()
}

fn bare_populations(e: &EigenDecomposition, c: &[C64]) -> Vec<f64> {
    let n = c.len();
    (0..n)
        .map(|i| (0..n).map(|l| e.vectors[(i, l)] * c[l]).sum::<C64>().norm_sqr())
        .collect()
}

/// Integrates the amplitude equations in the gauge-continuous eigenbasis
/// starting from `c_l(0) = delta_ln`.
pub fn propagate_adiabatic(m: &SystemModel, n: usize, steps: usize) -> Result<AdiabaticTrajectory> {
    m.validate()?;
    let levels = m.levels();
    if n >= levels {
        return Err(Error::InvalidLevel { n, levels });
    }
    check_steps(m, steps)?;
    let tau = m.tau();
    let h = 1.0 / steps as f64;
    let start = eigensystem_at(m, 0.0)?;
    let mut f0 = frame_at(m, &start, 0.0)?;
    let mut c = vec![ZERO; levels];
    c[n] = C64::new(1.0, 0.0);
    let record = |c: &[C64], e: &EigenDecomposition| {
        let p: f64 = c.iter().enumerate().filter(|(l, _)| *l != n).map(|(_, z)| z.norm_sqr()).sum();
        (c.to_vec(), p, bare_populations(e, c))
    };
    let mut amplitudes = Vec::with_capacity(steps + 1);
    let mut p_transition = Vec::with_capacity(steps + 1);
    let mut bare = Vec::with_capacity(steps + 1);
    let mut push = |c: &[C64], e: &EigenDecomposition| {
        let (a, p, b) = record(c, e);
        amplitudes.push(a);
        p_transition.push(p);
        bare.push(b);
    };
    push(&c, &f0.eig);
    let mut drift = 0.0f64;
    let add = |c: &[C64], a: f64, k: &[C64]| c.iter().zip(k).map(|(x, y)| x + y * a).collect::<Vec<_>>();
    for k in 0..steps {
        let fm = frame_at(m, &f0.eig, (k as f64 + 0.5) * h)?;
        let f1 = frame_at(m, &fm.eig, (k + 1) as f64 * h)?;
        let k1 = adiabatic_rhs(&f0, tau, &c);
        let k2 = adiabatic_rhs(&fm, tau, &add(&c, 0.5 * h, &k1));
        let k3 = adiabatic_rhs(&fm, tau, &add(&c, 0.5 * h, &k2));
        let k4 = adiabatic_rhs(&f1, tau, &add(&c, h, &k3));
        for l in 0..levels {
            c[l] += (k1[l] + (k2[l] + k3[l]) * 2.0 + k4[l]) * (h / 6.0);
        }
        let n2: f64 = c.iter().map(|z| z.norm_sqr()).sum();
        drift = drift.max((n2 - 1.0).abs());
        push(&c, &f1.eig);
        f0 = f1;
    }
    check_drift(m, steps, drift)?;
    Ok(AdiabaticTrajectory {
        s_grid: (0..=steps).map(|k| k as f64 / steps as f64).collect(),
        target_level: n,
        amplitudes,
        p_transition,
        bare_populations: bare,
        norm_drift: drift,
    })
}

/// Mixing angle `theta(s)` of a Lambda system on `steps + 1` nodes. The
/// optimized families report their phase `alpha s`; other families report
/// `atan(P/S)`.
pub fn mixing_angle_track(m: &SystemModel, steps: usize) -> Result<Vec<(f64, f64)>> {
    if m.levels() != 3 {
        return Err(Error::WrongFamily { expected: "three-level" });
    }
    if steps == 0 {
        return Err(Error::InvalidModel("need at least one step".into()));
    }
    (0..=steps)
        .map(|k| {
            let s = k as f64 / steps as f64;
            if let PulseFamily::Optimized3 = m.pulses.family {
                return Ok((s, m.pulses.alpha * s));
            }
            let x = m.sample(s);
            let omega = x.omega();
            if omega <= m.tol_omega() {
                return Err(Error::VanishingRabiNorm { s, omega });
            }
            Ok((s, mixing_angles(&x, m.delta).theta))
        })
        .collect()
}
