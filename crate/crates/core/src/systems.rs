//! Hamiltonians, mixing angles and closed-form eigensystems.
//!
//! The three-level Lambda Hamiltonian in the basis `|1>, |2>, |3>` is
//!
//! ```text
//! H = [[0,     P/2, 0  ],
//!      [P/2,   D,   S/2],
//!      [0,     S/2, 0  ]]
//! ```
//!
//! and the tripod adds `|4>` coupled to `|2>` by `Q/2`. `D` is the
//! single-photon detuning. Its eigenvalues are `0` (once or twice) and
//! `(D ± sqrt(D^2 + W^2)) / 2` with `W^2 = P^2 + S^2 + Q^2`.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::numerics::{ComplexMatrix, EigenDecomposition, C64};
use crate::pulses::{PulseSample, PulseSet};

/// A Lambda or tripod system driven by a pulse set at fixed detuning.
#[derive(Clone, Debug)]
pub struct SystemModel {
    /// Single-photon detuning, rad/us.
    pub delta: f64,
    pub pulses: PulseSet,
}

impl SystemModel {
    pub fn new(pulses: PulseSet, delta: f64) -> Result<Self> {
        let m = Self { delta, pulses };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.delta.is_finite() {
            return Err(Error::InvalidModel(format!("detuning must be finite, got {}", self.delta)));
        }
        self.pulses.validate()
    }

    pub fn levels(&self) -> usize {
        self.pulses.levels()
    }

    pub fn tau(&self) -> f64 {
        self.pulses.tau
    }

    /// Below this total Rabi frequency the mixing angles are undefined.
    pub fn tol_omega(&self) -> f64 {
        1e-9 * self.pulses.omega0.max(1.0)
    }

    /// Energy gaps below this are treated as degeneracies.
    pub fn tol_gap(&self) -> f64 {
        1e-9 * self.pulses.omega0.max(1.0)
    }

    /// Indices of the zero-energy levels in ascending order.
    pub fn dark_levels(&self) -> Range<usize> {
        1..self.levels() - 1
    }

    /// Pulse sample at `s` without the range check.
    pub fn sample(&self, s: f64) -> PulseSample {
        self.pulses.eval(s)
    }
}

fn check_s(s: f64) -> Result<()> {
    if (0.0..=1.0).contains(&s) {
        Ok(())
    } else {
        Err(Error::OutOfRange { s })
    }
}

/// Hamiltonian at normalized time `s`.
pub fn hamiltonian(m: &SystemModel, s: f64) -> Result<ComplexMatrix> {
    check_s(s)?;
    Ok(hamiltonian_from_sample(m.levels(), m.delta, &m.sample(s)))
}

pub fn hamiltonian_from_sample(levels: usize, delta: f64, x: &PulseSample) -> ComplexMatrix {
    let mut h = ComplexMatrix::zeros(levels);
    let mut set = |i: usize, j: usize, v: f64| {
        h[(i, j)] = C64::new(v, 0.0);
        h[(j, i)] = C64::new(v, 0.0);
    };
    set(0, 1, 0.5 * x.omega_p);
    set(1, 1, delta);
    set(1, 2, 0.5 * x.omega_s);
    if levels == 4 {
        set(1, 3, 0.5 * x.omega_q);
    }
    h
}

/// `H psi` using the sparsity of the Lambda/tripod coupling pattern.
/// Only the first `levels` entries are used.
#[inline]
pub fn apply_hamiltonian(levels: usize, delta: f64, x: &PulseSample, psi: &[C64; 4]) -> [C64; 4] {
    let (p, s, q) = (0.5 * x.omega_p, 0.5 * x.omega_s, 0.5 * x.omega_q);
    let mut out = [C64::new(0.0, 0.0); 4];
    out[0] = psi[1] * p;
    out[1] = psi[0] * p + psi[1] * delta + psi[2] * s;
    out[2] = psi[1] * s;
    if levels == 4 {
        out[1] += psi[3] * q;
        out[3] = psi[1] * q;
    }
    out
}

/// Mixing angles, all in `[0, pi/2]` for nonnegative amplitudes.
///
/// `tan theta = P/S`, `tan 2phi = W/D`, `tan xi = Q/S`,
/// `tan vartheta = P / sqrt(S^2 + Q^2)`. Without the auxiliary pulse
/// `vartheta` coincides with `theta` and `xi` is zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixingAngles {
    pub theta: f64,
    pub phi: f64,
    pub vartheta: f64,
    pub xi: f64,
}

/// Mixing-angle derivatives with respect to `s`, plus `W` and `dW/ds`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AngleRates {
    pub omega: f64,
    pub d_omega: f64,
    pub d_theta: f64,
    pub d_phi: f64,
    pub d_vartheta: f64,
    pub d_xi: f64,
}

pub fn mixing_angles(x: &PulseSample, delta: f64) -> MixingAngles {
    let rho = x.omega_s.hypot(x.omega_q);
    MixingAngles {
        theta: x.omega_p.atan2(x.omega_s),
        phi: 0.5 * x.omega().atan2(delta),
        vartheta: x.omega_p.atan2(rho),
        xi: x.omega_q.atan2(x.omega_s),
    }
}

/// Chain-rule derivatives of the mixing angles. Requires `W > 0`.
pub fn angle_rates(x: &PulseSample, delta: f64) -> AngleRates {
    let (p, s, q) = (x.omega_p, x.omega_s, x.omega_q);
    let (dp, ds, dq) = (x.d_omega_p, x.d_omega_s, x.d_omega_q);
    let omega = x.omega();
    let d_omega = (p * dp + s * ds + q * dq) / omega;
    let rho2 = s * s + q * q;
    let rho = rho2.sqrt();
    let (d_xi, d_rho) = if rho2 > 0.0 { ((s * dq - q * ds) / rho2, (s * ds + q * dq) / rho) } else { (0.0, 0.0) };
    AngleRates {
        omega,
        d_omega,
        d_theta: if p * p + s * s > 0.0 { (s * dp - p * ds) / (p * p + s * s) } else { 0.0 },
        d_phi: 0.5 * delta * d_omega / (delta * delta + omega * omega),
        d_vartheta: (rho * dp - p * d_rho) / (omega * omega),
        d_xi,
    }
}

/// Bright-state energies `(lambda_-, lambda_+)`, free of cancellation.
pub fn bright_energies(delta: f64, omega: f64) -> (f64, f64) {
    let (um, up) = bright_roots(delta, omega);
    (0.5 * um, 0.5 * up)
}

/// `u_± = D ± sqrt(D^2 + W^2)`, i.e. twice the bright energies.
pub fn bright_roots(delta: f64, omega: f64) -> (f64, f64) {
    let r = delta.hypot(omega);
    if delta >= 0.0 {
        let up = delta + r;
        (-(omega * omega) / up, up)
    } else {
        let um = delta - r;
        (um, -(omega * omega) / um)
    }
}

fn real(v: &[f64]) -> Vec<C64> {
    v.iter().map(|&x| C64::new(x, 0.0)).collect()
}

/// Closed-form eigensystem in ascending energy order: `[lambda_-, lambda_0,
/// lambda_+]` for the Lambda system and `[lambda_-, lambda_1, lambda_2,
/// lambda_+]` for the tripod.
///
/// Vectors follow the textbook sign conventions and are not gauge-fixed.
pub fn analytic_eigensystem(m: &SystemModel, s: f64) -> Result<(EigenDecomposition, MixingAngles)> {
    check_s(s)?;
    let x = m.sample(s);
    let omega = x.omega();
    if omega <= m.tol_omega() {
        return Err(Error::VanishingRabiNorm { s, omega });
    }
    let a = mixing_angles(&x, m.delta);
    let (lm, lp) = bright_energies(m.delta, omega);
    let (sp, cp) = a.phi.sin_cos();
    let (values, cols) = if m.levels() == 3 {
        let (st, ct) = a.theta.sin_cos();
        (
            vec![lm, 0.0, lp],
            vec![real(&[st * cp, -sp, ct * cp]), real(&[ct, 0.0, -st]), real(&[st * sp, cp, ct * sp])],
        )
    } else {
        let (sv, cv) = a.vartheta.sin_cos();
        let (sx, cx) = a.xi.sin_cos();
        (
            vec![lm, 0.0, 0.0, lp],
            vec![
                real(&[cp * sv, -sp, cp * cv * cx, cp * cv * sx]),
                real(&[cv, 0.0, -sv * cx, -sv * sx]),
                real(&[0.0, 0.0, sx, -cx]),
                real(&[sv * sp, cp, sp * cv * cx, sp * cv * sx]),
            ],
        )
    };
    Ok((EigenDecomposition { values, vectors: ComplexMatrix::from_columns(&cols) }, a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{aligned_distance, eig_hermitian};
    use crate::pulses::{CustomEnvelope, PulseSet};
    use std::f64::consts::{FRAC_PI_4, PI};

    fn frozen(levels: usize, p: f64, s: f64, q: f64, delta: f64) -> SystemModel {
        SystemModel::new(PulseSet::custom(CustomEnvelope::frozen(levels, p, s, q), 1.0, 1.0), delta).unwrap()
    }

    fn re(h: &ComplexMatrix, i: usize, j: usize) -> f64 {
        assert_eq!(h[(i, j)].im, 0.0);
        h[(i, j)].re
    }

    #[test]
    fn detuning_only() {
        let h = hamiltonian(&frozen(3, 0.0, 0.0, 0.0, 2.0), 0.3).unwrap();
        let want = [[0.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 0.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(re(&h, i, j), want[i][j]);
            }
        }
    }

    #[test]
    fn lambda_couplings() {
        let h = hamiltonian(&frozen(3, 3.0, 4.0, 0.0, 0.0), 0.0).unwrap();
        assert_eq!((re(&h, 0, 1), re(&h, 1, 2), re(&h, 0, 2)), (1.5, 2.0, 0.0));
        assert!(h.is_hermitian(0.0));
    }

    #[test]
    fn tripod_couplings() {
        let h = hamiltonian(&frozen(4, 1.0, 2.0, 2.0, 2.0), 1.0).unwrap();
        assert_eq!((re(&h, 0, 1), re(&h, 1, 2), re(&h, 1, 3), re(&h, 1, 1)), (0.5, 1.0, 1.0, 2.0));
        assert_eq!((re(&h, 3, 1), re(&h, 2, 3), re(&h, 0, 3)), (1.0, 0.0, 0.0));
        assert!(matches!(hamiltonian(&frozen(4, 1.0, 2.0, 2.0, 2.0), 1.1), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn structured_product_matches_dense() {
        let m = SystemModel::new(PulseSet::gaussian4(35.0, 4.0, 0.7), 3.0).unwrap();
        let psi = [C64::new(0.3, -0.1), C64::new(0.2, 0.5), C64::new(-0.4, 0.1), C64::new(0.6, 0.2)];
        let x = m.sample(0.43);
        let dense = hamiltonian_from_sample(4, 3.0, &x).mat_vec(&psi);
        let fast = apply_hamiltonian(4, 3.0, &x, &psi);
        for k in 0..4 {
            assert!((dense[k] - fast[k]).norm() < 1e-14);
        }
    }

    #[test]
    fn stokes_only_dark_state_is_level_one() {
        let (e, a) = analytic_eigensystem(&frozen(3, 0.0, 35.0, 0.0, 0.0), 0.5).unwrap();
        assert_eq!(a.theta, 0.0);
        assert!((a.phi - FRAC_PI_4).abs() < 1e-15);
        assert_eq!(e.vector(1), real(&[1.0, 0.0, 0.0]));
    }

    #[test]
    fn equal_pulses_dark_state() {
        let (e, _) = analytic_eigensystem(&frozen(3, 2.0, 2.0, 0.0, 0.0), 0.5).unwrap();
        let h = 0.5f64.sqrt();
        assert!(aligned_distance(&e.vector(1), &real(&[h, 0.0, -h])) < 1e-15);
        let w = 8f64.sqrt();
        assert!((e.values[0] + w / 2.0).abs() < 1e-14 && (e.values[2] - w / 2.0).abs() < 1e-14);
    }

    #[test]
    fn detuned_tripod_example() {
        let r2 = 2f64.sqrt();
        let m = frozen(4, 1.0, r2, r2, 3.0);
        let (e, a) = analytic_eigensystem(&m, 0.0).unwrap();
        let r14 = 14f64.sqrt();
        assert!((e.values[3] - (3.0 + r14) / 2.0).abs() < 1e-14);
        assert!((e.values[0] - (3.0 - r14) / 2.0).abs() < 1e-14);
        assert!((e.values[3] - 3.3708).abs() < 1e-4 && (e.values[0] + 0.3708).abs() < 1e-4);
        assert!((a.xi - FRAC_PI_4).abs() < 1e-15);
        assert!((a.vartheta - 0.5f64.atan()).abs() < 1e-15);
        let n = eig_hermitian(&hamiltonian(&m, 0.0).unwrap()).unwrap();
        for k in 0..4 {
            assert!((n.values[k] - e.values[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn vanishing_pulses() {
        let m = frozen(3, 0.0, 0.0, 0.0, 1.0);
        assert!(matches!(analytic_eigensystem(&m, 0.5), Err(Error::VanishingRabiNorm { .. })));
    }

    fn families() -> Vec<SystemModel> {
        let chi = crate::pulses::chi_one_third();
        let mut out = Vec::new();
        for delta in [0.0, 2.0 * PI, -7.5, 58.1] {
            for p in [
                PulseSet::optimized3(35.0, 4.0),
                PulseSet::gaussian3(35.0, 4.0),
                PulseSet::optimized4(35.0, 4.0, chi),
                PulseSet::gaussian4(30.0, 7.4, PI / 6.0),
            ] {
                out.push(SystemModel::new(p, delta).unwrap());
            }
        }
        out
    }

    #[test]
    fn analytic_matches_numeric() {
        for m in families() {
            for k in 0..=100 {
                let s = k as f64 / 100.0;
                let (a, _) = analytic_eigensystem(&m, s).unwrap();
                let h = hamiltonian(&m, s).unwrap();
                let n = eig_hermitian(&h).unwrap();
                for j in 0..m.levels() {
                    assert!((a.values[j] - n.values[j]).abs() < 1e-10, "{:?} s={s} level {j}", m.pulses.family);
                    let d = aligned_distance(&a.vector(j), &n.vector(j));
                    assert!(d < 1e-9, "{:?} delta={} s={s} level {j}: {d:e}", m.pulses.family, m.delta);
                }
                assert!(a.max_residual(&h) < 1e-12);
            }
        }
    }

    #[test]
    fn dark_states_avoid_excited_level() {
        for m in families() {
            for k in 0..=20 {
                let s = k as f64 / 20.0;
                let (a, _) = analytic_eigensystem(&m, s).unwrap();
                let n = eig_hermitian(&hamiltonian(&m, s).unwrap()).unwrap();
                for j in m.dark_levels() {
                    assert_eq!(a.vector(j)[1].norm(), 0.0);
                    assert!(n.vector(j)[1].norm() < 1e-12);
                    assert!(n.values[j].abs() < 1e-12);
                    assert_eq!(a.values[j], 0.0);
                }
                if m.levels() == 4 {
                    assert_eq!(a.vector(2)[0].norm(), 0.0);
                    assert!(n.vector(2)[0].norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn angle_rates_match_finite_differences() {
        for m in families() {
            for s in [0.1, 0.37, 0.5, 0.82] {
                let h = 1e-6;
                let r = angle_rates(&m.sample(s), m.delta);
                let a = |s| mixing_angles(&m.sample(s), m.delta);
                let (ap, am) = (a(s + h), a(s - h));
                let fd = |f: fn(&MixingAngles) -> f64| (f(&ap) - f(&am)) / (2.0 * h);
                let scale = r.d_theta.abs().max(1.0);
                assert!((fd(|a| a.theta) - r.d_theta).abs() < 1e-6 * scale);
                assert!((fd(|a| a.phi) - r.d_phi).abs() < 1e-6 * scale);
                assert!((fd(|a| a.vartheta) - r.d_vartheta).abs() < 1e-6 * scale);
                assert!((fd(|a| a.xi) - r.d_xi).abs() < 1e-6 * scale);
            }
        }
    }
}
