//! Adiabatic frame of the tripod and the mixing of its two dark states.
//!
//! With `U = [lambda_1, lambda_2, lambda_+, lambda_-]` the amplitudes
//! `c = U^T psi` obey `i dc/dt = H~ c` where
//!
//! ```text
//! H~ = U^T H U + i (dU^T/dt) U
//! ```
//!
//! Within the zero-energy pair only `H~_12 = i xi' sin(vartheta)` survives,
//! so the dark states rotate into each other by the accumulated angle
//! `Theta(t) = int xi' sin(vartheta) dt'`. Holding `Q/S` fixed makes `xi`
//! constant and the dark states never mix.

use crate::error::{Error, Result};
use crate::numerics::{ComplexMatrix, C64};
use crate::systems::{angle_rates, hamiltonian_from_sample, mixing_angles, AngleRates, MixingAngles, SystemModel};

#[derive(Clone, Debug)]
pub struct FrameTransform {
    pub s: f64,
    pub tau: f64,
    /// Columns `[lambda_1, lambda_2, lambda_+, lambda_-]`.
    pub u: ComplexMatrix,
    /// Generator in the adiabatic frame, rad/us.
    pub h_tilde: ComplexMatrix,
    pub angles: MixingAngles,
    pub rates: AngleRates,
}

impl FrameTransform {
    /// Dark-dark coupling per unit `s`: `Im H~_12 * tau`, which equals
    /// `xi'(s) sin(vartheta)`.
    pub fn dark_coupling(&self) -> f64 {
        self.h_tilde[(0, 1)].im * self.tau
    }

    /// `max |U^H U - I|`.
    pub fn unitarity_defect(&self) -> f64 {
        (&self.u.adjoint() * &self.u).sub(&ComplexMatrix::identity(4)).max_abs()
    }
}

fn require_tripod(m: &SystemModel) -> Result<()> {
    if m.levels() == 4 {
        Ok(())
    } else {
        Err(Error::WrongFamily { expected: "four-level" })
    }
}

/// `U` and its partial derivatives along `(vartheta, xi, phi)`.
fn frame_columns(a: &MixingAngles) -> [[[f64; 4]; 4]; 4] {
    let (sv, cv) = a.vartheta.sin_cos();
    let (sx, cx) = a.xi.sin_cos();
    let (sp, cp) = a.phi.sin_cos();
    let value = [
        [cv, 0.0, -sv * cx, -sv * sx],
        [0.0, 0.0, sx, -cx],
        [sv * sp, cp, sp * cv * cx, sp * cv * sx],
        [cp * sv, -sp, cp * cv * cx, cp * cv * sx],
    ];
    let d_vartheta = [
        [-sv, 0.0, -cv * cx, -cv * sx],
        [0.0; 4],
        [cv * sp, 0.0, -sp * sv * cx, -sp * sv * sx],
        [cp * cv, 0.0, -cp * sv * cx, -cp * sv * sx],
    ];
    let d_xi = [
        [0.0, 0.0, sv * sx, -sv * cx],
        [0.0, 0.0, cx, sx],
        [0.0, 0.0, -sp * cv * sx, sp * cv * cx],
        [0.0, 0.0, -cp * cv * sx, cp * cv * cx],
    ];
    let d_phi = [
        [0.0; 4],
        [0.0; 4],
        [sv * cp, -sp, cp * cv * cx, cp * cv * sx],
        [-sp * sv, -cp, -sp * cv * cx, -sp * cv * sx],
    ];
    [value, d_vartheta, d_xi, d_phi]
}

/// Adiabatic-frame transformation of a tripod at normalized time `s`.
pub fn frame_transform(m: &SystemModel, s: f64) -> Result<FrameTransform> {
    require_tripod(m)?;
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::OutOfRange { s });
    }
    let x = m.sample(s);
    let omega = x.omega();
    if omega <= m.tol_omega() {
        return Err(Error::VanishingRabiNorm { s, omega });
    }
    let angles = mixing_angles(&x, m.delta);
    let rates = angle_rates(&x, m.delta);
    let [value, dv, dx, dp] = frame_columns(&angles);
    let tau = m.tau();
    // columns of U and of dU/dt
    let u = ComplexMatrix::from_fn(4, |i, j| C64::new(value[j][i], 0.0));
    let du = ComplexMatrix::from_fn(4, |i, j| {
        C64::new((dv[j][i] * rates.d_vartheta + dx[j][i] * rates.d_xi + dp[j][i] * rates.d_phi) / tau, 0.0)
    });
    let h = hamiltonian_from_sample(4, m.delta, &x);
    let ut = u.adjoint();
    let h_tilde = (&(&ut * &h) * &u).add(&(&du.adjoint() * &u).scale(C64::new(0.0, 1.0)));
    Ok(FrameTransform { s, tau, u, h_tilde, angles, rates })
}

/// Accumulated dark-state mixing angle on a uniform grid.
#[derive(Clone, Debug)]
pub struct DarkMixing {
    pub grid: Vec<f64>,
    /// `xi'(s) sin(vartheta(s))`, rad per unit `s`.
    pub integrand: Vec<f64>,
    /// `Theta(s)` at each grid node, starting at 0.
    pub theta_big: Vec<f64>,
    /// Difference between the last two refinement levels summed over the
    /// grid, an estimate of the quadrature error in `Theta(1)`.
    pub refinement_error: f64,
}

impl DarkMixing {
    pub fn theta_final(&self) -> f64 {
        *self.theta_big.last().unwrap()
    }

    /// Populations `(cos^2 Theta, sin^2 Theta)` of the two dark states for a
    /// start in `lambda_1`.
    pub fn predicted_populations(&self) -> Vec<(f64, f64)> {
        self.theta_big.iter().map(|t| (t.cos().powi(2), t.sin().powi(2))).collect()
    }
}

/// Tolerance on the quadrature of `Theta(1)`.
pub const THETA_TOL: f64 = 1e-9;

const MAX_PANELS: usize = 1 << 14;

fn dark_integrand(m: &SystemModel, s: f64) -> Result<f64> {
    if let Some(g) = dark_integrand_at(m, s)? {
        return Ok(g);
    }
    // S and Q both vanish here, so xi is undefined; take the limit from the
    // interior by quadratic extrapolation.
    let step = if s > 0.5 { -EDGE_STEP } else { EDGE_STEP };
    let mut g = [0.0; 3];
    for (k, gk) in g.iter_mut().enumerate() {
        let sk = s + (k + 1) as f64 * step;
        *gk = dark_integrand_at(m, sk)?.ok_or(Error::VanishingRabiNorm { s: sk, omega: 0.0 })?;
    }
    Ok(3.0 * g[0] - 3.0 * g[1] + g[2])
}

const EDGE_STEP: f64 = 1e-4;

/// `xi' sin(vartheta)` at `s`, or `None` where `sqrt(S^2 + Q^2)` is below
/// the amplitude tolerance.
fn dark_integrand_at(m: &SystemModel, s: f64) -> Result<Option<f64>> {
    let x = m.sample(s);
    let omega = x.omega();
    if omega <= m.tol_omega() {
        return Err(Error::VanishingRabiNorm { s, omega });
    }
    if x.omega_s.hypot(x.omega_q) <= m.tol_omega() {
        return Ok(None);
    }
    let r = angle_rates(&x, m.delta);
    Ok(Some(r.d_xi * mixing_angles(&x, m.delta).vartheta.sin()))
}

/// Trapezoid rule over `[a, b]` with `panels` panels.
fn trapezoid(f: &impl Fn(f64) -> Result<f64>, a: f64, b: f64, fa: f64, fb: f64, panels: usize) -> Result<f64> {
    let h = (b - a) / panels as f64;
    let mut acc = 0.5 * (fa + fb);
    for k in 1..panels {
        acc += f(a + k as f64 * h)?;
    }
    Ok(acc * h)
}

/// Integrates `xi' sin(vartheta)` over a uniform grid of `grid_points`
/// nodes. Each cell is refined by panel doubling until the Richardson
/// estimate settles, so `Theta(1)` is accurate to [`THETA_TOL`].
pub fn dark_mixing_angle(m: &SystemModel, grid_points: usize) -> Result<DarkMixing> {
    require_tripod(m)?;
    if grid_points < 16 {
        return Err(Error::InvalidModel(format!("need at least 16 grid points, got {grid_points}")));
    }
    let n = grid_points - 1;
    let grid: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
    let integrand = grid.iter().map(|&s| dark_integrand(m, s)).collect::<Result<Vec<_>>>()?;
    let f = |s: f64| dark_integrand(m, s);
    let cell_tol = THETA_TOL / (10.0 * n as f64);
    let mut theta_big = vec![0.0; grid_points];
    let mut refinement_error = 0.0;
    for k in 0..n {
        let (a, b, fa, fb) = (grid[k], grid[k + 1], integrand[k], integrand[k + 1]);
        let mut panels = 1;
        let mut coarse = trapezoid(&f, a, b, fa, fb, panels)?;
        let (value, err) = loop {
            panels *= 2;
            let fine = trapezoid(&f, a, b, fa, fb, panels)?;
            let err = (fine - coarse).abs() / 3.0;
            if err <= cell_tol || panels >= MAX_PANELS {
                break (fine + (fine - coarse) / 3.0, err);
            }
            coarse = fine;
        };
        theta_big[k + 1] = theta_big[k] + value;
        refinement_error += err;
    }
    Ok(DarkMixing { grid, integrand, theta_big, refinement_error })
}

/// Integrates the reduced dark-pair equations `c1' = -g c2`, `c2' = g c1`
/// with `g = xi' sin(vartheta)` by RK4 in `s`, starting from `(1, 0)`.
/// Returns the amplitudes at `steps + 1` uniform nodes.
pub fn reduced_dark_evolution(m: &SystemModel, steps: usize) -> Result<Vec<[f64; 2]>> {
    require_tripod(m)?;
    if steps == 0 {
        return Err(Error::InvalidModel("need at least one step".into()));
    }
    let h = 1.0 / steps as f64;
    let rhs = |g: f64, c: [f64; 2]| [-g * c[1], g * c[0]];
    let mut c = [1.0, 0.0];
    let mut out = Vec::with_capacity(steps + 1);
    out.push(c);
    let mut g0 = dark_integrand(m, 0.0)?;
    for k in 0..steps {
        let gm = dark_integrand(m, (k as f64 + 0.5) * h)?;
        let g1 = dark_integrand(m, (k + 1) as f64 * h)?;
        let k1 = rhs(g0, c);
        let k2 = rhs(gm, [c[0] + 0.5 * h * k1[0], c[1] + 0.5 * h * k1[1]]);
        let k3 = rhs(gm, [c[0] + 0.5 * h * k2[0], c[1] + 0.5 * h * k2[1]]);
        let k4 = rhs(g1, [c[0] + h * k3[0], c[1] + h * k3[1]]);
        for i in 0..2 {
            c[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out.push(c);
        g0 = g1;
    }
    Ok(out)
}
