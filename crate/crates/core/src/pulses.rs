//! Rabi pulse families.
//!
//! All amplitudes are angular frequencies in rad/us and time is in us, with
//! hbar = 1. Pulses are parametrized by the normalized time `s = t / tau`,
//! and every derivative reported here is a derivative with respect to `s`.
//!
//! Four families are built in:
//!
//! * `Optimized3`: `P = A sin(alpha s)`, `S = A cos(alpha s)`. The total
//!   Rabi frequency is constant and the mixing angle advances linearly,
//!   which holds the nonadiabatic transition rate of the dark state fixed.
//! * `Gaussian3`: the counter-intuitive pair
//!   `P = A exp(-(t - tau/2 - mu)^2 / sigma^2)`,
//!   `S = A exp(-(t - tau/2 + mu)^2 / sigma^2)`.
//! * `Optimized4` and `Gaussian4`: the tripod versions, where the Stokes
//!   envelope is split into `S = env cos(chi)` and `Q = env sin(chi)`.
//!
//! `A = omega0 (1 + eta)` is the fluctuated peak. Custom envelopes can be
//! supplied as closures for testing.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Optimized or Gaussian, independent of the level count.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Optimized,
    Gaussian,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Optimized => "optimized",
            Scheme::Gaussian => "gaussian",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "optimized" | "opt" => Ok(Scheme::Optimized),
            "gaussian" | "gauss" => Ok(Scheme::Gaussian),
            other => Err(format!("unknown scheme `{other}`")),
        }
    }
}

/// Amplitudes `[P, S, Q]` and their s-derivatives before the `(1 + eta)` factor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Envelope {
    pub values: [f64; 3],
    pub derivs: [f64; 3],
}

type EnvelopeFn = dyn Fn(f64) -> Envelope + Send + Sync;

/// User-supplied envelope, used for checks that need shapes outside the
/// four built-in families.
#[derive(Clone)]
pub struct CustomEnvelope {
    levels: usize,
    label: String,
    f: Arc<EnvelopeFn>,
}

impl CustomEnvelope {
    pub fn new(levels: usize, label: impl Into<String>, f: impl Fn(f64) -> Envelope + Send + Sync + 'static) -> Self {
        Self { levels, label: label.into(), f: Arc::new(f) }
    }

    /// Time-independent amplitudes.
    pub fn frozen(levels: usize, p: f64, s: f64, q: f64) -> Self {
        Self::new(levels, "frozen", move |_| Envelope { values: [p, s, q], derivs: [0.0; 3] })
    }

    /// Tripod envelope from mixing angles: `P = w sin(vt)`,
    /// `S = w cos(vt) cos(xi)`, `Q = w cos(vt) sin(xi)`. Each angle function
    /// returns its value and s-derivative.
    pub fn tripod_angles(
        omega0: f64,
        vartheta: impl Fn(f64) -> (f64, f64) + Send + Sync + 'static,
        xi: impl Fn(f64) -> (f64, f64) + Send + Sync + 'static,
    ) -> Self {
        Self::new(4, "angles", move |s| {
            let ((v, dv), (x, dx)) = (vartheta(s), xi(s));
            let (sv, cv) = v.sin_cos();
            let (sx, cx) = x.sin_cos();
            Envelope {
                values: [omega0 * sv, omega0 * cv * cx, omega0 * cv * sx],
                derivs: [
                    omega0 * cv * dv,
                    -omega0 * (sv * cx * dv + cv * sx * dx),
                    omega0 * (cv * cx * dx - sv * sx * dv),
                ],
            }
        })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

impl fmt::Debug for CustomEnvelope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomEnvelope").field("levels", &self.levels).field("label", &self.label).finish()
    }
}

#[derive(Clone, Debug)]
pub enum PulseFamily {
    Optimized3,
    Gaussian3,
    Optimized4,
    Gaussian4,
    Custom(CustomEnvelope),
}

impl PulseFamily {
    pub fn levels(&self) -> usize {
        match self {
            PulseFamily::Optimized3 | PulseFamily::Gaussian3 => 3,
            PulseFamily::Optimized4 | PulseFamily::Gaussian4 => 4,
            PulseFamily::Custom(c) => c.levels,
        }
    }

    pub fn scheme(&self) -> Option<Scheme> {
        match self {
            PulseFamily::Optimized3 | PulseFamily::Optimized4 => Some(Scheme::Optimized),
            PulseFamily::Gaussian3 | PulseFamily::Gaussian4 => Some(Scheme::Gaussian),
            PulseFamily::Custom(_) => None,
        }
    }

    pub fn for_scheme(scheme: Scheme, levels: usize) -> Result<Self> {
        match (scheme, levels) {
            (Scheme::Optimized, 3) => Ok(PulseFamily::Optimized3),
            (Scheme::Gaussian, 3) => Ok(PulseFamily::Gaussian3),
            (Scheme::Optimized, 4) => Ok(PulseFamily::Optimized4),
            (Scheme::Gaussian, 4) => Ok(PulseFamily::Gaussian4),
            (_, n) => Err(Error::InvalidPulse(format!("no built-in family with {n} levels"))),
        }
    }

    pub fn name(&self) -> String {
        match self {
            PulseFamily::Optimized3 => "optimized3".into(),
            PulseFamily::Gaussian3 => "gaussian3".into(),
            PulseFamily::Optimized4 => "optimized4".into(),
            PulseFamily::Gaussian4 => "gaussian4".into(),
            PulseFamily::Custom(c) => format!("custom:{}", c.label),
        }
    }
}

/// A parametrized set of pump (P), Stokes (S) and auxiliary (Q) envelopes.
#[derive(Clone, Debug)]
pub struct PulseSet {
    pub family: PulseFamily,
    /// Peak Rabi frequency, rad/us.
    pub omega0: f64,
    /// Operation time, us.
    pub tau: f64,
    /// Phase sweep of the optimized families, rad.
    pub alpha: f64,
    /// Branching angle between S and Q, rad.
    pub chi: f64,
    /// Gaussian width in us; `None` means `tau / 6`.
    pub sigma: Option<f64>,
    /// Gaussian half-separation in us; `None` means `tau / 10`.
    pub mu: Option<f64>,
    /// Fractional fluctuation of the peak.
    pub eta: f64,
}

/// Instantaneous amplitudes and their derivatives with respect to `s`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PulseSample {
    pub omega_p: f64,
    pub omega_s: f64,
    pub omega_q: f64,
    pub d_omega_p: f64,
    pub d_omega_s: f64,
    pub d_omega_q: f64,
}

impl PulseSample {
    pub fn amplitudes(&self) -> [f64; 3] {
        [self.omega_p, self.omega_s, self.omega_q]
    }

    pub fn derivatives(&self) -> [f64; 3] {
        [self.d_omega_p, self.d_omega_s, self.d_omega_q]
    }

    /// Total Rabi frequency `sqrt(P^2 + S^2 + Q^2)`.
    pub fn omega(&self) -> f64 {
        (self.omega_p * self.omega_p + self.omega_s * self.omega_s + self.omega_q * self.omega_q).sqrt()
    }
}

impl PulseSet {
    fn base(family: PulseFamily, omega0: f64, tau: f64) -> Self {
        Self { family, omega0, tau, alpha: FRAC_PI_2, chi: 0.0, sigma: None, mu: None, eta: 0.0 }
    }

    pub fn optimized3(omega0: f64, tau: f64) -> Self {
        Self::base(PulseFamily::Optimized3, omega0, tau)
    }

    pub fn gaussian3(omega0: f64, tau: f64) -> Self {
        Self::base(PulseFamily::Gaussian3, omega0, tau)
    }

    pub fn optimized4(omega0: f64, tau: f64, chi: f64) -> Self {
        Self { chi, ..Self::base(PulseFamily::Optimized4, omega0, tau) }
    }

    pub fn gaussian4(omega0: f64, tau: f64, chi: f64) -> Self {
        Self { chi, ..Self::base(PulseFamily::Gaussian4, omega0, tau) }
    }

    pub fn custom(envelope: CustomEnvelope, omega0: f64, tau: f64) -> Self {
        Self::base(PulseFamily::Custom(envelope), omega0, tau)
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_chi(mut self, chi: f64) -> Self {
        self.chi = chi;
        self
    }

    pub fn with_gaussian_timing(mut self, sigma: f64, mu: f64) -> Self {
        self.sigma = Some(sigma);
        self.mu = Some(mu);
        self
    }

    /// Same parameters, other scheme. Custom envelopes cannot be swapped.
    pub fn with_scheme(mut self, scheme: Scheme) -> Result<Self> {
        self.family = PulseFamily::for_scheme(scheme, self.levels())?;
        Ok(self)
    }

    pub fn levels(&self) -> usize {
        self.family.levels()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma.unwrap_or(self.tau / 6.0)
    }

    pub fn mu(&self) -> f64 {
        self.mu.unwrap_or(self.tau / 10.0)
    }

    /// Peak after the fluctuation factor.
    pub fn effective_peak(&self) -> f64 {
        self.omega0 * (1.0 + self.eta)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidPulse(msg));
        if !(self.omega0.is_finite() && self.omega0 > 0.0) {
            return bad(format!("omega0 must be positive, got {}", self.omega0));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        if !(self.eta.is_finite() && self.eta > -1.0) {
            return bad(format!("eta must exceed -1, got {}", self.eta));
        }
        if !self.alpha.is_finite() {
            return bad("alpha must be finite".into());
        }
        if matches!(self.family, PulseFamily::Gaussian3 | PulseFamily::Gaussian4) {
            let (sigma, mu) = (self.sigma(), self.mu());
            if !(sigma.is_finite() && sigma > 0.0) {
                return bad(format!("sigma must be positive, got {sigma}"));
            }
            if !(mu.is_finite() && mu >= 0.0) {
                return bad(format!("mu must be nonnegative, got {mu}"));
            }
        }
        if self.levels() == 4 && !(0.0..=FRAC_PI_2).contains(&self.chi) {
            return bad(format!("chi must lie in [0, pi/2], got {}", self.chi));
        }
        if let PulseFamily::Custom(c) = &self.family {
            if !(c.levels == 3 || c.levels == 4) {
                return bad(format!("custom envelope must have 3 or 4 levels, got {}", c.levels));
            }
        }
        Ok(())
    }

    /// Unscaled envelope at `s`, no range check.
    fn envelope(&self, s: f64) -> Envelope {
        let w = self.omega0;
        match &self.family {
            PulseFamily::Optimized3 | PulseFamily::Optimized4 => {
                let (sn, cs) = (self.alpha * s).sin_cos();
                let split = if matches!(self.family, PulseFamily::Optimized4) { self.chi.sin_cos() } else { (0.0, 1.0) };
                let env = w * cs;
                let denv = -w * self.alpha * sn;
                Envelope {
                    values: [w * sn, env * split.1, env * split.0],
                    derivs: [w * self.alpha * cs, denv * split.1, denv * split.0],
                }
            }
            PulseFamily::Gaussian3 | PulseFamily::Gaussian4 => {
                let (sigma, mu, tau) = (self.sigma(), self.mu(), self.tau);
                let t = s * tau;
                let xp = t - tau / 2.0 - mu;
                let xs = t - tau / 2.0 + mu;
                let gp = w * (-(xp * xp) / (sigma * sigma)).exp();
                let gs = w * (-(xs * xs) / (sigma * sigma)).exp();
                let dgp = gp * (-2.0 * xp / (sigma * sigma)) * tau;
                let dgs = gs * (-2.0 * xs / (sigma * sigma)) * tau;
                let split = if matches!(self.family, PulseFamily::Gaussian4) { self.chi.sin_cos() } else { (0.0, 1.0) };
                Envelope {
                    values: [gp, gs * split.1, gs * split.0],
                    derivs: [dgp, dgs * split.1, dgs * split.0],
                }
            }
            PulseFamily::Custom(c) => (c.f)(s),
        }
    }

    /// Samples the set at `s` without checking the range. The built-in
    /// formulas are smooth past the endpoints, which finite-difference
    /// stencils rely on.
    pub fn eval(&self, s: f64) -> PulseSample {
        let e = self.envelope(s);
        let k = 1.0 + self.eta;
        let q = self.levels() == 4;
        PulseSample {
            omega_p: e.values[0] * k,
            omega_s: e.values[1] * k,
            omega_q: if q { e.values[2] * k } else { 0.0 },
            d_omega_p: e.derivs[0] * k,
            d_omega_s: e.derivs[1] * k,
            d_omega_q: if q { e.derivs[2] * k } else { 0.0 },
        }
    }
}

/// Samples the pulse set at normalized time `s` in `[0, 1]`.
pub fn sample_pulse(p: &PulseSet, s: f64) -> Result<PulseSample> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::OutOfRange { s });
    }
    Ok(p.eval(s))
}

/// Largest `|Q/S - tan(chi)|` over a uniform grid, skipping nodes where `S`
/// vanishes. Zero means the two dark states never mix.
pub fn decoupling_ratio_deviation(p: &PulseSet, grid_points: usize) -> Result<f64> {
    if p.levels() != 4 {
        return Err(Error::WrongFamily { expected: "four-level" });
    }
    if grid_points < 2 {
        return Err(Error::InvalidPulse(format!("need at least 2 grid points, got {grid_points}")));
    }
    let target = p.chi.tan();
    let n = grid_points - 1;
    Ok((0..=n)
        .map(|k| p.eval(k as f64 / n as f64))
        .filter(|x| x.omega_s != 0.0)
        .map(|x| (x.omega_q / x.omega_s - target).abs())
        .fold(0.0, f64::max))
}

/// Default branching angle for the tripod runs: one third of the
/// population ends in level 3.
pub fn chi_one_third() -> f64 {
    (1.0f64 / 3.0).sqrt().acos()
}
