//! Time profiles on either side of the bang surface: conformal factors, masses,
//! effective masses `q = m²Ω²`, FLRW conformal time and the Liouville scaling.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numerics::fit;
use crate::numerics::MonotoneCubic;

/// Which side of `τ = 0` a profile lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    /// Previous aeon, `τ ∈ [τ₋, 0)`.
    Hat,
    /// Present aeon, `τ ∈ (0, τ₊]`.
    Check,
}

impl Side {
    /// Sign of `τ` on this side.
    pub fn sign(self) -> f64 {
        match self {
            Side::Hat => -1.0,
            Side::Check => 1.0,
        }
    }

    /// The paper's `η̄`: `+1` on the hat side, `−1` on the check side.
    pub fn eta(self) -> f64 {
        -self.sign()
    }

    pub fn contains(self, tau: f64) -> bool {
        match self {
            Side::Hat => tau < 0.0,
            Side::Check => tau > 0.0,
        }
    }

    pub fn of(tau: f64) -> Option<Side> {
        if tau < 0.0 {
            Some(Side::Hat)
        } else if tau > 0.0 {
            Some(Side::Check)
        } else {
            None
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Side::Hat => "hat",
            Side::Check => "check",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Asymptotics {
    /// `Ω → 0`.
    Bounce,
    /// `∫|Ω| = ∞`.
    CccExpansion,
    /// `∫|Ω| < ∞` while `Ω → ∞`.
    BigRip,
    Generic,
}

pub type ProfileFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Cosmological scale factors `a(t)` in physical time.
#[derive(Clone)]
pub enum ScaleFactor {
    /// `a = C e^{Ht}`.
    DeSitter { c: f64, h: f64 },
    /// `a = C cosh(Ht)`.
    Cosh { c: f64, h: f64 },
    /// `a = C t^η`.
    PowerLaw { c: f64, eta: f64 },
    Unit,
    /// User-supplied `a`, `a′` with power-law exponents for the tails
    /// (`a ~ t^p` as `t → ∞` and `a ~ t^{p0}` as `t → 0`).
    Custom {
        a: ProfileFn,
        da: ProfileFn,
        tail_exponent: Option<f64>,
        origin_exponent: Option<f64>,
    },
}

impl fmt::Debug for ScaleFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScaleFactor::DeSitter { c, h } => write!(f, "DeSitter(C={c}, H={h})"),
            ScaleFactor::Cosh { c, h } => write!(f, "Cosh(C={c}, H={h})"),
            ScaleFactor::PowerLaw { c, eta } => write!(f, "PowerLaw(C={c}, eta={eta})"),
            ScaleFactor::Unit => write!(f, "Unit"),
            ScaleFactor::Custom { .. } => write!(f, "Custom"),
        }
    }
}

impl ScaleFactor {
    pub fn a(&self, t: f64) -> f64 {
        match self {
            ScaleFactor::DeSitter { c, h } => c * (h * t).exp(),
            ScaleFactor::Cosh { c, h } => c * (h * t).cosh(),
            ScaleFactor::PowerLaw { c, eta } => c * t.powf(*eta),
            ScaleFactor::Unit => 1.0,
            ScaleFactor::Custom { a, .. } => a(t),
        }
    }

    pub fn da(&self, t: f64) -> f64 {
        match self {
            ScaleFactor::DeSitter { c, h } => c * h * (h * t).exp(),
            ScaleFactor::Cosh { c, h } => c * h * (h * t).sinh(),
            ScaleFactor::PowerLaw { c, eta } => c * eta * t.powf(eta - 1.0),
            ScaleFactor::Unit => 0.0,
            ScaleFactor::Custom { da, .. } => da(t),
        }
    }

    /// `∫_T^∞ ds/a(s)` when known in closed form or from the tail exponent.
    fn tail(&self, t: f64) -> Option<f64> {
        match self {
            ScaleFactor::DeSitter { c, h } => Some((-h * t).exp() / (c * h)),
            ScaleFactor::Cosh { c, h } => {
                let s = (h * t).sinh();
                let angle = if s > 0.0 { (1.0 / s).atan() } else { FRAC_PI_2 - s.atan() };
                Some(angle / (c * h))
            }
            ScaleFactor::PowerLaw { c, eta } if *eta > 1.0 => {
                Some(t.powf(1.0 - eta) / (c * (eta - 1.0)))
            }
            ScaleFactor::Custom { a, tail_exponent: Some(p), .. } if *p > 1.0 => {
                Some(t / (a(t) * (p - 1.0)))
            }
            _ => None,
        }
    }

    fn has_closed_tail(&self) -> bool {
        matches!(self, ScaleFactor::DeSitter { .. } | ScaleFactor::Cosh { .. })
            || matches!(self, ScaleFactor::PowerLaw { eta, .. } if *eta > 1.0)
    }

    /// `∫_0^T ds/a(s)`.
    fn from_origin(&self, t: f64) -> Result<f64> {
        match self {
            ScaleFactor::PowerLaw { c, eta } => {
                if *eta >= 1.0 {
                    return Err(Error::ConformalTimeUndefined(format!(
                        "1/a is not integrable at t = 0 for exponent {eta}"
                    )));
                }
                Ok(t.powf(1.0 - eta) / (c * (1.0 - eta)))
            }
            ScaleFactor::Unit => Ok(t),
            ScaleFactor::Custom { origin_exponent, .. } => {
                if origin_exponent.is_some_and(|p| p >= 1.0) {
                    return Err(Error::ConformalTimeUndefined(
                        "1/a is not integrable at t = 0".into(),
                    ));
                }
                Ok(self.quad(0.0, t))
            }
            _ => Ok(self.quad(0.0, t)),
        }
    }

    fn quad(&self, lo: f64, hi: f64) -> f64 {
        if hi == lo {
            return 0.0;
        }
        let scale = (hi - lo).abs() / self.a(0.5 * (lo + hi)).abs().max(1e-300);
        quadrature::integrate(|s| 1.0 / self.a(s), lo, hi, 1e-15 * scale.max(1e-300)).integral
    }
}

/// How the hat-side conformal time handles `t > T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HatHorizon {
    /// Integrate to `T` and add the analytic tail `∫_T^∞`.
    Infinite,
    /// The aeon ends at `T`: `τ(T) = 0`.
    Truncated,
}

/// Conformal-time map `t ↦ τ` of one side, invertible by safeguarded Newton.
#[derive(Debug, Clone)]
pub struct ConformalClock {
    scale: ScaleFactor,
    side: Side,
    cut: f64,
    horizon: HatHorizon,
    tail_at_cut: f64,
}

impl ConformalClock {
    pub fn tau_of_t(&self, t: f64) -> f64 {
        match self.side {
            Side::Hat => {
                if self.horizon == HatHorizon::Infinite && self.scale.has_closed_tail() {
                    return -self.scale.tail(t).unwrap_or(0.0);
                }
                if t >= self.cut {
                    match self.horizon {
                        HatHorizon::Truncated => 0.0,
                        HatHorizon::Infinite => -self.scale.tail(t).unwrap_or(0.0),
                    }
                } else {
                    -(self.scale.quad(t, self.cut) + self.tail_at_cut)
                }
            }
            Side::Check => self.scale.from_origin(t).unwrap_or(f64::NAN),
        }
    }

    pub fn t_of_tau(&self, tau: f64) -> f64 {
        if let Some(t) = self.closed_inverse(tau) {
            return t;
        }
        let (mut lo, mut hi) = match self.side {
            Side::Hat => (self.cut.min(0.0) - 1.0, self.cut),
            Side::Check => (0.0, 1.0),
        };
        if self.side == Side::Hat {
            while self.tau_of_t(lo) > tau && lo > -1e12 {
                lo = 2.0 * lo - 1.0;
            }
            if self.horizon == HatHorizon::Infinite {
                let mut step = 1.0;
                while self.tau_of_t(hi) < tau && step < 1e12 {
                    hi += step;
                    step *= 2.0;
                }
            }
        } else {
            while self.tau_of_t(hi) < tau && hi < 1e12 {
                hi *= 2.0;
            }
        }
        let mut t = 0.5 * (lo + hi);
        for _ in 0..200 {
            let r = self.tau_of_t(t) - tau;
            if r > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            let newton = t - r * self.scale.a(t);
            if r == 0.0 || (newton - t).abs() <= 4.0 * f64::EPSILON * t.abs() {
                return newton;
            }
            let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            t = next;
        }
        t
    }
}

impl ConformalClock {
    /// `t(τ)` for the families whose conformal time inverts in closed form.
    fn closed_inverse(&self, tau: f64) -> Option<f64> {
        match (self.side, &self.scale) {
            (Side::Hat, ScaleFactor::DeSitter { c, h }) if self.horizon == HatHorizon::Infinite => {
                Some(-(-tau * c * h).ln() / h)
            }
            (Side::Hat, ScaleFactor::Cosh { c, h }) if self.horizon == HatHorizon::Infinite => {
                // τ = −θ/(Ch) with θ = arccot(sinh(Ht)) ∈ (0, π).
                let theta = -tau * c * h;
                Some((1.0 / theta.tan()).asinh() / h)
            }
            (Side::Check, ScaleFactor::PowerLaw { c, eta }) if *eta < 1.0 => {
                Some((tau * c * (1.0 - eta)).powf(1.0 / (1.0 - eta)))
            }
            (Side::Check, ScaleFactor::Unit) => Some(tau),
            _ => None,
        }
    }
}

#[derive(Clone)]
pub enum FactorShape {
    Constant(f64),
    /// `coeff·|τ|^exponent`.
    Power { coeff: f64, exponent: f64 },
    /// `sign·a(t(τ))`.
    Clock { clock: Arc<ConformalClock>, sign: f64 },
    Samples(Arc<MonotoneCubic>),
    Custom { omega: ProfileFn, d_omega: ProfileFn },
}

/// `Ω(τ)` on one side of the bang surface.
#[derive(Clone)]
pub struct ConformalFactor {
    pub side: Side,
    pub shape: FactorShape,
    pub asymptotics: Asymptotics,
}

impl fmt::Debug for ConformalFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let shape = match &self.shape {
            FactorShape::Constant(c) => format!("Constant({c})"),
            FactorShape::Power { coeff, exponent } => format!("Power({coeff}|τ|^{exponent})"),
            FactorShape::Clock { clock, sign } => format!("Clock({:?}, sign {sign})", clock.scale),
            FactorShape::Samples(_) => "Samples".into(),
            FactorShape::Custom { .. } => "Custom".into(),
        };
        write!(f, "ConformalFactor({}, {shape}, {:?})", self.side.name(), self.asymptotics)
    }
}

impl ConformalFactor {
    pub fn constant(side: Side, value: f64) -> Self {
        ConformalFactor { side, shape: FactorShape::Constant(value), asymptotics: Asymptotics::Generic }
    }

    pub fn power(side: Side, coeff: f64, exponent: f64) -> Self {
        let asymptotics = if exponent > 0.0 {
            Asymptotics::Bounce
        } else if exponent <= -1.0 {
            Asymptotics::CccExpansion
        } else if exponent < 0.0 {
            Asymptotics::BigRip
        } else {
            Asymptotics::Generic
        };
        ConformalFactor { side, shape: FactorShape::Power { coeff, exponent }, asymptotics }
    }

    /// Monotone-cubic interpolation of tabulated `(τ, Ω)` samples.
    pub fn samples(side: Side, tau: Vec<f64>, omega: Vec<f64>) -> Result<Self> {
        if tau.iter().any(|t| !side.contains(*t)) {
            return Err(Error::Validation(format!("samples must lie on the {} side", side.name())));
        }
        if omega.iter().any(|w| *w == 0.0) || omega.windows(2).any(|w| w[0] * w[1] <= 0.0) {
            return Err(Error::Validation("sampled Ω must be nonzero with constant sign".into()));
        }
        Ok(ConformalFactor {
            side,
            shape: FactorShape::Samples(Arc::new(MonotoneCubic::new(tau, omega)?)),
            asymptotics: Asymptotics::Generic,
        })
    }

    pub fn custom(side: Side, omega: ProfileFn, d_omega: ProfileFn, asymptotics: Asymptotics) -> Self {
        ConformalFactor { side, shape: FactorShape::Custom { omega, d_omega }, asymptotics }
    }

    pub fn with_asymptotics(mut self, asymptotics: Asymptotics) -> Self {
        self.asymptotics = asymptotics;
        self
    }

    pub fn omega(&self, tau: f64) -> f64 {
        match &self.shape {
            FactorShape::Constant(c) => *c,
            FactorShape::Power { coeff, exponent } => coeff * tau.abs().powf(*exponent),
            FactorShape::Clock { clock, sign } => sign * clock.scale.a(clock.t_of_tau(tau)),
            FactorShape::Samples(s) => s.eval(tau),
            FactorShape::Custom { omega, .. } => omega(tau),
        }
    }

    pub fn d_omega(&self, tau: f64) -> f64 {
        match &self.shape {
            FactorShape::Constant(_) => 0.0,
            FactorShape::Power { coeff, exponent } => {
                coeff * exponent * tau.abs().powf(exponent - 1.0) * tau.signum()
            }
            FactorShape::Clock { clock, sign } => {
                let t = clock.t_of_tau(tau);
                sign * clock.scale.da(t) * clock.scale.a(t)
            }
            FactorShape::Samples(s) => s.derivative(tau),
            FactorShape::Custom { d_omega, .. } => d_omega(tau),
        }
    }

    pub fn sign(&self) -> f64 {
        let probe = match &self.shape {
            FactorShape::Samples(s) => s.range().0,
            _ => self.side.sign() * 1e-3,
        };
        self.omega(probe).signum()
    }
}

/// Conformal time of the previous aeon, `τ(t) = −∫_t^∞ ds/â(s)`.
///
/// Returns `τ₋ = τ(t₋)` and `Ω̂ = sign·â(t(τ))`.
pub fn conformal_time_hat(
    scale: &ScaleFactor,
    t_minus: f64,
    cut: f64,
    horizon: HatHorizon,
    sign: f64,
) -> Result<(f64, ConformalFactor)> {
    if !(cut > t_minus) {
        return Err(Error::Validation("upper cut must exceed t₋".into()));
    }
    if sign.abs() != 1.0 {
        return Err(Error::Validation("conformal factor sign must be ±1".into()));
    }
    let tail_at_cut = match horizon {
        HatHorizon::Truncated => 0.0,
        HatHorizon::Infinite => scale.tail(cut).ok_or_else(|| {
            Error::ConformalTimeUndefined(format!("1/a has a divergent tail for {scale:?}"))
        })?,
    };
    if !tail_at_cut.is_finite() {
        return Err(Error::ConformalTimeUndefined("non-finite tail".into()));
    }
    let clock = ConformalClock { scale: scale.clone(), side: Side::Hat, cut, horizon, tail_at_cut };
    let tau_minus = clock.tau_of_t(t_minus);
    let asymptotics = match horizon {
        HatHorizon::Infinite => Asymptotics::CccExpansion,
        HatHorizon::Truncated => Asymptotics::Generic,
    };
    Ok((
        tau_minus,
        ConformalFactor {
            side: Side::Hat,
            shape: FactorShape::Clock { clock: Arc::new(clock), sign },
            asymptotics,
        },
    ))
}

/// Conformal time of the present aeon, `τ(t) = ∫_0^t ds/ǎ(s)`.
pub fn conformal_time_check(scale: &ScaleFactor, t_plus: f64) -> Result<(f64, ConformalFactor)> {
    if !(t_plus > 0.0) {
        return Err(Error::Validation("t₊ must be positive".into()));
    }
    let tau_plus = scale.from_origin(t_plus)?;
    let clock = ConformalClock {
        scale: scale.clone(),
        side: Side::Check,
        cut: 0.0,
        horizon: HatHorizon::Truncated,
        tail_at_cut: 0.0,
    };
    let asymptotics = if scale.a(0.0) == 0.0 { Asymptotics::Bounce } else { Asymptotics::Generic };
    Ok((
        tau_plus,
        ConformalFactor {
            side: Side::Check,
            shape: FactorShape::Clock { clock: Arc::new(clock), sign: 1.0 },
            asymptotics,
        },
    ))
}

/// Access to the clock behind a factor built from a scale factor.
pub fn clock_of(factor: &ConformalFactor) -> Option<&ConformalClock> {
    match &factor.shape {
        FactorShape::Clock { clock, .. } => Some(clock),
        _ => None,
    }
}

/// `Ω̂(−τ)·Ω̌(τ) + 1`; vanishes under Penrose's reciprocal proposal.
pub fn reciprocal_residual(hat: &ConformalFactor, check: &ConformalFactor, tau: f64) -> Result<f64> {
    if !(tau > 0.0) || hat.side != Side::Hat || check.side != Side::Check {
        return Err(Error::Domain(format!("tau = {tau} for the reciprocal residual")));
    }
    Ok(hat.omega(-tau) * check.omega(tau) + 1.0)
}

/// Mass profile `m(τ) ≥ 0`.
#[derive(Clone)]
pub enum MassProfile {
    Constant(f64),
    /// `coeff·|τ|^exponent`.
    Power { coeff: f64, exponent: f64 },
    Custom(ProfileFn),
}

impl MassProfile {
    pub fn eval(&self, tau: f64) -> f64 {
        match self {
            MassProfile::Constant(m) => *m,
            MassProfile::Power { coeff, exponent } => coeff * tau.abs().powf(*exponent),
            MassProfile::Custom(f) => f(tau),
        }
    }
}

#[derive(Clone)]
pub enum MassShape {
    Zero,
    Constant(f64),
    /// `coeff·|τ|^{−power}`.
    InversePower { coeff: f64, power: f64 },
    /// `c²/|τ| + Σ_k F_k τ^k`.
    Fuchsian { c2: f64, poly: Vec<f64> },
    /// `m(τ)²·Ω(τ)²`.
    Product { mass: MassProfile, factor: ConformalFactor },
    Samples(Arc<MonotoneCubic>),
    Custom(ProfileFn),
}

/// Effective mass `q(τ) = m²Ω²` on `[−w, 0)` or `(0, w]`.
#[derive(Clone)]
pub struct EffectiveMassSq {
    pub side: Side,
    pub shape: MassShape,
    pub half_width: f64,
}

impl fmt::Debug for EffectiveMassSq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let shape = match &self.shape {
            MassShape::Zero => "0".to_string(),
            MassShape::Constant(c) => format!("{c}"),
            MassShape::InversePower { coeff, power } => format!("{coeff}|τ|^-{power}"),
            MassShape::Fuchsian { c2, poly } => format!("{c2}/|τ| + poly{poly:?}"),
            MassShape::Product { factor, .. } => format!("m²Ω² with {factor:?}"),
            MassShape::Samples(_) => "samples".into(),
            MassShape::Custom(_) => "custom".into(),
        };
        write!(f, "q[{}; w={}]({shape})", self.side.name(), self.half_width)
    }
}

impl EffectiveMassSq {
    pub fn new(side: Side, shape: MassShape) -> Self {
        EffectiveMassSq { side, shape, half_width: 1.0 }
    }

    pub fn zero(side: Side) -> Self {
        Self::new(side, MassShape::Zero)
    }

    pub fn constant(side: Side, value: f64) -> Self {
        Self::new(side, MassShape::Constant(value))
    }

    pub fn inverse_power(side: Side, coeff: f64, power: f64) -> Self {
        Self::new(side, MassShape::InversePower { coeff, power })
    }

    /// `c²/|τ|`.
    pub fn fuchsian(side: Side, c2: f64) -> Self {
        Self::new(side, MassShape::Fuchsian { c2, poly: Vec::new() })
    }

    pub fn product(side: Side, mass: MassProfile, factor: ConformalFactor) -> Self {
        Self::new(side, MassShape::Product { mass, factor })
    }

    pub fn with_half_width(mut self, w: f64) -> Self {
        self.half_width = w;
        self
    }

    pub fn samples(side: Side, tau: Vec<f64>, q: Vec<f64>) -> Result<Self> {
        if q.iter().any(|v| *v < 0.0) {
            return Err(Error::Validation("effective mass samples must be nonnegative".into()));
        }
        let w = tau.iter().fold(0.0f64, |m, t| m.max(t.abs()));
        Ok(Self::new(side, MassShape::Samples(Arc::new(MonotoneCubic::new(tau, q)?))).with_half_width(w))
    }

    pub fn eval(&self, tau: f64) -> f64 {
        match &self.shape {
            MassShape::Zero => 0.0,
            MassShape::Constant(c) => *c,
            MassShape::InversePower { coeff, power } => coeff * tau.abs().powf(-power),
            MassShape::Fuchsian { c2, poly } => {
                let mut acc = 0.0;
                for c in poly.iter().rev() {
                    acc = acc * tau + c;
                }
                c2 / tau.abs() + acc
            }
            MassShape::Product { mass, factor } => {
                let m = mass.eval(tau);
                if m == 0.0 {
                    return 0.0;
                }
                let w = factor.omega(tau);
                m * m * w * w
            }
            MassShape::Samples(s) => s.eval(tau),
            MassShape::Custom(f) => f(tau),
        }
    }

    pub fn is_identically_zero(&self) -> bool {
        match &self.shape {
            MassShape::Zero => true,
            MassShape::Constant(c) => *c == 0.0,
            MassShape::InversePower { coeff, .. } => *coeff == 0.0,
            MassShape::Fuchsian { c2, poly } => *c2 == 0.0 && poly.iter().all(|c| *c == 0.0),
            MassShape::Product { mass: MassProfile::Constant(m), .. } => *m == 0.0,
            MassShape::Product { mass: MassProfile::Power { coeff, .. }, .. } => *coeff == 0.0,
            _ => false,
        }
    }

    /// `(C, p)` with `q ≈ C|τ|^p` near 0, when known exactly.
    pub fn exact_power_law(&self) -> Option<(f64, f64)> {
        match &self.shape {
            MassShape::Zero => Some((0.0, 0.0)),
            MassShape::Constant(c) => Some((*c, 0.0)),
            MassShape::InversePower { coeff, power } => Some((*coeff, -power)),
            MassShape::Fuchsian { c2, poly } if *c2 != 0.0 => Some((*c2, -1.0)),
            MassShape::Fuchsian { poly, .. } => Some((poly.first().copied().unwrap_or(0.0), 0.0)),
            MassShape::Product {
                mass: MassProfile::Power { coeff: mc, exponent: me },
                factor: ConformalFactor { shape: FactorShape::Power { coeff: fc, exponent: fe }, .. },
            } => Some((mc * mc * fc * fc, 2.0 * (me + fe))),
            MassShape::Product {
                mass: MassProfile::Constant(m),
                factor: ConformalFactor { shape: FactorShape::Power { coeff: fc, exponent: fe }, .. },
            } => Some((m * m * fc * fc, 2.0 * fe)),
            MassShape::Product {
                mass: MassProfile::Power { coeff, exponent },
                factor: ConformalFactor { shape: FactorShape::Constant(w), .. },
            } => Some((coeff * coeff * w * w, 2.0 * exponent)),
            MassShape::Product {
                mass: MassProfile::Constant(m),
                factor: ConformalFactor { shape: FactorShape::Constant(w), .. },
            } => Some((m * m * w * w, 0.0)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegrabilityClass {
    /// `∫|q| < ∞`.
    L1,
    /// `∫|q||τ| < ∞` only.
    WeightedL1,
    Neither,
}

impl IntegrabilityClass {
    pub fn at_least_weighted(self) -> bool {
        !matches!(self, IntegrabilityClass::Neither)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Integrability {
    pub class: IntegrabilityClass,
    /// `∫|q|` down to the probe floor.
    pub l1_to_floor: f64,
    /// `∫|q||τ|` down to the probe floor.
    pub weighted_to_floor: f64,
    /// Fitted `p` in `q ~ C|τ|^p`, if a tail was fitted.
    pub tail_exponent: Option<f64>,
    pub warning: Option<String>,
}

/// Numerical integrability verdict for `q` near 0.
pub fn classify_integrability(q: &EffectiveMassSq, probe_floor: f64) -> Integrability {
    let s = q.side.sign();
    let w = q.half_width;
    let floor = probe_floor.abs().clamp(1e-300, w * 0.5);
    // Geometric sample in |τ|, integrated in ln|τ| by the trapezoid rule.
    let n_dec = (w / floor).log10().ceil().max(1.0) as usize;
    let per_dec = 40;
    let npts = n_dec * per_dec + 1;
    let lw = w.ln();
    let lf = floor.ln();
    let mut l1 = 0.0;
    let mut weighted = 0.0;
    let mut samples = Vec::with_capacity(npts);
    for i in 0..npts {
        let u = lw + (lf - lw) * i as f64 / (npts - 1) as f64;
        let r = u.exp();
        let v = q.eval(s * r).abs();
        samples.push((r, v));
    }
    let du = (lw - lf) / (npts - 1) as f64;
    for k in 0..npts - 1 {
        let (r0, v0) = samples[k];
        let (r1, v1) = samples[k + 1];
        l1 += 0.5 * du * (v0 * r0 + v1 * r1);
        weighted += 0.5 * du * (v0 * r0 * r0 + v1 * r1 * r1);
    }
    let tail: Vec<(f64, f64)> = samples[npts - per_dec - 1..].to_vec();
    let integrable = |p: f64| {
        if p > -1.0 + 0.02 {
            IntegrabilityClass::L1
        } else if p > -2.0 + 0.02 {
            IntegrabilityClass::WeightedL1
        } else {
            IntegrabilityClass::Neither
        }
    };
    if tail.iter().all(|(_, v)| *v == 0.0) {
        return Integrability {
            class: IntegrabilityClass::L1,
            l1_to_floor: l1,
            weighted_to_floor: weighted,
            tail_exponent: None,
            warning: None,
        };
    }
    if tail.iter().any(|(_, v)| !(v.is_finite() && *v > 0.0)) {
        return Integrability {
            class: IntegrabilityClass::Neither,
            l1_to_floor: l1,
            weighted_to_floor: weighted,
            tail_exponent: None,
            warning: Some("tail samples are not positive and finite; power-law fit skipped".into()),
        };
    }
    let xs: Vec<f64> = tail.iter().map(|(r, _)| r.ln()).collect();
    let ys: Vec<f64> = tail.iter().map(|(_, v)| v.ln()).collect();
    match fit::line(&xs, &ys) {
        Ok((logc, p)) => {
            let c = logc.exp();
            // Extrapolated contributions of (0, floor).
            if p > -1.0 {
                l1 += c * floor.powf(p + 1.0) / (p + 1.0);
            }
            if p > -2.0 {
                weighted += c * floor.powf(p + 2.0) / (p + 2.0);
            }
            Integrability {
                class: integrable(p),
                l1_to_floor: l1,
                weighted_to_floor: weighted,
                tail_exponent: Some(p),
                warning: None,
            }
        }
        Err(e) => Integrability {
            class: IntegrabilityClass::Neither,
            l1_to_floor: l1,
            weighted_to_floor: weighted,
            tail_exponent: None,
            warning: Some(format!("tail fit failed: {e}")),
        },
    }
}

/// `(Ω^k, d/dτ Ω^k)` with `k = (n−1)/2`.
fn liouville_power(n: usize, omega: &ConformalFactor, tau: f64) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::Validation("spatial dimension must be positive".into()));
    }
    if !omega.side.contains(tau) && !matches!(omega.shape, FactorShape::Constant(_)) {
        return Err(Error::Domain(format!("tau = {tau} on the {} side", omega.side.name())));
    }
    if n == 1 {
        return Ok((1.0, 0.0));
    }
    let w = omega.omega(tau);
    let dw = omega.d_omega(tau);
    if w == 0.0 || !w.is_finite() {
        return Err(Error::SingularScaling { tau });
    }
    if n % 2 == 1 {
        let k = ((n - 1) / 2) as i32;
        Ok((w.powi(k), k as f64 * w.powi(k - 1) * dw))
    } else {
        if w < 0.0 {
            return Err(Error::Validation(
                "even spatial dimension needs a positive conformal factor".into(),
            ));
        }
        let k = (n as f64 - 1.0) / 2.0;
        Ok((w.powf(k), k * w.powf(k - 1.0) * dw))
    }
}

/// The Liouville map: `φ = Ω^{(n−1)/2}u`, `∂τφ = (Ω^{(n−1)/2})′u + Ω^{(n−1)/2}∂τu`.
pub fn liouville_scale<T>(n: usize, omega: &ConformalFactor, u: (T, T), tau: f64) -> Result<(T, T)>
where
    T: Copy + std::ops::Mul<f64, Output = T> + std::ops::Add<Output = T>,
{
    let (p, dp) = liouville_power(n, omega, tau)?;
    Ok((u.0 * p, u.0 * dp + u.1 * p))
}

pub fn liouville_unscale<T>(n: usize, omega: &ConformalFactor, phi: (T, T), tau: f64) -> Result<(T, T)>
where
    T: Copy + std::ops::Mul<f64, Output = T> + std::ops::Sub<Output = T>,
{
    let (p, dp) = liouville_power(n, omega, tau)?;
    let u = phi.0 * (1.0 / p);
    Ok((u, (phi.1 - u * dp) * (1.0 / p)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn de_sitter_conformal_time() {
        let a = ScaleFactor::DeSitter { c: 1.0, h: 1.0 };
        let (tau_minus, omega) = conformal_time_hat(&a, 0.0, 5.0, HatHorizon::Infinite, 1.0).unwrap();
        assert!(close(tau_minus, -1.0, 1e-13));
        assert!(close(omega.omega(-0.5), 2.0, 1e-11));
        assert!(close(omega.d_omega(-0.5), 4.0, 1e-9));
        for tau in [-1e-3, -1e-6] {
            assert!(close(omega.omega(tau) * (-tau), 1.0, 1e-9));
        }
    }

    #[test]
    fn unit_scale_factor_is_affine_on_cut_window() {
        let (tau_minus, omega) =
            conformal_time_hat(&ScaleFactor::Unit, 0.0, 3.0, HatHorizon::Truncated, 1.0).unwrap();
        assert!(close(tau_minus, -3.0, 1e-12), "{tau_minus}");
        let clock = clock_of(&omega).unwrap();
        assert!(close(clock.tau_of_t(1.25), 1.25 - 3.0, 1e-12));
        assert!(close(omega.omega(-0.7), 1.0, 0.0));
        let (tp, check) = conformal_time_check(&ScaleFactor::Unit, 2.0).unwrap();
        assert!(close(tp, 2.0, 1e-14) && check.omega(1.0) == 1.0);
    }

    #[test]
    fn divergent_tails_are_rejected() {
        let e = conformal_time_hat(&ScaleFactor::Unit, 0.0, 3.0, HatHorizon::Infinite, 1.0);
        assert!(matches!(e, Err(Error::ConformalTimeUndefined(_))));
        let p = ScaleFactor::PowerLaw { c: 1.0, eta: 1.5 };
        assert!(matches!(conformal_time_check(&p, 1.0), Err(Error::ConformalTimeUndefined(_))));
    }

    #[test]
    fn power_law_check_side() {
        let a = ScaleFactor::PowerLaw { c: 2f64.sqrt(), eta: 0.5 };
        let (tp, omega) = conformal_time_check(&a, 2.0).unwrap();
        assert!(close(tp, 2.0, 1e-13));
        for tau in [1e-4, 0.01, 0.3, 1.9] {
            assert!(close(omega.omega(tau), tau, 1e-12 * tau.max(1e-3)), "{tau} {}", omega.omega(tau));
            assert!(close(omega.d_omega(tau), 1.0, 1e-9));
        }
        // General power-law asymptotics Č^{1/(1−η)}(1−η)^{η/(1−η)}τ^{η/(1−η)}.
        let (c, eta) = (1.7f64, 0.3f64);
        let (_, om) = conformal_time_check(&ScaleFactor::PowerLaw { c, eta }, 1.0).unwrap();
        let tau: f64 = 1e-3;
        let k = eta / (1.0 - eta);
        let expected = c.powf(1.0 / (1.0 - eta)) * (1.0 - eta).powf(k) * tau.powf(k);
        assert!(close(om.omega(tau) / expected, 1.0, 1e-10));
    }

    #[test]
    fn cosh_and_custom_scale_factors_match_closed_forms() {
        let a = ScaleFactor::Cosh { c: 1.0, h: 1.0 };
        let (_, om) = conformal_time_hat(&a, -1.0, 2.0, HatHorizon::Infinite, 1.0).unwrap();
        for tau in [-1.2, -0.4, -1e-3] {
            assert!(close(om.omega(tau), 1.0 / (-tau as f64).sin(), 1e-10 / tau.abs()));
        }
        let custom = ScaleFactor::Custom {
            a: Arc::new(|t: f64| t.exp()),
            da: Arc::new(|t: f64| t.exp()),
            tail_exponent: None,
            origin_exponent: None,
        };
        // Without a tail law the horizon must be finite.
        assert!(conformal_time_hat(&custom, 0.0, 4.0, HatHorizon::Infinite, 1.0).is_err());
        let (tm, om) = conformal_time_hat(&custom, 0.0, 4.0, HatHorizon::Truncated, 1.0).unwrap();
        assert!(close(tm, -(1.0 - (-4.0f64).exp()), 1e-13));
        assert!(close(om.omega(-0.5), 1.0 / (0.5 + (-4.0f64).exp()), 1e-11));
    }

    #[test]
    fn closed_clocks_agree_with_quadrature() {
        let (c, h) = (0.8, 1.7);
        let (_, closed) = conformal_time_hat(&ScaleFactor::DeSitter { c, h }, 0.0, 30.0, HatHorizon::Infinite, 1.0).unwrap();
        let custom = ScaleFactor::Custom {
            a: Arc::new(move |t: f64| c * (h * t).exp()),
            da: Arc::new(move |t: f64| c * h * (h * t).exp()),
            tail_exponent: None,
            origin_exponent: None,
        };
        // The truncated tail beyond t = 30 is below e^{−51}.
        let (_, quad) = conformal_time_hat(&custom, 0.0, 30.0, HatHorizon::Truncated, 1.0).unwrap();
        for tau in [-0.5, -0.1, -1e-3] {
            assert!(close(closed.omega(tau), quad.omega(tau), 1e-9 * closed.omega(tau)));
        }
        let (_, cosh) = conformal_time_hat(&ScaleFactor::Cosh { c: 1.0, h: 2.0 }, -2.0, 3.0, HatHorizon::Infinite, 1.0).unwrap();
        let clock = clock_of(&cosh).unwrap();
        for t in [-1.5, 0.0, 0.7, 2.5] {
            assert!(close(clock.t_of_tau(clock.tau_of_t(t)), t, 1e-12));
        }
    }

    #[test]
    fn reciprocal_examples() {
        // Ω̂ = 1/τ is negative on the hat side.
        let hat = ConformalFactor::power(Side::Hat, -1.0, -1.0);
        let check = ConformalFactor::power(Side::Check, 1.0, 1.0);
        for tau in [1e-3, 0.2, 0.9] {
            assert!(reciprocal_residual(&hat, &check, tau).unwrap().abs() < 1e-15);
        }
        let one_h = ConformalFactor::constant(Side::Hat, 1.0);
        let one_c = ConformalFactor::constant(Side::Check, 1.0);
        assert_eq!(reciprocal_residual(&one_h, &one_c, 0.4).unwrap(), 2.0);
        assert!(reciprocal_residual(&hat, &check, -0.1).is_err());
    }

    #[test]
    fn integrability_classes() {
        let c = classify_integrability(&EffectiveMassSq::constant(Side::Check, 4.0), 1e-8);
        assert_eq!(c.class, IntegrabilityClass::L1);
        let f = classify_integrability(&EffectiveMassSq::fuchsian(Side::Hat, 0.25), 1e-8);
        assert_eq!(f.class, IntegrabilityClass::WeightedL1);
        let n = classify_integrability(&EffectiveMassSq::inverse_power(Side::Check, 1.0, 2.0), 1e-8);
        assert_eq!(n.class, IntegrabilityClass::Neither);
        let z = classify_integrability(&EffectiveMassSq::zero(Side::Hat), 1e-8);
        assert_eq!(z.class, IntegrabilityClass::L1);
        let nan = EffectiveMassSq::new(Side::Hat, MassShape::Custom(Arc::new(|_| f64::NAN)));
        let r = classify_integrability(&nan, 1e-6);
        assert_eq!(r.class, IntegrabilityClass::Neither);
        assert!(r.warning.is_some());
    }

    #[test]
    fn liouville_examples() {
        let om = ConformalFactor::power(Side::Check, 1.0, 1.0);
        let (p, dp) = liouville_scale(3, &om, (1.0, 0.0), 0.5).unwrap();
        assert!(close(p, 0.5, 1e-15) && close(dp, 1.0, 1e-15));
        let (u, du) = liouville_unscale(3, &om, (0.5, 1.0), 0.5).unwrap();
        assert!(close(u, 1.0, 1e-15) && close(du, 0.0, 1e-15));
        let hat = ConformalFactor::power(Side::Hat, 1.0, -1.0);
        let (p, dp) = liouville_scale(3, &hat, (1.0, 0.0), -2.0).unwrap();
        assert!(close(p, 0.5, 1e-15) && close(dp, 0.25, 1e-15));
        let (p, dp) = liouville_scale(1, &hat, (0.3, -0.7), -2.0).unwrap();
        assert_eq!((p, dp), (0.3, -0.7));
        let neg = ConformalFactor::power(Side::Hat, -1.0, -1.0);
        assert!(liouville_scale(2, &neg, (1.0, 0.0), -0.5).is_err());
        assert!(liouville_scale(3, &neg, (1.0, 0.0), -0.5).is_ok());
    }

    proptest! {
        #[test]
        fn liouville_round_trip(n in 1usize..6, u0 in -5.0f64..5.0, u1 in -5.0f64..5.0,
                                tau in 0.05f64..2.0, coeff in 0.2f64..3.0, e in -2.0f64..2.0) {
            let om = ConformalFactor::power(Side::Check, coeff, e);
            let phi = liouville_scale(n, &om, (u0, u1), tau).unwrap();
            let back = liouville_unscale(n, &om, phi, tau).unwrap();
            prop_assert!((back.0 - u0).abs() <= 1e-12 * (1.0 + u0.abs()));
            prop_assert!((back.1 - u1).abs() <= 1e-10 * (1.0 + u0.abs() + u1.abs()));
            // det 𝔏 = Ω^{n−1}
            let (p, _) = liouville_scale(n, &om, (1.0, 0.0), tau).unwrap();
            let (_, p2) = liouville_scale(n, &om, (0.0, 1.0), tau).unwrap();
            prop_assert!((p * p2 - om.omega(tau).powi(n as i32 - 1)).abs() <= 1e-10 * (1.0 + p * p2));
        }

        #[test]
        fn conformal_clock_inverts(t in 0.0f64..6.0) {
            let a = ScaleFactor::DeSitter { c: 0.7, h: 1.3 };
            let (_, om) = conformal_time_hat(&a, 0.0, 3.0, HatHorizon::Infinite, -1.0).unwrap();
            let clock = clock_of(&om).unwrap();
            let tau = clock.tau_of_t(t);
            prop_assert!((clock.t_of_tau(tau) - t).abs() <= 1e-10);
            let (_, oc) = conformal_time_check(&ScaleFactor::Cosh { c: 1.0, h: 0.5 }, 1.0).unwrap();
            let cc = clock_of(&oc).unwrap();
            prop_assert!((cc.t_of_tau(cc.tau_of_t(t + 1e-3)) - t - 1e-3).abs() <= 1e-10);
        }

        #[test]
        fn dominated_l1_stays_integrable(p in -0.9f64..2.0, scale in 0.01f64..1.0, wiggle in 0.0f64..1.0) {
            let big = EffectiveMassSq::new(Side::Check, MassShape::InversePower { coeff: 2.0, power: -p });
            prop_assume!(classify_integrability(&big, 1e-8).class == IntegrabilityClass::L1);
            let small = EffectiveMassSq::new(Side::Check, MassShape::Custom(Arc::new(move |t: f64| {
                2.0 * t.abs().powf(p) * scale * (1.0 - 0.5 * wiggle * (1.0 + (3.0 * t).sin()) / 2.0)
            })));
            prop_assert!(classify_integrability(&small, 1e-8).class.at_least_weighted());
        }
    }
}
