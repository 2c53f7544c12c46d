//! Step-size selection along the retracted curve ψ(α) = R_f(α d).
//!
//! Two strategies: safeguarded quadratic/cubic backtracking, and a bounded
//! Brent minimization of φ on [0, α_max] followed by the same sufficient
//! decrease test.

use crate::error::{Error, Result};
use crate::sphere::{retract_scaled, SphericalMapping, TangentField};
use crate::Vec3;

/// Something that can be evaluated along the line search.
pub trait LineObjective {
    fn value(&self, f: &SphericalMapping) -> Result<f64>;
}

impl<F: Fn(&SphericalMapping) -> Result<f64>> LineObjective for F {
    fn value(&self, f: &SphericalMapping) -> Result<f64> {
        self(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineSearchStrategy {
    /// Quadratic then cubic interpolating backtracking.
    Interpolant,
    /// Bounded scalar minimization of φ on [0, α_max].
    Bounded,
}

#[derive(Debug, Clone, Copy)]
pub struct LineSearchParams {
    pub c1: f64,
    pub alpha_max: f64,
    pub max_backtracks: usize,
    pub bounded_tol: f64,
    pub bounded_max_evals: usize,
}

impl Default for LineSearchParams {
    fn default() -> Self {
        Self {
            c1: 1e-4,
            alpha_max: 1.0,
            max_backtracks: 30,
            bounded_tol: 1e-6,
            bounded_max_evals: 50,
        }
    }
}

/// Interpolation data of a backtracking search.
#[derive(Debug, Clone, Copy)]
pub struct LineSearchState {
    pub phi0: f64,
    pub dphi0: f64,
    pub alpha0: f64,
    /// Most recent rejected trial and its value.
    pub alpha_prev: f64,
    pub phi_prev: f64,
    /// The trial before that.
    pub alpha_2prev: f64,
    pub phi_2prev: f64,
    pub c1: f64,
    pub alpha_max: f64,
    pub max_backtracks: usize,
}

impl LineSearchState {
    pub fn new(phi0: f64, dphi0: f64, alpha0: f64, params: &LineSearchParams) -> Self {
        Self {
            phi0,
            dphi0,
            alpha0,
            alpha_prev: alpha0,
            phi_prev: f64::NAN,
            alpha_2prev: f64::NAN,
            phi_2prev: f64::NAN,
            c1: params.c1,
            alpha_max: params.alpha_max,
            max_backtracks: params.max_backtracks,
        }
    }

    pub fn sufficient_decrease(&self, alpha: f64, phi: f64) -> bool {
        phi <= self.phi0 + self.c1 * alpha * self.dphi0
    }
}

/// Tangency tolerance for search directions.
pub const TANGENT_TOL: f64 = 1e-8;

/// φ′(0) = ∇E(f)ᵀψ′(0), with ψ′(0)_ℓ = d_ℓ/‖f_ℓ‖ − (f_ℓᵀd_ℓ/‖f_ℓ‖³) f_ℓ.
pub fn phi_derivative_at_zero(f: &SphericalMapping, d: &TangentField, egrad: &[Vec3]) -> Result<f64> {
    if d.len() != f.len() || egrad.len() != f.len() {
        return Err(Error::ShapeMismatch {
            expected: f.len(),
            got: if d.len() != f.len() { d.len() } else { egrad.len() },
        });
    }
    let mut total = 0.0;
    for (row, ((p, x), g)) in f.rows().iter().zip(d.rows()).zip(egrad).enumerate() {
        let inner = p.dot(x);
        if inner.abs() > TANGENT_TOL {
            return Err(Error::NotTangent { row, inner });
        }
        let norm = p.norm();
        let dpsi = x / norm - p * (inner / (norm * norm * norm));
        total += g.dot(&dpsi);
    }
    Ok(total)
}

/// Minimizer of the quadratic through φ(0), φ′(0), φ(α₀); `None` when the
/// model degenerates.
pub fn quadratic_minimizer(phi0: f64, dphi0: f64, alpha0: f64, phi_alpha0: f64) -> Option<f64> {
    let denom = 2.0 * (phi_alpha0 - phi0 - dphi0 * alpha0);
    if denom == 0.0 || !denom.is_finite() {
        return None;
    }
    let a = -dphi0 * alpha0 * alpha0 / denom;
    a.is_finite().then_some(a)
}

/// Quadratic step clamped to [0.1, 0.5]·α₀, or α₀/2 when degenerate.
pub fn quadratic_backtrack_step(state: &LineSearchState, phi_alpha0: f64) -> f64 {
    let a0 = state.alpha0;
    match quadratic_minimizer(state.phi0, state.dphi0, a0, phi_alpha0) {
        Some(a) => a.clamp(0.1 * a0, 0.5 * a0),
        None => 0.5 * a0,
    }
}

/// Coefficients (a, b) of φ(α) ≈ aα³ + bα² + φ′(0)α + φ(0) through the
/// two most recent trials.
pub fn cubic_fit(phi0: f64, dphi0: f64, alpha_p: f64, phi_p: f64, alpha_2p: f64, phi_2p: f64) -> (f64, f64) {
    let r1 = phi_p - phi0 - dphi0 * alpha_p;
    let r2 = phi_2p - phi0 - dphi0 * alpha_2p;
    let (p2, q2) = (alpha_p * alpha_p, alpha_2p * alpha_2p);
    let s = 1.0 / (alpha_p - alpha_2p);
    let a = s * (r1 / p2 - r2 / q2);
    let b = s * (-alpha_2p * r1 / p2 + alpha_p * r2 / q2);
    (a, b)
}

/// Local minimizer (−b + √(b² − 3aφ′(0)))/(3a) of the fitted cubic.
/// Falls back to the quadratic vertex −φ′(0)/(2b) when a ≈ 0; `None` for a
/// negative discriminant or no minimizer.
pub fn cubic_minimizer(a: f64, b: f64, dphi0: f64) -> Option<f64> {
    let scale = b.abs().max(dphi0.abs()).max(f64::MIN_POSITIVE);
    if a.abs() <= 1e-12 * scale {
        if b > 0.0 {
            return Some(-dphi0 / (2.0 * b));
        }
        return None;
    }
    let disc = b * b - 3.0 * a * dphi0;
    if disc < 0.0 || !disc.is_finite() {
        return None;
    }
    let root = disc.sqrt();
    // same root, written to avoid cancellation when b > 0
    let alpha = if b > 0.0 {
        -dphi0 / (b + root)
    } else {
        (-b + root) / (3.0 * a)
    };
    alpha.is_finite().then_some(alpha)
}

/// Cubic step from the two latest trials, clamped to [0.1, 0.5]·α_prev.
pub fn cubic_backtrack_step(state: &LineSearchState) -> f64 {
    let ap = state.alpha_prev;
    if !state.phi_prev.is_finite() || !state.phi_2prev.is_finite() {
        return 0.5 * ap;
    }
    let (a, b) = cubic_fit(
        state.phi0,
        state.dphi0,
        ap,
        state.phi_prev,
        state.alpha_2prev,
        state.phi_2prev,
    );
    match cubic_minimizer(a, b, state.dphi0) {
        Some(alpha) => alpha.clamp(0.1 * ap, 0.5 * ap),
        None => 0.5 * ap,
    }
}

/// Initial trial min(α_max, 2(E_k − E_{k−1})/φ′(0)); α_max without history.
pub fn initial_step(prev_value: Option<f64>, value: f64, dphi0: f64, alpha_max: f64) -> f64 {
    match prev_value {
        Some(prev) => {
            let a = 2.0 * (value - prev) / dphi0;
            if a.is_finite() && a > 0.0 {
                a.min(alpha_max)
            } else {
                alpha_max
            }
        }
        None => alpha_max,
    }
}

#[derive(Debug, Clone)]
pub struct LineSearchOutcome {
    /// Accepted step, or the best trial when `accepted` is false.
    pub alpha: f64,
    pub f_new: SphericalMapping,
    pub value_new: f64,
    pub evals: usize,
    pub accepted: bool,
    pub phi0: f64,
    pub dphi0: f64,
    /// All (α, φ(α)) pairs evaluated, in order.
    pub trials: Vec<(f64, f64)>,
}

struct Evaluator<'a, O: LineObjective + ?Sized> {
    obj: &'a O,
    f: &'a SphericalMapping,
    d: &'a TangentField,
    trials: Vec<(f64, f64)>,
    best: Option<(f64, f64, SphericalMapping)>,
}

impl<'a, O: LineObjective + ?Sized> Evaluator<'a, O> {
    /// φ(α); failures and non-finite values come back as +∞.
    fn phi(&mut self, alpha: f64) -> (f64, Option<SphericalMapping>) {
        let point = retract_scaled(self.f, self.d, alpha).ok();
        let value = point
            .as_ref()
            .and_then(|p| self.obj.value(p).ok())
            .filter(|v| v.is_finite())
            .unwrap_or(f64::INFINITY);
        self.trials.push((alpha, value));
        if let Some(p) = &point {
            if value.is_finite() && self.best.as_ref().is_none_or(|b| value < b.1) {
                self.best = Some((alpha, value, p.clone()));
            }
        }
        (value, point)
    }
}

/// Runs one line search from f along d.
pub fn search<O: LineObjective + ?Sized>(
    obj: &O,
    f: &SphericalMapping,
    d: &TangentField,
    phi0: f64,
    dphi0: f64,
    alpha0: f64,
    strategy: LineSearchStrategy,
    params: &LineSearchParams,
) -> Result<LineSearchOutcome> {
    if !(dphi0 < 0.0) {
        return Err(Error::NotDescent(dphi0));
    }
    if !(params.c1 > 0.0 && params.c1 < 1.0) || !(params.alpha_max > 0.0) {
        return Err(Error::InvalidArgument("line search needs 0 < c1 < 1 and alpha_max > 0".into()));
    }
    let mut ev = Evaluator {
        obj,
        f,
        d,
        trials: Vec::new(),
        best: None,
    };
    let start = match strategy {
        LineSearchStrategy::Interpolant => alpha0.min(params.alpha_max),
        LineSearchStrategy::Bounded => {
            let (alpha, _) = brent_minimize(
                |a| ev.phi(a).0,
                0.0,
                params.alpha_max,
                params.bounded_tol,
                params.bounded_max_evals,
            );
            alpha
        }
    };
    if !(start > 0.0) {
        return Err(Error::InvalidArgument(format!("initial step {start} is not positive")));
    }
    backtrack(&mut ev, phi0, dphi0, start, params)
}

fn backtrack<O: LineObjective + ?Sized>(
    ev: &mut Evaluator<'_, O>,
    phi0: f64,
    dphi0: f64,
    alpha0: f64,
    params: &LineSearchParams,
) -> Result<LineSearchOutcome> {
    let mut state = LineSearchState::new(phi0, dphi0, alpha0, params);
    let mut alpha = alpha0;
    for k in 0..=params.max_backtracks {
        let (phi, point) = ev.phi(alpha);
        if state.sufficient_decrease(alpha, phi) {
            if let Some(p) = point {
                return Ok(LineSearchOutcome {
                    alpha,
                    f_new: p,
                    value_new: phi,
                    evals: ev.trials.len(),
                    accepted: true,
                    phi0,
                    dphi0,
                    trials: std::mem::take(&mut ev.trials),
                });
            }
        }
        if k == params.max_backtracks {
            break;
        }
        state.alpha_2prev = state.alpha_prev;
        state.phi_2prev = state.phi_prev;
        state.alpha_prev = alpha;
        state.phi_prev = phi;
        alpha = if !phi.is_finite() {
            0.5 * alpha
        } else if k == 0 {
            quadratic_backtrack_step(&state, phi)
        } else {
            cubic_backtrack_step(&state)
        };
    }
    let (alpha, value, f_new) = match ev.best.take() {
        Some(b) => b,
        None => (0.0, phi0, ev.f.clone()),
    };
    Ok(LineSearchOutcome {
        alpha,
        f_new,
        value_new: value,
        evals: ev.trials.len(),
        accepted: false,
        phi0,
        dphi0,
        trials: std::mem::take(&mut ev.trials),
    })
}

/// Brent's bounded scalar minimization (golden section with parabolic
/// steps). Returns the best abscissa and its value.
pub fn brent_minimize<F: FnMut(f64) -> f64>(mut func: F, lo: f64, hi: f64, xtol: f64, max_evals: usize) -> (f64, f64) {
    let golden = 0.5 * (3.0 - 5.0_f64.sqrt());
    let sqrt_eps = f64::EPSILON.sqrt();
    let (mut a, mut b) = (lo, hi);
    let mut v = a + golden * (b - a);
    let mut w = v;
    let mut x = v;
    let mut fx = func(x);
    let (mut fv, mut fw) = (fx, fx);
    let mut evals = 1;
    let (mut d, mut e) = (0.0_f64, 0.0_f64);
    while evals < max_evals {
        let xm = 0.5 * (a + b);
        let tol1 = sqrt_eps * x.abs() + xtol / 3.0;
        let tol2 = 2.0 * tol1;
        if (x - xm).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden_step = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let e_old = e;
            e = d;
            if p.abs() < (0.5 * q * e_old).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if (u - a) < tol2 || (b - u) < tol2 {
                    d = if xm >= x { tol1 } else { -tol1 };
                }
                golden_step = false;
            }
        }
        if golden_step {
            e = if x >= xm { a - x } else { b - x };
            d = golden * e;
        }
        let u = if d.abs() >= tol1 {
            x + d
        } else if d > 0.0 {
            x + tol1
        } else {
            x - tol1
        };
        let fu = func(u);
        evals += 1;
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, fx)
}
