//! Scalar building blocks of the model: the smooth truncation `T^m`, the
//! entropy densities `g` and `g_m`, and the `z = sqrt(v + alpha^2)` change of
//! variables.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Field;

/// Physical and regularization parameters of the controlled system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Consumption exponent, `s >= 1`.
    pub s: f64,
    /// Shift in `z = sqrt(v + alpha^2)`.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Truncation level; `f64::INFINITY` disables truncation.
    #[serde(default = "default_m")]
    pub m: f64,
    /// Integrability exponent of the control, `q > 5/2`.
    #[serde(default = "default_q")]
    pub q: f64,
    pub t_final: f64,
}

fn default_alpha() -> f64 {
    0.1
}

fn default_m() -> f64 {
    1.0e6
}

fn default_q() -> f64 {
    3.0
}

impl ModelParams {
    pub fn new(s: f64, t_final: f64) -> Self {
        ModelParams {
            s,
            alpha: default_alpha(),
            m: default_m(),
            q: default_q(),
            t_final,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s >= 1.0) || !self.s.is_finite() {
            return Err(Error::Domain(format!("s must be >= 1, got {}", self.s)));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::Domain(format!(
                "alpha must be > 0, got {}",
                self.alpha
            )));
        }
        if !(self.m > 0.0) {
            return Err(Error::Domain(format!("m must be > 0, got {}", self.m)));
        }
        if !(self.q > 2.5) || !self.q.is_finite() {
            return Err(Error::Domain(format!("q must be > 5/2, got {}", self.q)));
        }
        if !(self.t_final >= 0.0) || !self.t_final.is_finite() {
            return Err(Error::Domain(format!(
                "T_final must be a nonnegative finite time, got {}",
                self.t_final
            )));
        }
        Ok(())
    }

    /// Exponent of the state tracking term, `5s/3`.
    pub fn state_exponent(&self) -> f64 {
        5.0 * self.s / 3.0
    }
}

fn check_nonneg(r: f64, what: &str) -> Result<()> {
    if r >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what} needs r >= 0, got {r}")))
    }
}

/// Unchecked `T^m(r)` for `r >= 0`: identity up to `m`, then an exponential
/// cap approaching `m + 1`.
#[inline]
pub fn truncate_unchecked(r: f64, m: f64) -> f64 {
    if r <= m {
        r
    } else {
        m + 1.0 - (-(r - m)).exp()
    }
}

pub fn truncate(r: f64, m: f64) -> Result<f64> {
    check_nonneg(r, "truncate")?;
    Ok(truncate_unchecked(r, m))
}

pub fn truncate_derivative(r: f64, m: f64) -> Result<f64> {
    check_nonneg(r, "truncate_derivative")?;
    Ok(if r <= m { 1.0 } else { (-(r - m)).exp() })
}

/// Cellwise `T^m` of a nonnegative field.
pub fn truncate_field(u: &Field, m: f64) -> Result<Field> {
    if let Some(i) = u.values().iter().position(|&x| x < 0.0) {
        return Err(Error::Domain(format!(
            "truncate needs a nonnegative field, cell {i} is {}",
            u[i]
        )));
    }
    Ok(u.map(|x| truncate_unchecked(x, m)))
}

fn check_s(s: f64) -> Result<()> {
    if s >= 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("s must be >= 1, got {s}")))
    }
}

/// Entropy density: `(u+1)ln(u+1) - u` for `s = 1`, `u^s / (s(s-1))` for
/// `s > 1`. No special handling of `s -> 1+`.
pub fn g_energy(u: f64, s: f64) -> Result<f64> {
    check_s(s)?;
    check_nonneg(u, "g_energy")?;
    Ok(g_unchecked(u, s))
}

#[inline]
pub(crate) fn g_unchecked(u: f64, s: f64) -> f64 {
    if s == 1.0 {
        (u + 1.0) * u.ln_1p() - u
    } else {
        u.powf(s) / (s * (s - 1.0))
    }
}

/// Derivative of the truncated entropy, `g_m'(theta)`.
#[inline]
pub fn g_m_prime(theta: f64, s: f64, m: f64) -> f64 {
    let t = truncate_unchecked(theta, m);
    if s == 1.0 {
        t.ln_1p()
    } else {
        t.powf(s - 1.0) / (s - 1.0)
    }
}

const TAIL_TOLERANCE: f64 = 1e-12;

/// Truncated entropy `g_m(u) = int_0^u g_m'`. Exact below the knee, adaptive
/// Simpson on the tail `(m, u]`.
pub fn g_m_energy(u: f64, s: f64, m: f64) -> Result<f64> {
    check_s(s)?;
    check_nonneg(u, "g_m_energy")?;
    Ok(g_m_unchecked(u, s, m))
}

pub(crate) fn g_m_unchecked(u: f64, s: f64, m: f64) -> f64 {
    if u <= m {
        return g_unchecked(u, s);
    }
    g_unchecked(m, s) + adaptive_simpson(|t| g_m_prime(t, s, m), m, u, TAIL_TOLERANCE)
}

/// Adaptive Simpson quadrature with absolute tolerance `tol`.
pub fn adaptive_simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }

    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }

    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = simpson(fa, fm, fb, a, b);
    recurse(&f, a, b, fa, fm, fb, whole, tol, 48)
}

pub fn z_transform(v: &Field, alpha: f64) -> Result<Field> {
    if !(alpha > 0.0) {
        return Err(Error::Domain(format!("alpha must be > 0, got {alpha}")));
    }
    if let Some(i) = v.values().iter().position(|&x| x < 0.0) {
        return Err(Error::Domain(format!(
            "z transform needs v >= 0, cell {i} is {}",
            v[i]
        )));
    }
    let a2 = alpha * alpha;
    Ok(v.map(|x| (x + a2).sqrt()))
}

pub fn z_inverse(z: &Field, alpha: f64) -> Result<Field> {
    if !(alpha > 0.0) {
        return Err(Error::Domain(format!("alpha must be > 0, got {alpha}")));
    }
    if let Some(i) = z.values().iter().position(|&x| x < alpha) {
        return Err(Error::Domain(format!(
            "inverse z transform needs z >= alpha = {alpha}, cell {i} is {}",
            z[i]
        )));
    }
    Ok(z.map(|x| (x - alpha) * (x + alpha)))
}

/// Checks `|w2^s - w1^s| <= s |w2 + w1|^(s-1) |w2 - w1|` with `1e-12` slack.
pub fn power_difference_bound_holds(w1: f64, w2: f64, s: f64) -> bool {
    let lhs = (w2.powf(s) - w1.powf(s)).abs();
    let rhs = s * (w2 + w1).abs().powf(s - 1.0) * (w2 - w1).abs();
    lhs <= rhs + 1e-12 * (1.0 + rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use proptest::prelude::*;
    use std::sync::Arc;

    #[test]
    fn truncate_examples() {
        assert_eq!(truncate(3.0, 5.0).unwrap(), 3.0);
        assert_eq!(truncate(5.0, 5.0).unwrap(), 5.0);
        let t = truncate(7.0, 5.0).unwrap();
        assert!((t - (6.0 - (-2f64).exp())).abs() < 1e-15);
        assert!((t - 5.8647).abs() < 1e-4);
        assert!(matches!(truncate(-1.0, 5.0), Err(Error::Domain(_))));
    }

    #[test]
    fn truncate_derivative_examples() {
        assert_eq!(truncate_derivative(3.0, 5.0).unwrap(), 1.0);
        assert_eq!(truncate_derivative(5.0, 5.0).unwrap(), 1.0);
        let d = truncate_derivative(7.0, 5.0).unwrap();
        assert!((d - (-2f64).exp()).abs() < 1e-15);
        assert!((d - 0.1353).abs() < 1e-4);
        assert!(truncate_derivative(-0.1, 1.0).is_err());
    }

    #[test]
    fn g_energy_examples() {
        for s in [1.0, 1.5, 2.0, 3.0] {
            assert_eq!(g_energy(0.0, s).unwrap(), 0.0);
        }
        assert_eq!(g_energy(2.0, 2.0).unwrap(), 2.0);
        let g = g_energy(1.0, 1.0).unwrap();
        assert!((g - (2.0 * 2f64.ln() - 1.0)).abs() < 1e-15);
        assert!((g - 0.3863).abs() < 1e-4);
        assert!(matches!(g_energy(1.0, 0.5), Err(Error::Domain(_))));
    }

    /// Composite Simpson with a fixed, fine panel count.
    fn simpson_reference(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
        let h = (b - a) / panels as f64;
        let mut sum = f(a) + f(b);
        for k in 1..panels {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            sum += w * f(a + k as f64 * h);
        }
        sum * h / 3.0
    }

    #[test]
    fn g_m_energy_examples() {
        assert_eq!(g_m_energy(0.0, 2.0, 5.0).unwrap(), 0.0);
        for s in [1.0, 1.5, 2.0, 3.0] {
            for u in [0.0, 0.3, 2.0, 5.0] {
                assert_eq!(g_m_energy(u, s, 5.0).unwrap(), g_energy(u, s).unwrap());
            }
        }
        // int_0^5 theta + int_5^7 T^5(theta), tail by a fine composite Simpson.
        let tail = simpson_reference(|t| truncate_unchecked(t, 5.0), 5.0, 7.0, 20_000);
        let expected = 12.5 + tail;
        let got = g_m_energy(7.0, 2.0, 5.0).unwrap();
        assert!((got - expected).abs() < 1e-10, "{got} vs {expected}");
        // The tail also has a closed form for s = 2: 2(m+1) - (1 - e^-2).
        let closed = 12.5 + 2.0 * 6.0 - (1.0 - (-2f64).exp());
        assert!((got - closed).abs() < 1e-10);
    }

    #[test]
    fn g_m_converges_monotonically_in_m() {
        for s in [1.0, 1.5, 2.0, 3.0] {
            let u = 9.0;
            let exact = g_energy(u, s).unwrap();
            let mut prev = -1.0;
            for m in [1.0, 2.0, 4.0, 8.0, 16.0] {
                let gm = g_m_energy(u, s, m).unwrap();
                assert!(gm <= exact + 1e-12);
                assert!(gm >= prev, "s={s} m={m}: {gm} < {prev}");
                prev = gm;
            }
            assert_eq!(prev, exact);
        }
    }

    #[test]
    fn z_transform_examples() {
        let g = Arc::new(Grid::on_box(vec![3, 2], &[1.0, 1.0]).unwrap());
        let z = z_transform(&Field::zeros(g.clone()), 0.1).unwrap();
        assert!(z.values().iter().all(|&x| (x - 0.1).abs() < 1e-16));
        let z = z_transform(&Field::constant(g.clone(), 3.0), 1.0).unwrap();
        assert!(z.values().iter().all(|&x| x == 2.0));

        let mut bad = Field::constant(g.clone(), 1.0);
        bad[4] = -1e-3;
        let err = z_transform(&bad, 0.1).unwrap_err().to_string();
        assert!(err.contains("cell 4"), "{err}");
        let low = Field::constant(g, 0.05);
        assert!(z_inverse(&low, 0.1).unwrap_err().to_string().contains("cell 0"));
    }

    #[test]
    fn power_difference_examples() {
        assert!(power_difference_bound_holds(0.7, 0.7, 2.5));
        assert!(power_difference_bound_holds(0.0, 1.0, 3.0));
        let lhs = (1f64.powf(3.0) - 0f64.powf(3.0)).abs();
        assert_eq!(lhs, 1.0);
    }

    proptest! {
        #[test]
        fn truncate_is_monotone_and_lipschitz(a in 0.0..50.0f64, b in 0.0..50.0f64, m in 0.1..20.0f64) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let tl = truncate(lo, m).unwrap();
            let th = truncate(hi, m).unwrap();
            prop_assert!(tl <= th);
            prop_assert!(th - tl <= hi - lo + 1e-12);
            prop_assert!(th <= hi.min(m + 1.0));
        }

        #[test]
        fn truncate_derivative_matches_finite_difference(r in 0.0..40.0f64, m in 0.5..20.0f64) {
            prop_assume!((r - m).abs() > 1e-3);
            let h = 1e-6;
            let lo = (r - h).max(0.0);
            let fd = (truncate(r + h, m).unwrap() - truncate(lo, m).unwrap()) / (r + h - lo);
            let d = truncate_derivative(r, m).unwrap();
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert!((fd - d).abs() < 1e-6, "fd {} vs {}", fd, d);
        }

        #[test]
        fn g_energy_is_midpoint_convex(a in 0.0..20.0f64, b in 0.0..20.0f64, si in 0usize..4) {
            let s = [1.0, 1.5, 2.0, 3.0][si];
            let mid = g_energy(0.5 * (a + b), s).unwrap();
            let avg = 0.5 * (g_energy(a, s).unwrap() + g_energy(b, s).unwrap());
            prop_assert!(mid <= avg + 1e-12 * (1.0 + avg.abs()));
            prop_assert!(mid >= 0.0);
        }

        #[test]
        fn power_difference_bound_on_random_triples(w1 in 0.0..100.0f64, w2 in 0.0..100.0f64, s in 1.0..6.0f64) {
            prop_assert!(power_difference_bound_holds(w1, w2, s));
        }

        #[test]
        fn z_round_trip(values in proptest::collection::vec(0.0..1.0f64, 16)) {
            let g = Arc::new(Grid::on_box(vec![16], &[1.0]).unwrap());
            let v = Field::new(g, values).unwrap();
            let back = z_inverse(&z_transform(&v, 0.1).unwrap(), 0.1).unwrap();
            for (a, b) in v.values().iter().zip(back.values()) {
                prop_assert!((a - b).abs() < 1e-14);
            }
        }
    }
}
