//! Small quadrature toolbox: adaptive Simpson on an interval and
//! Gauss-Legendre nodes for smooth double integrals.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct QuadratureOutcome {
    pub value: f64,
    pub error_estimate: f64,
    pub evaluations: usize,
}

struct SimpsonState<'a, F> {
    f: &'a F,
    evaluations: usize,
    budget: usize,
    exhausted: bool,
}

/// Adaptive Simpson with Richardson correction. Errors out (carrying the
/// achieved estimate) if the evaluation budget is exhausted before the
/// requested tolerance is met.
pub fn adaptive_simpson<F>(f: F, a: f64, b: f64, tol: f64, budget: usize) -> Result<QuadratureOutcome>
where
    F: Fn(f64) -> f64,
{
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "quadrature tolerance must be positive, got {tol}"
        )));
    }
    let mut state = SimpsonState {
        f: &f,
        evaluations: 3,
        budget: budget.max(32),
        exhausted: false,
    };
    let fa = f(a);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let fb = f(b);
    let (value, err) = simpson_recurse(&mut state, a, b, fa, fm, fb, tol, 48);
    if state.exhausted {
        return Err(Error::QuadratureBudget {
            estimate: value,
            error_bound: err,
        });
    }
    Ok(QuadratureOutcome {
        value,
        error_estimate: err,
        evaluations: state.evaluations,
    })
}

fn simpson_recurse<F>(
    state: &mut SimpsonState<'_, F>,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    tol: f64,
    depth: usize,
) -> (f64, f64)
where
    F: Fn(f64) -> f64,
{
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = (state.f)(lm);
    let frm = (state.f)(rm);
    state.evaluations += 2;

    let coarse = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let fine = left + right;
    let delta = fine - coarse;

    if depth == 0 || state.evaluations >= state.budget {
        if delta.abs() > 15.0 * tol {
            state.exhausted = true;
        }
        return (fine + delta / 15.0, delta.abs() / 15.0);
    }
    if delta.abs() <= 15.0 * tol {
        return (fine + delta / 15.0, delta.abs() / 15.0);
    }
    let (lv, le) = simpson_recurse(state, a, m, fa, flm, fm, 0.5 * tol, depth - 1);
    let (rv, re) = simpson_recurse(state, m, b, fm, frm, fb, 0.5 * tol, depth - 1);
    (lv + rv, le + re)
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre_01(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let step = p / d;
            x -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

/// Value and derivative of the Legendre polynomial `P_n` at `x`.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// First derivative at 0 by central differences, Richardson-extrapolated
/// once: error `O(h^4)` against truncation, `O(eps/h)` against roundoff.
pub fn derivative1<F>(mut f: F, h: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut central = |s: f64| -> Result<f64> { Ok((f(s)? - f(-s)?) / (2.0 * s)) };
    let d_h = central(h)?;
    let d_h2 = central(0.5 * h)?;
    Ok((4.0 * d_h2 - d_h) / 3.0)
}

/// Second derivative at 0, central stencil with one Richardson step.
pub fn derivative2<F>(mut f: F, h: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let f0 = f(0.0)?;
    let mut central = |s: f64| -> Result<f64> { Ok((f(s)? - 2.0 * f0 + f(-s)?) / (s * s)) };
    let d_h = central(h)?;
    let d_h2 = central(0.5 * h)?;
    Ok((4.0 * d_h2 - d_h) / 3.0)
}

/// Third derivative at 0 from the 5-point antisymmetric stencil, with one
/// Richardson step.
pub fn derivative3<F>(mut f: F, h: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut stencil = |s: f64| -> Result<f64> {
        Ok((f(2.0 * s)? - 2.0 * f(s)? + 2.0 * f(-s)? - f(-2.0 * s)?) / (2.0 * s * s * s))
    };
    let d_h = stencil(h)?;
    let d_h2 = stencil(0.5 * h)?;
    Ok((4.0 * d_h2 - d_h) / 3.0)
}

/// Fourth derivative at 0 from the symmetric 5-point stencil, with one
/// Richardson step. Differencing noise grows quickly at this order; expect
/// only a few reliable digits.
pub fn derivative4<F>(mut f: F, h: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let f0 = f(0.0)?;
    let mut stencil = |s: f64| -> Result<f64> {
        Ok(
            (f(2.0 * s)? - 4.0 * f(s)? + 6.0 * f0 - 4.0 * f(-s)? + f(-2.0 * s)?)
                / (s * s * s * s),
        )
    };
    let d_h = stencil(h)?;
    let d_h2 = stencil(0.5 * h)?;
    Ok((4.0 * d_h2 - d_h) / 3.0)
}

/// Compensated (Kahan) accumulator for long sums.
#[derive(Debug, Clone, Copy, Default)]
pub struct Kahan {
    sum: f64,
    carry: f64,
}

impl Kahan {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_exact_on_cubic() {
        let out = adaptive_simpson(|x| x * x * x - 2.0 * x + 1.0, 0.0, 2.0, 1e-12, 10_000).unwrap();
        // integral = 4 - 4 + 2 = 2
        assert!((out.value - 2.0).abs() < 1e-12);
    }

    #[test]
    fn simpson_exp() {
        let out = adaptive_simpson(|x| (-x).exp(), 0.0, 1.0, 1e-12, 100_000).unwrap();
        let want = 1.0 - (-1.0_f64).exp();
        assert!((out.value - want).abs() < 1e-11);
    }

    #[test]
    fn simpson_budget_error() {
        let res = adaptive_simpson(|x| (50.0 * x).sin().abs(), 0.0, 1.0, 1e-14, 40);
        assert!(matches!(res, Err(Error::QuadratureBudget { .. })));
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre_01(8);
        // degree 15 is integrated exactly by 8 nodes
        let val: f64 = x
            .iter()
            .zip(&w)
            .map(|(&xi, &wi)| wi * xi.powi(15))
            .sum();
        assert!((val - 1.0 / 16.0).abs() < 1e-14);
        let total: f64 = w.iter().sum();
        assert!((total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn derivatives_of_exp() {
        let f = |x: f64| -> Result<f64> { Ok((1.3 * x).exp()) };
        let d1 = derivative1(f, 1e-3).unwrap();
        assert!((d1 - 1.3).abs() < 1e-10);
        let d2 = derivative2(f, 1e-3).unwrap();
        assert!((d2 - 1.69).abs() < 1e-8);
        let d3 = derivative3(f, 1e-2).unwrap();
        assert!((d3 - 1.3_f64.powi(3)).abs() < 1e-7);
        let d4 = derivative4(f, 3e-2).unwrap();
        assert!((d4 - 1.3_f64.powi(4)).abs() < 1e-4, "{d4}");
    }

    #[test]
    fn kahan_long_sum() {
        let mut k = Kahan::default();
        for _ in 0..1_000_000 {
            k.add(0.1);
        }
        assert!((k.value() - 100_000.0).abs() < 1e-9);
    }
}
