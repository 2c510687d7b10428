//! Means, scores, the BKM metric, and the simplex cumulants `M_n`.
//!
//! The metric `g(Y, Z) = Integral_0^1 Tr(rho^a Y rho^{1-a} Z) da` is
//! evaluated in the Hamiltonian eigenbasis through the logarithmic-mean
//! kernel `L(p_i, p_j)`, and independently by adaptive quadrature of the
//! alpha-integrand; the two routes are cross-checked everywhere.
//!
//! The n-point function
//!
//! ```text
//! M_n = Z * Integral_simplex Tr(rho^{a_1} V_1 ... rho^{a_n} V_n) da
//! ```
//!
//! reduces in the eigenbasis to a cyclic chain sum weighted by the simplex
//! kernels of `exp(-x)` at the participating energies. `M_1 = Z Tr(rho V)`
//! and `M_2 = Z g(V_1, V_2)` (uncentered); these identities are pinned by
//! tests. The summation is serial with compensated accumulation, so results
//! are bit-stable across runs and thread counts.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::gibbs::GibbsState;
use crate::linalg::{trace_product, HermitianOperator};
use crate::quad::{adaptive_simpson, Kahan};
use crate::simplex::KernelTable;

/// Hard cost guard: the chain sum costs `dim^order` kernel lookups.
pub const MAX_ORDER_AT_LARGE_DIM: usize = 6;
pub const LARGE_DIM_THRESHOLD: usize = 12;

fn check_dims(state: &GibbsState, ops: &[&HermitianOperator]) -> Result<()> {
    for op in ops {
        if op.dim() != state.dim() {
            return Err(Error::DimensionMismatch {
                expected: state.dim(),
                got: op.dim(),
            });
        }
    }
    Ok(())
}

fn assert_real(value: C64, scale: f64, what: &str) -> f64 {
    assert!(
        value.im.abs() <= 1e-12 * scale.max(1.0),
        "{what}: imaginary residual {:.3e} exceeds tolerance",
        value.im
    );
    value.re
}

/// `Tr(rho Y)`, real for Hermitian `Y`.
pub fn true_mean(state: &GibbsState, y: &HermitianOperator) -> Result<f64> {
    check_dims(state, &[y])?;
    let t = trace_product(state.density().entries(), y.entries());
    Ok(assert_real(t, y.frobenius_norm(), "true mean"))
}

/// The regularized mean `Tr(rho^lambda Y rho^{1-lambda})`, `lambda` in
/// `(0, 1)`. At finite dimension this equals the true mean by cyclicity of
/// the trace; asserting that equality is the point of the operation.
pub fn regularized_mean(state: &GibbsState, y: &HermitianOperator, lambda: f64) -> Result<f64> {
    check_dims(state, &[y])?;
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "regularization exponent must lie in (0, 1), got {lambda}"
        )));
    }
    let left = state.density_power(lambda);
    let right = state.density_power(1.0 - lambda);
    let ly = left.entries() * y.entries();
    let t = trace_product(&ly, right.entries());
    Ok(assert_real(t, y.frobenius_norm(), "regularized mean"))
}

/// The score `Y - Tr(rho Y) I`: the centered observable.
pub fn score(state: &GibbsState, y: &HermitianOperator) -> Result<HermitianOperator> {
    let mean = true_mean(state, y)?;
    Ok(y.add_scaled_identity(-mean))
}

/// Logarithmic mean `L(p, q) = (p - q)/(log p - log q)` expressed through the
/// log ratio `w = log q - log p`, so Gibbs callers can pass exact energy
/// differences instead of differences of rounded logs. Near `w = 0` the
/// series `p (1 + w/2 + w^2/6 + ...)` takes over, since the direct quotient
/// loses digits as `q -> p`.
pub fn log_mean_from_ratio(p: f64, w: f64) -> f64 {
    if w.abs() < 1e-4 {
        p * (1.0 + w * (0.5 + w * (1.0 / 6.0 + w * (1.0 / 24.0 + w / 120.0))))
    } else {
        p * (w.exp() - 1.0) / w
    }
}

/// Logarithmic mean of two positive numbers; `L(p, p) = p`.
pub fn log_mean(p: f64, q: f64) -> f64 {
    assert!(p > 0.0 && q > 0.0, "log mean needs positive arguments");
    log_mean_from_ratio(p, (q / p).ln())
}

fn metric_kernel_sum(state: &GibbsState, y_eig: &DMatrix<C64>, z_eig: &DMatrix<C64>) -> C64 {
    let n = state.dim();
    let p = state.probabilities();
    let e = state.energies();
    let mut re = Kahan::default();
    let mut im = Kahan::default();
    for i in 0..n {
        for j in 0..n {
            // log p_j - log p_i = E_i - E_j exactly.
            let l = log_mean_from_ratio(p[i], e[i] - e[j]);
            if l == 0.0 {
                continue;
            }
            let term = y_eig[(i, j)] * z_eig[(j, i)] * l;
            re.add(term.re);
            im.add(term.im);
        }
    }
    C64::new(re.value(), im.value())
}

/// The BKM metric in closed form:
/// `g(Y, Z) = sum_{ij} Y_ij Z_ji L(p_i, p_j)` in the Hamiltonian eigenbasis.
///
/// With `center` set, `Y` and `Z` are replaced by their scores first.
/// Symmetric and bilinear; `g(Y, Y) >= 0`, strictly for nonzero centered `Y`.
pub fn bkm_metric(
    state: &GibbsState,
    y: &HermitianOperator,
    z: &HermitianOperator,
    center: bool,
) -> Result<f64> {
    check_dims(state, &[y, z])?;
    let (y_c, z_c);
    let (y_ref, z_ref) = if center {
        y_c = score(state, y)?;
        z_c = score(state, z)?;
        (&y_c, &z_c)
    } else {
        (y, z)
    };
    let y_eig = state.spectrum().to_eigenbasis(y_ref);
    let z_eig = state.spectrum().to_eigenbasis(z_ref);
    let g = metric_kernel_sum(state, &y_eig, &z_eig);
    Ok(assert_real(
        g,
        y_ref.frobenius_norm() * z_ref.frobenius_norm(),
        "BKM metric",
    ))
}

/// The same metric by adaptive quadrature of
/// `a -> Tr(rho^a Y rho^{1-a} Z)` on `[0, 1]` — the oracle route, built from
/// matrix powers and products rather than the logarithmic-mean kernel.
pub fn bkm_metric_quadrature(
    state: &GibbsState,
    y: &HermitianOperator,
    z: &HermitianOperator,
    tol: f64,
) -> Result<f64> {
    check_dims(state, &[y, z])?;
    let integrand = |alpha: f64| {
        let ra = state.density_power(alpha);
        let rb = state.density_power(1.0 - alpha);
        let ray = ra.entries() * y.entries();
        let rbz = rb.entries() * z.entries();
        trace_product(&ray, &rbz).re
    };
    let out = adaptive_simpson(integrand, 0.0, 1.0, tol, 100_000)?;
    Ok(out.value)
}

/// `M_n` as a complex number. For a cyclic-conjugation-symmetric direction
/// list (in particular, identical Hermitian directions) the imaginary part
/// vanishes; for three or more distinct directions it need not.
pub fn npoint_function_full(state: &GibbsState, directions: &[&HermitianOperator]) -> Result<C64> {
    let n = directions.len();
    if n == 0 {
        return Err(Error::InvalidArgument(
            "n-point function needs at least one direction".into(),
        ));
    }
    check_dims(state, directions)?;
    let dim = state.dim();
    if n > MAX_ORDER_AT_LARGE_DIM && dim > LARGE_DIM_THRESHOLD {
        return Err(Error::BudgetExceeded { order: n, dim });
    }

    let mats: Vec<DMatrix<C64>> = directions
        .iter()
        .map(|v| state.spectrum().to_eigenbasis(v))
        .collect();
    let table = KernelTable::build(state.energies().as_slice(), n)?;

    let mut sum = ChainSum {
        dim,
        n,
        mats: &mats,
        table: &table,
        tuple: vec![0; n],
        scratch: vec![0; n],
        re: Kahan::default(),
        im: Kahan::default(),
    };
    sum.run();
    Ok(C64::new(sum.re.value(), sum.im.value()))
}

/// The n-point function `M_n` for identical or exchange-symmetric direction
/// lists; returns the real part after asserting the imaginary residual is
/// negligible.
pub fn npoint_function(state: &GibbsState, directions: &[&HermitianOperator]) -> Result<f64> {
    let full = npoint_function_full(state, directions)?;
    let scale = directions
        .iter()
        .map(|v| v.frobenius_norm())
        .product::<f64>();
    Ok(assert_real(full, scale, "n-point function"))
}

struct ChainSum<'a> {
    dim: usize,
    n: usize,
    mats: &'a [DMatrix<C64>],
    table: &'a KernelTable,
    tuple: Vec<usize>,
    scratch: Vec<usize>,
    re: Kahan,
    im: Kahan,
}

impl ChainSum<'_> {
    fn run(&mut self) {
        for i0 in 0..self.dim {
            self.tuple[0] = i0;
            self.descend(1, C64::new(1.0, 0.0));
        }
    }

    fn descend(&mut self, depth: usize, acc: C64) {
        if depth == self.n {
            let close = self.mats[self.n - 1][(self.tuple[self.n - 1], self.tuple[0])];
            let chain = acc * close;
            if chain.re != 0.0 || chain.im != 0.0 {
                let k = self.table.value_for(&self.tuple, &mut self.scratch);
                self.re.add(chain.re * k);
                self.im.add(chain.im * k);
            }
            return;
        }
        let prev = self.tuple[depth - 1];
        for i in 0..self.dim {
            let link = self.mats[depth - 1][(prev, i)];
            if link.re == 0.0 && link.im == 0.0 {
                continue;
            }
            self.tuple[depth] = i;
            self.descend(depth + 1, acc * link);
        }
    }
}

/// Raw three-slot simplex form
/// `Integral_simplex Tr(rho^{a_1} A rho^{a_2} B rho^{a_3} C) da`
/// as a complex number, exposed for cumulant audits.
pub fn simplex_threeform(
    state: &GibbsState,
    a: &HermitianOperator,
    b: &HermitianOperator,
    c: &HermitianOperator,
) -> Result<C64> {
    let m3 = npoint_function_full(state, &[a, b, c])?;
    Ok(m3 / state.partition())
}

/// The third cumulant of the free energy: the trilinear third derivative of
/// `psi(lambda)` in the directions `Y, Z, W`.
///
/// Inputs are centered internally. In terms of the raw simplex form `m3`,
/// the derivative is `-(m3(Y,Z,W) + m3(Y,W,Z))`; with equal arguments this
/// is `-2 m3(V,V,V)`, which the finite-difference oracle on `psi` pins.
pub fn third_cumulant(
    state: &GibbsState,
    y: &HermitianOperator,
    z: &HermitianOperator,
    w: &HermitianOperator,
) -> Result<f64> {
    check_dims(state, &[y, z, w])?;
    let yc = score(state, y)?;
    let zc = score(state, z)?;
    let wc = score(state, w)?;
    let a = simplex_threeform(state, &yc, &zc, &wc)?;
    let b = simplex_threeform(state, &yc, &wc, &zc)?;
    let total = -(a + b);
    let scale = yc.frobenius_norm() * zc.frobenius_norm() * wc.frobenius_norm();
    Ok(assert_real(total, scale, "third cumulant"))
}

/// The closed-form bound on `|M_n|`:
/// `4 ||rho^beta||_1 Z^{-beta} n^2 n^n e^{-n} prod_j ||V_j||_omega/(1-beta)`,
/// together with the delta schedule the derivation uses.
#[derive(Debug, Clone)]
pub struct NpointBound {
    pub value: f64,
    /// `delta_j = 1 - j/n` for `j = 1..n-1`, and `delta_n = 1`.
    pub delta_schedule: Vec<f64>,
}

pub fn npoint_bound(
    n: usize,
    beta: f64,
    partition: f64,
    trace_rho_beta: f64,
    omega_norms: &[f64],
) -> Result<NpointBound> {
    if n == 0 {
        return Err(Error::InvalidArgument("bound order must be positive".into()));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "bound exponent beta must lie in (0, 1), got {beta}"
        )));
    }
    if omega_norms.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: omega_norms.len(),
        });
    }
    let nf = n as f64;
    let mut value =
        4.0 * trace_rho_beta * partition.powf(-beta) * nf * nf * nf.powf(nf) * (-nf).exp();
    for &w in omega_norms {
        value *= w / (1.0 - beta);
    }
    let mut delta_schedule: Vec<f64> = (1..n).map(|j| 1.0 - j as f64 / nf).collect();
    delta_schedule.push(1.0);
    Ok(NpointBound {
        value,
        delta_schedule,
    })
}

/// Attaches a membership diagnostic to bound evaluations.
#[derive(Debug, Clone, Copy)]
pub struct BetaDiagnostic {
    pub beta: f64,
    /// `Tr rho^beta` at the working truncation.
    pub trace_rho_beta: f64,
}

/// Cumulants `M_1..M_n` of one direction with the matching Taylor
/// coefficients and, when a beta diagnostic is supplied, the closed-form
/// bound per order.
#[derive(Debug, Clone)]
pub struct CumulantTable {
    pub orders: Vec<usize>,
    pub m_values: Vec<f64>,
    /// Signed Dyson coefficients `c_k` with `Z(lambda) = Z + sum c_k lambda^k`;
    /// the scalar model pins `c_k = (-1)^k M_k / k`.
    pub taylor_coefficients: Vec<f64>,
    pub bound_values: Option<Vec<f64>>,
    /// `|M_k|` over the bound; reported, never asserted.
    pub bound_ratios: Option<Vec<f64>>,
}

pub fn cumulant_table(
    state: &GibbsState,
    direction: &HermitianOperator,
    omega_norm: f64,
    max_order: usize,
    beta_diag: Option<BetaDiagnostic>,
) -> Result<CumulantTable> {
    if max_order == 0 {
        return Err(Error::InvalidArgument(
            "cumulant table needs at least order 1".into(),
        ));
    }
    let mut orders = Vec::with_capacity(max_order);
    let mut m_values = Vec::with_capacity(max_order);
    let mut taylor = Vec::with_capacity(max_order);
    let dirs: Vec<&HermitianOperator> = vec![direction; max_order];
    for k in 1..=max_order {
        let m = npoint_function(state, &dirs[..k])?;
        orders.push(k);
        m_values.push(m);
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        taylor.push(sign * m / k as f64);
    }
    let (bound_values, bound_ratios) = match beta_diag {
        Some(diag) => {
            let mut bv = Vec::with_capacity(max_order);
            let mut br = Vec::with_capacity(max_order);
            for k in 1..=max_order {
                let b = npoint_bound(
                    k,
                    diag.beta,
                    state.partition(),
                    diag.trace_rho_beta,
                    &vec![omega_norm; k],
                )?;
                bv.push(b.value);
                br.push(m_values[k - 1].abs() / b.value);
            }
            (Some(bv), Some(br))
        }
        None => (None, None),
    };
    Ok(CumulantTable {
        orders,
        m_values,
        taylor_coefficients: taylor,
        bound_values,
        bound_ratios,
    })
}
