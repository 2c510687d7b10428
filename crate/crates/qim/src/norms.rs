//! Relative-boundedness norms and the operator inequalities that relate
//! them: the omega-norm `||R V||`, the form norm `||R^{1/2} V R^{1/2}||`,
//! domination, interpolation, the perturbed-resolvent identity, and the
//! norm-equivalence constants between base points.
//!
//! At finite dimension both quantities are genuine norms; the form/omega gap
//! is quantitative rather than a domain distinction. `R` always denotes the
//! inverse of the normalized Hamiltonian of the base state, so `||R|| <= 1`.

use crate::error::{Error, Result};
use crate::gibbs::GibbsState;
use crate::linalg::{operator_norm, HermitianOperator};

/// Slack admitted on inequality assertions; dense eigensolver noise at
/// desk scale stays well below this.
pub const INEQUALITY_SLACK: f64 = 1e-10;

/// A symmetric perturbation direction with its relative norms cached against
/// a fixed base state.
#[derive(Debug, Clone)]
pub struct PerturbationDirection {
    operator: HermitianOperator,
    omega_norm: f64,
    form_norm: f64,
}

impl PerturbationDirection {
    pub fn new(base: &GibbsState, operator: HermitianOperator) -> Result<Self> {
        let omega = omega_norm(base, &operator)?;
        let form = form_norm(base, &operator)?;
        Ok(Self {
            operator,
            omega_norm: omega,
            form_norm: form,
        })
    }

    pub fn operator(&self) -> &HermitianOperator {
        &self.operator
    }

    /// Cached `||R V||`.
    pub fn omega_norm(&self) -> f64 {
        self.omega_norm
    }

    /// Cached `||R^{1/2} V R^{1/2}||`; never exceeds the omega norm.
    pub fn form_norm(&self) -> f64 {
        self.form_norm
    }
}

fn check_dims(base: &GibbsState, v: &HermitianOperator) -> Result<()> {
    if base.dim() != v.dim() {
        return Err(Error::DimensionMismatch {
            expected: base.dim(),
            got: v.dim(),
        });
    }
    Ok(())
}

/// The omega-norm `||R V||` with `R = H^{-1}` of the base state.
pub fn omega_norm(base: &GibbsState, v: &HermitianOperator) -> Result<f64> {
    check_dims(base, v)?;
    let rv = base.resolvent().matmul(v);
    Ok(operator_norm(&rv))
}

/// The form norm `||R^{1/2} V R^{1/2}||`, the square root taken spectrally
/// (the unique positive root).
pub fn form_norm(base: &GibbsState, v: &HermitianOperator) -> Result<f64> {
    check_dims(base, v)?;
    let r_half = base.hamiltonian_power(-0.5);
    let m = r_half.entries() * v.entries() * r_half.entries();
    Ok(operator_norm(&m))
}

/// Both sides of the interpolation bound
/// `||R^delta V R^{1-delta}|| <= ||R V||`.
#[derive(Debug, Clone, Copy)]
pub struct InterpolationCheck {
    pub lhs: f64,
    pub rhs: f64,
}

pub fn interpolation_bound_check(
    base: &GibbsState,
    v: &HermitianOperator,
    delta: f64,
) -> Result<InterpolationCheck> {
    check_dims(base, v)?;
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::InvalidArgument(format!(
            "interpolation exponent must lie in [0, 1], got {delta}"
        )));
    }
    let left = base.hamiltonian_power(-delta);
    let right = base.hamiltonian_power(-(1.0 - delta));
    let lhs = operator_norm(&(left.entries() * v.entries() * right.entries()));
    let rhs = omega_norm(base, v)?;
    Ok(InterpolationCheck { lhs, rhs })
}

/// Outcome of the perturbed-resolvent identity check
/// `(I + Y R_X)(H_X R_{X+Y}) = I`.
#[derive(Debug, Clone, Copy)]
pub struct ResolventIdentityCheck {
    /// `||(I + Y R_X)(H_X R_{X+Y}) - I||`.
    pub product_residual: f64,
    /// `||H_X R_{X+Y}||`.
    pub bound_lhs: f64,
    /// `(1 - ||Y R_X||)^{-1}`, present only in the hypothesis region
    /// `||Y R_X|| < 1`.
    pub bound_rhs: Option<f64>,
    /// `||Y R_X||`.
    pub y_rx_norm: f64,
}

pub fn resolvent_identity_check(
    base_x: &GibbsState,
    y: &HermitianOperator,
) -> Result<ResolventIdentityCheck> {
    check_dims(base_x, y)?;
    let n = base_x.dim();
    let h_x = base_x.hamiltonian();
    let r_x = base_x.resolvent();

    let perturbed = h_x.add(y)?;
    let d = crate::linalg::eig(&perturbed)?;
    let min_abs = d.eigenvalues().iter().fold(f64::INFINITY, |m, &l| m.min(l.abs()));
    let max_abs = d.eigenvalues().iter().fold(0.0_f64, |m, &l| m.max(l.abs()));
    if min_abs <= 1e-12 * max_abs.max(1.0) {
        return Err(Error::SingularPerturbation {
            min_abs_eigenvalue: min_abs,
        });
    }
    let r_xy = crate::linalg::matrix_function(&d, |l| 1.0 / l)?;

    let y_rx = y.matmul(&r_x);
    let y_rx_norm = operator_norm(&y_rx);
    let hx_rxy = h_x.matmul(&r_xy);
    let eye = nalgebra::DMatrix::identity(n, n);
    let product = (&eye + &y_rx) * &hx_rxy;
    let product_residual = operator_norm(&(product - eye));
    let bound_lhs = operator_norm(&hx_rxy);
    let bound_rhs = (y_rx_norm < 1.0).then(|| 1.0 / (1.0 - y_rx_norm));

    Ok(ResolventIdentityCheck {
        product_residual,
        bound_lhs,
        bound_rhs,
        y_rx_norm,
    })
}

/// Norm-equivalence constants between two base points:
/// `m ||Y R_0|| <= ||Y R_X|| <= M ||R_0 Y||` for every symmetric `Y`.
#[derive(Debug, Clone, Copy)]
pub struct EquivalenceConstants {
    /// `m = ||(H_X + I) R_0||^{-1}`.
    pub lower: f64,
    /// `M = ||(H_0 + I) R_X||`.
    pub upper: f64,
}

pub fn equivalence_constants(
    base0: &GibbsState,
    base_x: &GibbsState,
) -> Result<EquivalenceConstants> {
    if base0.dim() != base_x.dim() {
        return Err(Error::DimensionMismatch {
            expected: base0.dim(),
            got: base_x.dim(),
        });
    }
    let r0 = base0.resolvent();
    let rx = base_x.resolvent();
    let hx_plus = base_x.hamiltonian().add_scaled_identity(1.0);
    let h0_plus = base0.hamiltonian().add_scaled_identity(1.0);
    let lower = 1.0 / operator_norm(&hx_plus.matmul(&r0));
    let upper = operator_norm(&h0_plus.matmul(&rx));
    Ok(EquivalenceConstants { lower, upper })
}

/// The three terms of the equivalence sandwich for a concrete direction,
/// with both left and right resolvent placements of the middle norm.
#[derive(Debug, Clone, Copy)]
pub struct SandwichCheck {
    pub lower_bound: f64,
    pub mid_right: f64,
    pub mid_left: f64,
    pub upper_bound: f64,
}

pub fn equivalence_sandwich(
    base0: &GibbsState,
    base_x: &GibbsState,
    y: &HermitianOperator,
) -> Result<SandwichCheck> {
    check_dims(base0, y)?;
    let consts = equivalence_constants(base0, base_x)?;
    let r0 = base0.resolvent();
    let rx = base_x.resolvent();
    let y_r0 = operator_norm(&y.matmul(&r0));
    let r0_y = operator_norm(&r0.matmul(y));
    let mid_right = operator_norm(&y.matmul(&rx));
    let mid_left = operator_norm(&rx.matmul(y));
    // For self-adjoint Y and R the two placements agree by adjoints; both are
    // reported so the caller can assert it.
    Ok(SandwichCheck {
        lower_bound: consts.lower * y_r0,
        mid_right,
        mid_left,
        upper_bound: consts.upper * r0_y,
    })
}
