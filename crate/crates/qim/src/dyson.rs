//! Taylor/Dyson expansion of the partition function and free energy.
//!
//! Ground truth is always the exact spectral evaluation of the perturbed
//! operator `H + lambda V`; the expansion, the Frechet-derivative checks,
//! the Duhamel remainder, and the convergence-radius estimates are all
//! measured against it.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::bkm::{cumulant_table, true_mean, BetaDiagnostic, CumulantTable};
use crate::error::{Error, Result};
use crate::gibbs::GibbsState;
use crate::linalg::{eig, trace_norm, HermitianOperator};
use crate::norms::PerturbationDirection;
use crate::quad::gauss_legendre_01;

/// `psi(lambda) = log Tr exp(-(H + lambda V))`, computed spectrally from the
/// exact perturbed operator via a shifted log-sum-exp. No renormalization is
/// applied; this is the ground-truth oracle for every series claim.
pub fn direct_free_energy(
    state: &GibbsState,
    v: &HermitianOperator,
    lambda: f64,
) -> Result<f64> {
    if v.dim() != state.dim() {
        return Err(Error::DimensionMismatch {
            expected: state.dim(),
            got: v.dim(),
        });
    }
    let perturbed = state.hamiltonian().add(&v.scale(lambda))?;
    let d = eig(&perturbed)?;
    let e_min = d.min_eigenvalue();
    let total: f64 = d
        .eigenvalues()
        .iter()
        .map(|&e| (-(e - e_min)).exp())
        .sum();
    Ok(-e_min + total.ln())
}

/// `Z(lambda) = Tr exp(-(H + lambda V))`.
pub fn direct_partition(state: &GibbsState, v: &HermitianOperator, lambda: f64) -> Result<f64> {
    Ok(direct_free_energy(state, v, lambda)?.exp())
}

/// Truncated Taylor expansion of the partition function around `lambda = 0`:
/// `Z(lambda) ~ Z + sum_{k=1..order} c_k lambda^k` with the scalar-pinned
/// signed coefficients `c_k = (-1)^k M_k / k`.
#[derive(Debug, Clone)]
pub struct SeriesExpansion {
    order: usize,
    z0: f64,
    omega_norm: f64,
    beta_eff: Option<f64>,
    table: CumulantTable,
}

impl SeriesExpansion {
    pub fn order(&self) -> usize {
        self.order
    }

    /// The unperturbed partition function (the order-zero coefficient).
    pub fn z0(&self) -> f64 {
        self.z0
    }

    pub fn omega_norm(&self) -> f64 {
        self.omega_norm
    }

    pub fn beta_eff(&self) -> Option<f64> {
        self.beta_eff
    }

    pub fn table(&self) -> &CumulantTable {
        &self.table
    }

    /// Coefficients `c_0..c_order`.
    pub fn coefficients(&self) -> Vec<f64> {
        let mut c = Vec::with_capacity(self.order + 1);
        c.push(self.z0);
        c.extend_from_slice(&self.table.taylor_coefficients);
        c
    }

    /// Evaluate the partial sum at `lambda` (Horner form).
    pub fn evaluate(&self, lambda: f64) -> f64 {
        let coeffs = self.coefficients();
        let mut acc = 0.0;
        for &c in coeffs.iter().rev() {
            acc = acc * lambda + c;
        }
        acc
    }

    /// Geometric estimate of the first truncated term, inflated by the
    /// geometric tail factor. The ratio of the last few coefficient
    /// magnitudes extrapolates `|c_{order+1}|`; the tail factor accounts for
    /// everything past it.
    pub fn next_term_estimate(&self, lambda: f64) -> f64 {
        let c = &self.table.taylor_coefficients;
        let mut ratios = Vec::new();
        for w in c.windows(2).rev().take(3) {
            if w[0].abs() > 0.0 && w[1].abs() > 0.0 {
                ratios.push(w[1].abs() / w[0].abs());
            }
        }
        let q = ratios
            .iter()
            .cloned()
            .fold(f64::NAN, f64::max)
            .max(f64::MIN_POSITIVE);
        let q = if q.is_nan() { 2.0 * self.omega_norm } else { q };
        let last = c.last().map(|x| x.abs()).unwrap_or(0.0);
        let head = last * q * lambda.abs().powi(self.order as i32 + 1);
        let tail = 1.0 - (q * lambda.abs()).min(0.9);
        head / tail
    }

    /// `(1 - beta_eff)/||V||_omega`, when a membership diagnostic was
    /// attached.
    pub fn radius_bound(&self) -> Option<f64> {
        self.beta_eff.map(|b| (1.0 - b) / self.omega_norm)
    }
}

/// Expand the partition function to the requested order. The optional beta
/// diagnostic attaches the closed-form bound values per order and fixes the
/// radius bound `(1 - beta)/||V||_omega`.
pub fn expand(
    state: &GibbsState,
    direction: &PerturbationDirection,
    order: usize,
    beta_diag: Option<BetaDiagnostic>,
) -> Result<SeriesExpansion> {
    let table = cumulant_table(
        state,
        direction.operator(),
        direction.omega_norm(),
        order,
        beta_diag,
    )?;
    Ok(SeriesExpansion {
        order,
        z0: state.partition(),
        omega_norm: direction.omega_norm(),
        beta_eff: beta_diag.map(|d| d.beta),
        table,
    })
}

/// Outcome of the first-order Duhamel remainder check.
#[derive(Debug, Clone, Copy)]
pub struct DuhamelCheck {
    /// `| (Z(lambda) - Z(0))/lambda + Z Tr(rho V) |`.
    pub difference_quotient_error: f64,
    /// Trace norm of the order-2 remainder operator, evaluated by simplex
    /// quadrature; the contract is `error <= K |lambda|`.
    pub remainder_trace_norm: f64,
}

/// Check the Frechet difference quotient against its Duhamel remainder.
///
/// Two applications of Duhamel's formula give exactly
///
/// ```text
/// (Z(l) - Z(0))/l + Z Tr(rho V)
///   = l Tr Int_0^1 a da Int_0^1 db  e^{-ab(H+lV)} V e^{-a(1-b)H} V e^{-(1-a)H}
/// ```
///
/// so the difference-quotient error is bounded by `|l|` times the trace norm
/// of the double integral, which is evaluated here with a tensor
/// Gauss-Legendre rule (the `a` weight is the simplex Jacobian).
pub fn duhamel_remainder_check(
    state: &GibbsState,
    v: &HermitianOperator,
    lambda: f64,
) -> Result<DuhamelCheck> {
    if v.dim() != state.dim() {
        return Err(Error::DimensionMismatch {
            expected: state.dim(),
            got: v.dim(),
        });
    }
    if lambda == 0.0 {
        return Err(Error::InvalidArgument(
            "Duhamel check needs a nonzero lambda".into(),
        ));
    }
    let z0 = state.partition();
    let z_l = direct_partition(state, v, lambda)?;
    let m1 = z0 * true_mean(state, v)?;
    let difference_quotient_error = ((z_l - z0) / lambda + m1).abs();

    let perturbed = state.hamiltonian().add(&v.scale(lambda))?;
    let dp = eig(&perturbed)?;
    let d0 = state.spectrum();
    let energies = state.energies();
    let n = state.dim();

    let (nodes, weights) = gauss_legendre_01(24);
    let mut acc: DMatrix<C64> = DMatrix::zeros(n, n);
    for (ia, &alpha) in nodes.iter().enumerate() {
        let outer: Vec<f64> = energies.iter().map(|&e| (-(1.0 - alpha) * e).exp()).collect();
        let c_mat = d0.assemble(&outer);
        let vc = v.entries() * c_mat.entries();
        for (ib, &beta) in nodes.iter().enumerate() {
            let a_vals: Vec<f64> = dp
                .eigenvalues()
                .iter()
                .map(|&e| (-alpha * beta * e).exp())
                .collect();
            let a_mat = dp.assemble(&a_vals);
            let b_vals: Vec<f64> = energies
                .iter()
                .map(|&e| (-alpha * (1.0 - beta) * e).exp())
                .collect();
            let b_mat = d0.assemble(&b_vals);
            let w = weights[ia] * weights[ib] * alpha;
            let term = a_mat.entries() * v.entries() * b_mat.entries() * &vc;
            acc += term.map(|z| z * w);
        }
    }
    let remainder_trace_norm = trace_norm(&acc);

    Ok(DuhamelCheck {
        difference_quotient_error,
        remainder_trace_norm,
    })
}

/// Convergence-radius estimates from the coefficient sequence.
#[derive(Debug, Clone)]
pub struct RadiusReport {
    /// Consecutive-ratio radius estimates `(|c_j|/|c_k|)^{1/(k-j)}` over
    /// adjacent nonzero coefficients.
    pub ratio_estimates: Vec<f64>,
    /// Root-test estimates `|c_k|^{-1/k}` per nonzero order.
    pub root_estimates: Vec<f64>,
    /// Conservative empirical radius: the smaller of the last two ratio
    /// estimates.
    pub radius_empirical: f64,
    /// `(1 - beta_eff)/||V||_omega`, when the expansion carries a beta.
    pub radius_bound: Option<f64>,
    /// Set when the ratio estimates grow monotonically and at least double
    /// overall, the signature of an entire function (scalar models).
    pub entire_hint: bool,
    /// `|M_k|` over the closed-form bound, reported but never asserted.
    pub bound_ratios: Option<Vec<f64>>,
}

pub fn radius_report(expansion: &SeriesExpansion) -> Result<RadiusReport> {
    if expansion.order() < 4 {
        return Err(Error::InsufficientCoefficients {
            needed: 4,
            got: expansion.order(),
        });
    }
    let coeffs = &expansion.table().taylor_coefficients;
    let nonzero: Vec<(usize, f64)> = coeffs
        .iter()
        .enumerate()
        .filter(|(_, c)| c.abs() > 0.0)
        .map(|(i, c)| (i + 1, c.abs()))
        .collect();
    if nonzero.len() < 2 {
        return Err(Error::InsufficientCoefficients {
            needed: 4,
            got: nonzero.len(),
        });
    }

    let mut ratio_estimates = Vec::with_capacity(nonzero.len() - 1);
    for w in nonzero.windows(2) {
        let (k0, a0) = w[0];
        let (k1, a1) = w[1];
        ratio_estimates.push((a0 / a1).powf(1.0 / (k1 - k0) as f64));
    }
    let root_estimates: Vec<f64> = nonzero
        .iter()
        .map(|&(k, a)| a.powf(-1.0 / k as f64))
        .collect();

    let m = ratio_estimates.len();
    let radius_empirical = if m >= 2 {
        ratio_estimates[m - 1].min(ratio_estimates[m - 2])
    } else {
        ratio_estimates[m - 1]
    };
    let entire_hint = m >= 2
        && ratio_estimates.windows(2).all(|w| w[1] > w[0])
        && ratio_estimates[m - 1] >= 2.0 * ratio_estimates[0];

    Ok(RadiusReport {
        ratio_estimates,
        root_estimates,
        radius_empirical,
        radius_bound: expansion.radius_bound(),
        entire_hint,
        bound_ratios: expansion.table().bound_ratios.clone(),
    })
}

/// Truncation scan of the direct free energy along a family direction,
/// looking for the onset of divergence (the finite-size shadow of hitting a
/// singularity of `psi`).
#[derive(Debug, Clone)]
pub struct DivergenceScan {
    pub lambda_grid: Vec<f64>,
    /// `psi` at the base truncation.
    pub psi_small: Vec<f64>,
    /// `psi` at the doubled truncation.
    pub psi_large: Vec<f64>,
    /// `|psi_large - psi_small|` per grid point.
    pub gaps: Vec<f64>,
    /// First grid lambda whose gap exceeds the tolerance, if any.
    pub blowup_lambda: Option<f64>,
}

/// Evaluate `psi_N(lambda)` and `psi_{2N}(lambda)` along a lambda grid for a
/// family-generated Hamiltonian and a direction derived from it (for the
/// divergent direction take `V = -H`). A widening truncation gap marks the
/// lambda region where the limiting free energy ceases to exist.
pub fn divergence_scan<F, G>(
    family: F,
    direction_of: G,
    base_size: usize,
    lambda_grid: &[f64],
    gap_tol: f64,
) -> Result<DivergenceScan>
where
    F: Fn(usize) -> Result<HermitianOperator>,
    G: Fn(&HermitianOperator) -> HermitianOperator,
{
    if lambda_grid.is_empty() {
        return Err(Error::InvalidArgument("empty lambda grid".into()));
    }
    if !(gap_tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "gap tolerance must be positive, got {gap_tol}"
        )));
    }
    let mut levels = Vec::with_capacity(2);
    for n in [base_size, 2 * base_size] {
        let h = family(n)?;
        let state = GibbsState::new(h)?;
        let v = direction_of(state.hamiltonian());
        let psi: Result<Vec<f64>> = lambda_grid
            .iter()
            .map(|&l| direct_free_energy(&state, &v, l))
            .collect();
        levels.push(psi?);
    }
    let psi_small = levels.swap_remove(0);
    let psi_large = levels.swap_remove(0);
    let gaps: Vec<f64> = psi_small
        .iter()
        .zip(&psi_large)
        .map(|(a, b)| (b - a).abs())
        .collect();
    let blowup_lambda = lambda_grid
        .iter()
        .zip(&gaps)
        .find(|(_, &g)| g > gap_tol)
        .map(|(&l, _)| l);
    Ok(DivergenceScan {
        lambda_grid: lambda_grid.to_vec(),
        psi_small,
        psi_large,
        gaps,
        blowup_lambda,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gibbs::normalize_hamiltonian;
    use crate::models::{self, Family, ModelSpec, PerturbationKind};
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_hermitian(dim: usize, seed: u64) -> HermitianOperator {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..dim {
                m[(i, j)] = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            }
        }
        HermitianOperator::new((&m + m.adjoint()).map(|z| z * 0.5)).unwrap()
    }

    fn random_state(dim: usize, seed: u64) -> GibbsState {
        let (h, _) = normalize_hamiltonian(&random_hermitian(dim, seed).scale(2.0)).unwrap();
        GibbsState::new(h).unwrap()
    }

    fn scalar_model(v: f64) -> (GibbsState, PerturbationDirection) {
        let state = GibbsState::new(HermitianOperator::from_diagonal(&[1.0]).unwrap()).unwrap();
        let dir = PerturbationDirection::new(
            &state,
            HermitianOperator::from_diagonal(&[v]).unwrap(),
        )
        .unwrap();
        (state, dir)
    }

    #[test]
    fn direct_at_zero_is_log_partition() {
        let state = random_state(6, 1);
        let v = random_hermitian(6, 2);
        let psi0 = direct_free_energy(&state, &v, 0.0).unwrap();
        assert!((psi0 - state.log_partition()).abs() < 1e-12);
    }

    #[test]
    fn direct_scalar_closed_form() {
        let (state, dir) = scalar_model(0.7);
        for &l in &[-1.0, -0.3, 0.2, 1.5] {
            let psi = direct_free_energy(&state, dir.operator(), l).unwrap();
            assert!((psi + 1.0 + l * 0.7).abs() < 1e-14, "lambda {l}");
        }
    }

    #[test]
    fn direct_small_lambda_slope() {
        let state = random_state(7, 11);
        let v = random_hermitian(7, 12);
        let mean = true_mean(&state, &v).unwrap();
        let psi0 = state.log_partition();
        let h = 1e-5;
        let slope_fd = (direct_free_energy(&state, &v, h).unwrap()
            - direct_free_energy(&state, &v, -h).unwrap())
            / (2.0 * h);
        assert!(
            (slope_fd + mean).abs() <= 1e-8 * mean.abs().max(1.0),
            "slope {slope_fd} vs -mean {}",
            -mean
        );
        let resid = direct_free_energy(&state, &v, h).unwrap() - psi0 + h * mean;
        assert!(resid.abs() < 1e-8);
    }

    #[test]
    fn scalar_expansion_reproduces_partition() {
        // Order-8 expansion of Z(lambda) = exp(-(1 + 0.7 lambda)): every
        // coefficient must match the scalar factorial series at machine
        // precision, and the partial sums must agree with the equally
        // truncated oracle series.
        let v = 0.7_f64;
        let (state, dir) = scalar_model(v);
        let exp8 = expand(&state, &dir, 8, None).unwrap();
        let coeffs = exp8.coefficients();
        let mut factorial = 1.0;
        for (k, &c) in coeffs.iter().enumerate() {
            if k > 0 {
                factorial *= k as f64;
            }
            let want = (-1.0_f64).exp() * (-v).powi(k as i32) / factorial;
            assert!(
                (c - want).abs() <= 1e-13 * want.abs(),
                "coefficient {k}: {c} vs {want}"
            );
        }
        for &l in &[-1.0, -0.5, 0.5, 1.0] {
            let oracle: f64 = (0..=8)
                .map(|k| {
                    let kfact: f64 = (1..=k).map(|j| j as f64).product();
                    (-1.0_f64).exp() * (-v * l).powi(k as i32) / kfact
                })
                .sum();
            let got = exp8.evaluate(l);
            assert!(
                (got - oracle).abs() <= 1e-10 * oracle.abs(),
                "lambda {l}: {got} vs {oracle}"
            );
        }
    }

    #[test]
    fn expansion_first_order_matches_direct() {
        let state = random_state(6, 21);
        let v = random_hermitian(6, 22);
        let dir = PerturbationDirection::new(&state, v).unwrap();
        let e1 = expand(&state, &dir, 1, None).unwrap();
        let l = 1e-4;
        let direct = direct_partition(&state, dir.operator(), l).unwrap();
        let series = e1.evaluate(l);
        // Agreement to O(lambda^2).
        assert!((series - direct).abs() <= 10.0 * l * l * state.partition());
    }

    #[test]
    fn expansion_with_remainder_bound() {
        let spec = ModelSpec {
            family: Family::Oscillator,
            dim: 10,
            seed: 3,
            scramble: true,
            perturbation: PerturbationKind::RandomTargetOmega { strength: 0.2 },
        };
        let inst = models::instantiate(&spec).unwrap();
        let exp6 = expand(&inst.state, &inst.direction, 6, None).unwrap();
        for &l in &[0.2, 0.5, -0.4] {
            let direct = direct_partition(&inst.state, inst.direction.operator(), l).unwrap();
            let series = exp6.evaluate(l);
            let est = exp6.next_term_estimate(l);
            assert!(
                (series - direct).abs() <= 2.0 * est,
                "lambda {l}: |{series} - {direct}| = {} > 2*{est}",
                (series - direct).abs()
            );
        }
    }

    #[test]
    fn duhamel_zero_direction() {
        let state = random_state(5, 31);
        let check =
            duhamel_remainder_check(&state, &HermitianOperator::zeros(5), 0.1).unwrap();
        assert!(check.difference_quotient_error < 1e-14);
        assert!(check.remainder_trace_norm < 1e-14);
    }

    #[test]
    fn duhamel_scalar_closed_form() {
        let (state, dir) = scalar_model(0.9);
        let l = 0.05;
        let check = duhamel_remainder_check(&state, dir.operator(), l).unwrap();
        let want = (-1.0_f64).exp() * ((-l * 0.9_f64).exp() - 1.0 + l * 0.9).abs() / l;
        assert!((check.difference_quotient_error - want).abs() < 1e-14);
        assert!(check.difference_quotient_error <= check.remainder_trace_norm * l * (1.0 + 1e-8));
    }

    #[test]
    fn duhamel_linear_decay() {
        let state = random_state(6, 41);
        let v = random_hermitian(6, 42).scale(0.3);
        let mut prev = None;
        for k in 0..10 {
            let l = 0.1 * 0.5_f64.powi(k);
            let check = duhamel_remainder_check(&state, &v, l).unwrap();
            assert!(
                check.difference_quotient_error
                    <= check.remainder_trace_norm * l * (1.0 + 1e-6),
                "contract violated at lambda {l}"
            );
            if let Some(p) = prev {
                let ratio: f64 = check.difference_quotient_error / p;
                assert!(
                    (ratio - 0.5).abs() <= 0.1,
                    "halving ratio {ratio} at lambda {l}"
                );
            }
            prev = Some(check.difference_quotient_error);
        }
    }

    #[test]
    fn duhamel_rejects_zero_lambda() {
        let state = random_state(3, 51);
        let v = random_hermitian(3, 52);
        assert!(duhamel_remainder_check(&state, &v, 0.0).is_err());
    }

    #[test]
    fn radius_scalar_model_is_entire() {
        let (state, dir) = scalar_model(0.7);
        let exp8 = expand(&state, &dir, 8, None).unwrap();
        let report = radius_report(&exp8).unwrap();
        assert!(report.entire_hint, "ratios {:?}", report.ratio_estimates);
        // Ratio estimates grow like k/v for the scalar exponential.
        assert!(report.radius_empirical > 5.0);
    }

    #[test]
    fn radius_requires_enough_coefficients() {
        let (state, dir) = scalar_model(0.7);
        let exp3 = expand(&state, &dir, 3, None).unwrap();
        assert!(matches!(
            radius_report(&exp3),
            Err(Error::InsufficientCoefficients { .. })
        ));
    }

    #[test]
    fn free_energy_convex_in_lambda() {
        let state = random_state(6, 61);
        let v = random_hermitian(6, 62).scale(0.5);
        let h = 0.05;
        let psis: Vec<f64> = (-10..=10)
            .map(|k| direct_free_energy(&state, &v, k as f64 * h).unwrap())
            .collect();
        for w in psis.windows(3) {
            let second = w[2] - 2.0 * w[1] + w[0];
            assert!(second >= -1e-10, "second difference {second}");
        }
    }

    #[test]
    fn divergence_scan_flags_minus_h_direction() {
        let family = |n: usize| {
            HermitianOperator::from_diagonal(&(0..n).map(|k| 1.0 + k as f64).collect::<Vec<_>>())
        };
        let grid: Vec<f64> = (0..12).map(|k| 0.4 + 0.05 * k as f64).collect();
        let scan = divergence_scan(family, |h| h.scale(-1.0), 32, &grid, 1e-6).unwrap();
        let lam = scan.blowup_lambda.expect("must detect the blow-up");
        assert!(lam > 0.4 && lam < 1.0, "blow-up at {lam}");
        // Gaps must grow toward lambda = 1.
        assert!(scan.gaps.last().unwrap() > scan.gaps.first().unwrap());

        // A mild commuting direction stays truncation-stable on the grid.
        let calm = divergence_scan(family, |h| h.scale(0.2), 32, &grid, 1e-6).unwrap();
        assert!(calm.blowup_lambda.is_none());
    }
}
