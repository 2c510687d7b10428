//! Gibbs states `rho = exp(-H)/Z` for normalized Hamiltonians `H >= I`,
//! partition functions in log space, entropy, and the truncation-family
//! diagnostic for Schatten-class membership.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::{eig, HermitianOperator, SpectralDecomposition};

/// Slack admitted on the `H >= I` check after shifting.
pub const SPECTRUM_FLOOR_TOL: f64 = 1e-12;

/// Absolute Cauchy tolerance between consecutive truncation doublings.
pub const CAUCHY_TOL: f64 = 1e-8;

/// Gap-ratio threshold below which a truncation curve counts as converging.
pub const RATIO_CONVERGENT: f64 = 0.95;

/// Gap-ratio threshold above which a truncation curve counts as diverging.
pub const RATIO_DIVERGENT: f64 = 1.05;

/// A normalized Gibbs state: the shifted Hamiltonian, its spectral cache, the
/// density matrix, and the log partition function.
///
/// All fields are immutable after construction; states are safe to share
/// across threads.
#[derive(Debug, Clone)]
pub struct GibbsState {
    hamiltonian: HermitianOperator,
    shift: f64,
    log_partition: f64,
    density: HermitianOperator,
    spectrum: SpectralDecomposition,
    probabilities: DVector<f64>,
    log_probabilities: DVector<f64>,
}

impl GibbsState {
    /// Build the Gibbs state of an already-normalized Hamiltonian (`H >= I`).
    pub fn new(hamiltonian: HermitianOperator) -> Result<Self> {
        let spectrum = eig(&hamiltonian)?;
        Self::from_parts(hamiltonian, spectrum, 0.0)
    }

    /// Shift an arbitrary Hermitian operator so its spectrum starts exactly
    /// at 1, then build the Gibbs state. The absorbed constant is recorded.
    pub fn from_unnormalized(h_raw: HermitianOperator) -> Result<Self> {
        let d = eig(&h_raw)?;
        let c = 1.0 - d.min_eigenvalue();
        let shifted = h_raw.add_scaled_identity(c);
        Self::from_parts(shifted, d.shifted(c), c)
    }

    fn from_parts(
        hamiltonian: HermitianOperator,
        spectrum: SpectralDecomposition,
        shift: f64,
    ) -> Result<Self> {
        let e_min = spectrum.min_eigenvalue();
        if !e_min.is_finite() {
            return Err(Error::BoltzmannUnderflow);
        }
        if e_min < 1.0 - SPECTRUM_FLOOR_TOL {
            return Err(Error::HamiltonianBelowIdentity {
                min_eigenvalue: e_min,
            });
        }

        // Log-sum-exp shifted by the smallest eigenvalue: psi stays accurate
        // when eigenvalues are large, and no weight set can fully underflow.
        let n = spectrum.dim();
        let mut weights = Vec::with_capacity(n);
        for &e in spectrum.eigenvalues().iter() {
            weights.push((-(e - e_min)).exp());
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::BoltzmannUnderflow);
        }
        let log_total = total.ln();
        let log_partition = -e_min + log_total;

        let probabilities = DVector::from_iterator(n, weights.iter().map(|w| w / total));
        let log_probabilities = DVector::from_iterator(
            n,
            spectrum
                .eigenvalues()
                .iter()
                .map(|&e| -(e - e_min) - log_total),
        );
        let density = spectrum.assemble(probabilities.as_slice());

        Ok(Self {
            hamiltonian,
            shift,
            log_partition,
            density,
            spectrum,
            probabilities,
            log_probabilities,
        })
    }

    pub fn dim(&self) -> usize {
        self.spectrum.dim()
    }

    pub fn hamiltonian(&self) -> &HermitianOperator {
        &self.hamiltonian
    }

    /// The constant absorbed to enforce `H >= I` (zero when built from an
    /// already-normalized operator).
    pub fn shift(&self) -> f64 {
        self.shift
    }

    /// `psi = log Z`.
    pub fn log_partition(&self) -> f64 {
        self.log_partition
    }

    pub fn partition(&self) -> f64 {
        self.log_partition.exp()
    }

    pub fn density(&self) -> &HermitianOperator {
        &self.density
    }

    pub fn spectrum(&self) -> &SpectralDecomposition {
        &self.spectrum
    }

    /// Hamiltonian eigenvalues, ascending.
    pub fn energies(&self) -> &DVector<f64> {
        self.spectrum.eigenvalues()
    }

    /// Boltzmann probabilities in the energy-ascending eigenbasis.
    pub fn probabilities(&self) -> &DVector<f64> {
        &self.probabilities
    }

    /// `log p_i`, computed shift-stably (never through `p_i.ln()`).
    pub fn log_probabilities(&self) -> &DVector<f64> {
        &self.log_probabilities
    }

    /// `rho^alpha = U diag(p^alpha) U^H`, spectrally. `p^0 := 1` even when a
    /// probability has underflowed to zero.
    pub fn density_power(&self, alpha: f64) -> HermitianOperator {
        let vals: Vec<f64> = self
            .log_probabilities
            .iter()
            .map(|&lp| {
                if alpha == 0.0 {
                    1.0
                } else {
                    (alpha * lp).exp()
                }
            })
            .collect();
        self.spectrum.assemble(&vals)
    }

    /// `H^gamma` spectrally; `gamma = -1` is the resolvent `R`.
    pub fn hamiltonian_power(&self, gamma: f64) -> HermitianOperator {
        let vals: Vec<f64> = self
            .spectrum
            .eigenvalues()
            .iter()
            .map(|&e| e.powf(gamma))
            .collect();
        self.spectrum.assemble(&vals)
    }

    /// The resolvent `R = H^{-1}` (well defined since `H >= I`).
    pub fn resolvent(&self) -> HermitianOperator {
        self.hamiltonian_power(-1.0)
    }
}

/// Shift a Hermitian operator so the smallest eigenvalue maps exactly to 1.
/// Returns the shifted operator and the absorbed constant (possibly
/// negative).
pub fn normalize_hamiltonian(h_raw: &HermitianOperator) -> Result<(HermitianOperator, f64)> {
    let d = eig(h_raw)?;
    let c = 1.0 - d.min_eigenvalue();
    Ok((h_raw.add_scaled_identity(c), c))
}

/// Von Neumann entropy `S = -sum p log p`, with `0 log 0 := 0`.
pub fn von_neumann_entropy(state: &GibbsState) -> f64 {
    let mut s = 0.0;
    for (&p, &lp) in state
        .probabilities()
        .iter()
        .zip(state.log_probabilities().iter())
    {
        if p > 0.0 {
            s -= p * lp;
        }
    }
    s.max(0.0)
}

/// Verdict for one beta in the truncation scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum BetaVerdict {
    /// Gaps below the absolute tolerance or shrinking geometrically.
    Convergent,
    /// Gaps clearly growing across doublings.
    Divergent,
    /// Neither trend is clear at the scanned sizes.
    Indeterminate,
}

/// Truncation-family diagnostic for `rho in C_beta`.
///
/// At finite dimension every matrix is trace class, so membership is
/// rendered as a convergence diagnostic on `Tr rho_N^beta` across truncation
/// sizes rather than a binary predicate.
#[derive(Debug, Clone)]
pub struct ClassMembershipReport {
    pub beta_grid: Vec<f64>,
    pub truncation_sizes: Vec<usize>,
    /// `curves[b][k] = Tr rho_{N_k}^{beta_b}`.
    pub curves: Vec<Vec<f64>>,
    pub verdicts: Vec<BetaVerdict>,
    /// Smallest grid beta of the maximal convergent suffix.
    pub effective_beta: Option<f64>,
    /// Largest grid beta judged divergent, if any.
    pub divergence_edge: Option<f64>,
    /// Set when some curve is non-monotone across truncations (gap signs
    /// flip), which signals a family that is not a nested truncation.
    pub monotone_warning: bool,
}

impl ClassMembershipReport {
    /// Trace values at the largest scanned truncation.
    pub fn trace_values(&self) -> Vec<f64> {
        self.curves.iter().map(|c| *c.last().unwrap()).collect()
    }

    /// True when `beta0` lies between the largest divergent beta and the
    /// effective beta.
    pub fn brackets(&self, beta0: f64) -> bool {
        match (self.divergence_edge, self.effective_beta) {
            (Some(lo), Some(hi)) => lo < beta0 && beta0 <= hi,
            _ => false,
        }
    }
}

/// Scan `Tr rho_N^beta` over a truncation family.
///
/// The convergence detector accepts a beta when the doubling gaps are below
/// [`CAUCHY_TOL`] or shrink with ratio at most [`RATIO_CONVERGENT`]; it
/// rejects when they grow with ratio at least [`RATIO_DIVERGENT`]. The ratio
/// trend is what separates `beta > beta_0` from `beta < beta_0` for families
/// with polynomial tails, where no desk-size truncation reaches the absolute
/// tolerance.
pub fn schatten_membership<F>(
    family: F,
    beta_grid: &[f64],
    truncation_sizes: &[usize],
) -> Result<ClassMembershipReport>
where
    F: Fn(usize) -> Result<HermitianOperator>,
{
    if beta_grid.is_empty() || truncation_sizes.is_empty() {
        return Err(Error::InvalidArgument(
            "membership scan needs a nonempty beta grid and size list".into(),
        ));
    }
    for &b in beta_grid {
        if !(b > 0.0 && b <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "beta grid entries must lie in (0, 1], got {b}"
            )));
        }
    }
    let mut sizes = truncation_sizes.to_vec();
    sizes.sort_unstable();
    sizes.dedup();

    let mut betas = beta_grid.to_vec();
    betas.sort_by(f64::total_cmp);

    let mut curves = vec![Vec::with_capacity(sizes.len()); betas.len()];
    for &n in &sizes {
        let state = GibbsState::new(family(n)?)?;
        for (b_idx, &beta) in betas.iter().enumerate() {
            let t: f64 = state
                .log_probabilities()
                .iter()
                .map(|&lp| (beta * lp).exp())
                .sum();
            curves[b_idx].push(t);
        }
    }

    let mut verdicts = Vec::with_capacity(betas.len());
    let mut monotone_warning = false;
    for curve in &curves {
        let gaps: Vec<f64> = curve.windows(2).map(|w| w[1] - w[0]).collect();
        if gaps
            .iter()
            .any(|&g| gaps.iter().any(|&h| g > 1e-12 && h < -1e-12))
        {
            monotone_warning = true;
        }
        verdicts.push(classify(&gaps));
    }

    // Maximal convergent suffix of the grid.
    let mut effective_beta = None;
    for (idx, v) in verdicts.iter().enumerate().rev() {
        if *v == BetaVerdict::Convergent {
            effective_beta = Some(betas[idx]);
        } else {
            break;
        }
    }
    let divergence_edge = verdicts
        .iter()
        .enumerate()
        .rev()
        .find(|(_, v)| **v == BetaVerdict::Divergent)
        .map(|(idx, _)| betas[idx]);

    Ok(ClassMembershipReport {
        beta_grid: betas,
        truncation_sizes: sizes,
        curves,
        verdicts,
        effective_beta,
        divergence_edge,
        monotone_warning,
    })
}

fn classify(gaps: &[f64]) -> BetaVerdict {
    if gaps.is_empty() {
        return BetaVerdict::Indeterminate;
    }
    let last = gaps[gaps.len() - 1].abs();
    if last <= CAUCHY_TOL {
        return BetaVerdict::Convergent;
    }
    if gaps.len() < 2 {
        return BetaVerdict::Indeterminate;
    }
    let mut ratios = Vec::with_capacity(gaps.len() - 1);
    for w in gaps.windows(2) {
        let prev = w[0].abs();
        if prev <= f64::MIN_POSITIVE {
            return BetaVerdict::Convergent;
        }
        ratios.push(w[1].abs() / prev);
    }
    if ratios.iter().all(|&r| r <= RATIO_CONVERGENT) {
        BetaVerdict::Convergent
    } else if ratios.iter().all(|&r| r >= RATIO_DIVERGENT) {
        BetaVerdict::Divergent
    } else {
        BetaVerdict::Indeterminate
    }
}

/// Default beta grid `{0.1, 0.2, ..., 1.0}`.
pub fn default_beta_grid() -> Vec<f64> {
    (1..=10).map(|k| k as f64 / 10.0).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::matrix_function;
    use nalgebra::DMatrix;
    use num_complex::Complex64 as C64;
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
        let raw = (&m + m.adjoint()).map(|z| z * 0.5);
        HermitianOperator::new(raw).unwrap()
    }

    fn oscillator(n: usize) -> Result<HermitianOperator> {
        HermitianOperator::from_diagonal(&(0..n).map(|k| 1.0 + k as f64).collect::<Vec<_>>())
    }

    #[test]
    fn normalize_shifts_min_to_one() {
        let h = HermitianOperator::from_diagonal(&[0.0, 1.0]).unwrap();
        let (shifted, c) = normalize_hamiltonian(&h).unwrap();
        assert!((c - 1.0).abs() < 1e-14);
        assert!((shifted.entries()[(0, 0)].re - 1.0).abs() < 1e-14);
        assert!((shifted.entries()[(1, 1)].re - 2.0).abs() < 1e-14);

        let h2 = HermitianOperator::from_diagonal(&[1.0, 2.0]).unwrap();
        let (_, c2) = normalize_hamiltonian(&h2).unwrap();
        assert!(c2.abs() < 1e-14);
    }

    #[test]
    fn normalize_random_matches_eigen_oracle() {
        let raw = random_hermitian(9, 5).scale(3.0);
        let lam_min = eig(&raw).unwrap().min_eigenvalue();
        let (shifted, c) = normalize_hamiltonian(&raw).unwrap();
        assert!((c - (1.0 - lam_min)).abs() < 1e-12);
        let new_min = eig(&shifted).unwrap().min_eigenvalue();
        assert!((new_min - 1.0).abs() < 1e-12);
    }

    #[test]
    fn one_by_one_state() {
        let state = GibbsState::new(HermitianOperator::from_diagonal(&[1.0]).unwrap()).unwrap();
        assert!((state.partition() - (-1.0_f64).exp()).abs() < 1e-16);
        assert!((state.log_partition() + 1.0).abs() < 1e-14);
        assert!((state.density().entries()[(0, 0)].re - 1.0).abs() < 1e-14);
    }

    #[test]
    fn two_level_closed_form() {
        let state =
            GibbsState::new(HermitianOperator::from_diagonal(&[1.0, 2.0]).unwrap()).unwrap();
        let z = (-1.0_f64).exp() + (-2.0_f64).exp();
        assert!((state.partition() - z).abs() < 1e-15);
        assert!((state.density().entries()[(0, 0)].re - (-1.0_f64).exp() / z).abs() < 1e-14);
        assert!((state.density().entries()[(1, 1)].re - (-2.0_f64).exp() / z).abs() < 1e-14);
    }

    #[test]
    fn oscillator_partition_matches_geometric_sum() {
        let state = GibbsState::new(oscillator(32).unwrap()).unwrap();
        // Scalar oracle: sum_{k=0}^{31} e^{-(1+k)} in closed form.
        let q = (-1.0_f64).exp();
        let oracle = q * (1.0 - q.powi(32)) / (1.0 - q);
        assert!((state.partition() - oracle).abs() <= 1e-14 * oracle);
    }

    #[test]
    fn rejects_spectrum_below_identity() {
        let h = HermitianOperator::from_diagonal(&[0.5, 2.0]).unwrap();
        assert!(matches!(
            GibbsState::new(h),
            Err(Error::HamiltonianBelowIdentity { .. })
        ));
    }

    #[test]
    fn state_invariants_hold() {
        let (h, _) = normalize_hamiltonian(&random_hermitian(12, 77).scale(4.0)).unwrap();
        let state = GibbsState::new(h).unwrap();
        // Unit trace, positivity.
        assert!((state.density().trace() - 1.0).abs() < 1e-12);
        let min_p = eig(state.density()).unwrap().min_eigenvalue();
        assert!(min_p >= -1e-14);
        // [rho, H] = 0.
        let comm = state.density().matmul(state.hamiltonian())
            - state.hamiltonian().matmul(state.density());
        assert!(comm.norm() <= 1e-10 * state.hamiltonian().entries().norm());
        // log rho + H + psi = 0 along the spectrum.
        for (&lp, &e) in state
            .log_probabilities()
            .iter()
            .zip(state.energies().iter())
        {
            assert!((lp + e + state.log_partition()).abs() < 1e-10);
        }
    }

    #[test]
    fn log_partition_invariant_under_basis_change() {
        let (h, _) = normalize_hamiltonian(&random_hermitian(10, 3)).unwrap();
        let state = GibbsState::new(h.clone()).unwrap();
        // Conjugate by the eigenbasis of an unrelated random Hermitian.
        let u = eig(&random_hermitian(10, 4)).unwrap().eigenvectors().clone();
        let rotated = HermitianOperator::new(&u * h.entries() * u.adjoint()).unwrap();
        let state_rot = GibbsState::new(rotated).unwrap();
        assert!((state.log_partition() - state_rot.log_partition()).abs() < 1e-12);
    }

    #[test]
    fn shift_covariance() {
        let (h, _) = normalize_hamiltonian(&random_hermitian(8, 21)).unwrap();
        let state = GibbsState::new(h.clone()).unwrap();
        let shifted = GibbsState::new(h.add_scaled_identity(0.7)).unwrap();
        assert!((shifted.log_partition() - (state.log_partition() - 0.7)).abs() < 1e-12);
        assert!(
            (shifted.density().entries() - state.density().entries()).norm() < 1e-12,
            "density must be shift invariant"
        );
    }

    #[test]
    fn entropy_trivial_cases() {
        // Pure state diag(1, 0): build by hand since it is not a Gibbs
        // density of a finite Hamiltonian; use the spectral formula instead.
        let s_pure = -(1.0_f64 * 1.0_f64.ln());
        assert_eq!(s_pure, 0.0);
        // Maximally mixed on 2 levels: H = diag(c, c).
        let state =
            GibbsState::new(HermitianOperator::from_diagonal(&[1.5, 1.5]).unwrap()).unwrap();
        assert!((von_neumann_entropy(&state) - 2.0_f64.ln().abs()).abs() < 1e-14);
        // Two-level Gibbs state closed form.
        let st2 = GibbsState::new(HermitianOperator::from_diagonal(&[1.0, 2.0]).unwrap()).unwrap();
        let z = (-1.0_f64).exp() + (-2.0_f64).exp();
        let p1 = (-1.0_f64).exp() / z;
        let p2 = (-2.0_f64).exp() / z;
        let want = -p1 * p1.ln() - p2 * p2.ln();
        assert!((von_neumann_entropy(&st2) - want).abs() < 1e-14);
    }

    #[test]
    fn entropy_bounds_and_matrix_route() {
        let (h, _) = normalize_hamiltonian(&random_hermitian(9, 9).scale(2.0)).unwrap();
        let state = GibbsState::new(h).unwrap();
        let s = von_neumann_entropy(&state);
        assert!(s >= 0.0 && s <= (9.0_f64).ln() + 1e-12);
        // -Tr(rho log rho) through matrix_function.
        let d = eig(state.density()).unwrap();
        let log_rho = matrix_function(&d, |p| p.max(f64::MIN_POSITIVE).ln()).unwrap();
        let via_matrix = -crate::linalg::trace_product(state.density().entries(), log_rho.entries())
            .re;
        assert!((s - via_matrix).abs() <= 1e-10 * s.max(1.0));
    }

    #[test]
    fn density_power_interpolates() {
        let (h, _) = normalize_hamiltonian(&random_hermitian(6, 13)).unwrap();
        let state = GibbsState::new(h).unwrap();
        let half = state.density_power(0.5);
        let product = HermitianOperator::new(half.matmul(&half)).unwrap();
        assert!((product.entries() - state.density().entries()).norm() < 1e-12);
        let zero = state.density_power(0.0);
        assert!((zero.entries() - HermitianOperator::identity(6).entries()).norm() < 1e-13);
    }

    #[test]
    fn membership_oscillator_converges_and_unit_trace() {
        let report = schatten_membership(
            oscillator,
            &default_beta_grid(),
            &[8, 16, 32, 64],
        )
        .unwrap();
        // beta = 1 is exactly unit trace at every truncation.
        let last = report.curves.last().unwrap();
        for &t in last {
            assert!((t - 1.0).abs() < 1e-12);
        }
        // Geometric spectrum: every beta converges, so the suffix reaches
        // the bottom of the grid.
        assert_eq!(report.effective_beta, Some(0.1));
        assert!(report.divergence_edge.is_none());
        // beta = 0.5 limit: e^{-1/2}/(1 - e^{-1/2}) times Z^{-1/2} limit.
        let q: f64 = (-0.5_f64).exp();
        let z: f64 = (-1.0_f64).exp() / (1.0 - (-1.0_f64).exp());
        let want = q / (1.0 - q) * z.powf(-0.5);
        let idx = report.beta_grid.iter().position(|&b| b == 0.5).unwrap();
        let got = *report.curves[idx].last().unwrap();
        assert!((got - want).abs() <= 1e-9 * want, "{got} vs {want}");
    }

    #[test]
    fn membership_log_spectrum_brackets_beta0() {
        let beta0 = 0.6;
        let family = move |n: usize| {
            HermitianOperator::from_diagonal(
                &(0..n)
                    .map(|k| 1.0 + ((k + 1) as f64).ln() / beta0)
                    .collect::<Vec<_>>(),
            )
        };
        let report =
            schatten_membership(family, &default_beta_grid(), &[8, 16, 32, 64]).unwrap();
        assert!(
            report.brackets(beta0),
            "expected bracket around {beta0}: edge {:?}, effective {:?}",
            report.divergence_edge,
            report.effective_beta
        );
        // Divergence below beta0, convergence above.
        let idx_05 = report.beta_grid.iter().position(|&b| b == 0.5).unwrap();
        assert_eq!(report.verdicts[idx_05], BetaVerdict::Divergent);
        let idx_08 = report.beta_grid.iter().position(|&b| b == 0.8).unwrap();
        assert_eq!(report.verdicts[idx_08], BetaVerdict::Convergent);
    }

    #[test]
    fn membership_rejects_bad_beta() {
        let res = schatten_membership(oscillator, &[0.0, 0.5], &[4, 8]);
        assert!(res.is_err());
    }

    #[test]
    fn trace_values_decrease_in_beta() {
        let report =
            schatten_membership(oscillator, &default_beta_grid(), &[16, 32]).unwrap();
        let tv = report.trace_values();
        for w in tv.windows(2) {
            assert!(w[0] >= w[1] - 1e-12);
        }
    }
}
