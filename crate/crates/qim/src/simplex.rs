//! Simplex integrals of the exponential:
//!
//! ```text
//! I_n(x_1..x_n) = Integral over {a_k >= 0, sum a_k = 1} of exp(-sum_k a_k x_k)
//! ```
//!
//! which equals `(-1)^{n-1}` times the divided difference of `exp(-x)` at the
//! nodes. These kernels are the eigenbasis weights of every n-point function
//! in the crate.
//!
//! Evaluation follows the Opitz construction: `I_n` is the `(1, n)` entry of
//! `exp(B)` for the upper-bidiagonal `B` with `-x_k` on the diagonal and ones
//! on the superdiagonal. Shifting by the largest node makes the shifted
//! matrix entrywise nonnegative, so its Taylor series has no sign changes and
//! the evaluation never cancels, even for clustered or widely spread nodes.
//! The naive divided-difference recurrence is avoided everywhere.

use crate::error::{Error, Result};

/// Node span above which the row iteration hands over to scaling-and-squaring
/// of the full (tiny) bidiagonal matrix.
const ROW_SERIES_MAX_SPAN: f64 = 200.0;

/// `I_n` at the given nodes. Symmetric in the nodes; `I_1(x) = exp(-x)`;
/// equal nodes give the confluent limit `exp(-x)/(n-1)!` exactly.
///
/// Panics on an empty or non-finite node list (caller contract).
pub fn simplex_kernel(nodes: &[f64]) -> f64 {
    assert!(!nodes.is_empty(), "simplex kernel needs at least one node");
    let n = nodes.len();
    let mut mu = f64::NEG_INFINITY;
    let mut lo = f64::INFINITY;
    for &x in nodes {
        assert!(x.is_finite(), "simplex kernel nodes must be finite");
        mu = mu.max(x);
        lo = lo.min(x);
    }
    if n == 1 {
        return (-nodes[0]).exp();
    }
    let span = mu - lo;
    if span <= ROW_SERIES_MAX_SPAN {
        kernel_row_series(nodes, mu)
    } else {
        kernel_squaring(nodes, mu, span)
    }
}

/// First-row Taylor iteration for `exp(B + mu I)`: every quantity is
/// nonnegative, so the truncated sum is accurate to roundoff.
fn kernel_row_series(nodes: &[f64], mu: f64) -> f64 {
    let n = nodes.len();
    let diag: Vec<f64> = nodes.iter().map(|&x| mu - x).collect();
    let span = diag.iter().cloned().fold(0.0_f64, f64::max);

    let mut term = vec![0.0_f64; n];
    term[0] = 1.0;
    let mut sum = term.clone();
    let max_iter = (4.0 * (span + n as f64)) as usize + 64;
    for j in 1..=max_iter {
        let inv = 1.0 / j as f64;
        let mut next = vec![0.0_f64; n];
        next[0] = term[0] * diag[0] * inv;
        for k in 1..n {
            next[k] = (term[k] * diag[k] + term[k - 1]) * inv;
        }
        term = next;
        let mut biggest = 0.0_f64;
        for k in 0..n {
            sum[k] += term[k];
            biggest = biggest.max(term[k]);
        }
        // The all-ones superdiagonal path guarantees sum[n-1] >= 1/(n-1)!,
        // so a relative cutoff against it is safe.
        if j as f64 > span + n as f64 && biggest <= 1e-20 * sum[n - 1] {
            break;
        }
    }
    (-mu).exp() * sum[n - 1]
}

/// Scaling-and-squaring on the shifted bidiagonal matrix. All entries stay
/// nonnegative through both the series and the squarings.
fn kernel_squaring(nodes: &[f64], mu: f64, span: f64) -> f64 {
    let n = nodes.len();
    let s = ((span / 64.0).log2().ceil() as i32).max(0);
    let scale = 2f64.powi(-s);

    // Dense n x n since squaring fills the upper triangle.
    let mut m = vec![vec![0.0_f64; n]; n];
    for k in 0..n {
        m[k][k] = (mu - nodes[k]) * scale;
        if k + 1 < n {
            m[k][k + 1] = scale;
        }
    }

    let mut result = identity(n);
    let mut term = identity(n);
    for j in 1..2048 {
        term = mat_mul(&term, &m);
        let inv = 1.0 / j as f64;
        let mut biggest = 0.0_f64;
        let mut ref_mag = 0.0_f64;
        for r in 0..n {
            for c in 0..n {
                term[r][c] *= inv;
                result[r][c] += term[r][c];
                biggest = biggest.max(term[r][c]);
                ref_mag = ref_mag.max(result[r][c]);
            }
        }
        if biggest <= 1e-20 * ref_mag {
            break;
        }
    }
    for _ in 0..s {
        result = mat_mul(&result, &result);
    }
    (-mu).exp() * result[0][n - 1]
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    let mut m = vec![vec![0.0_f64; n]; n];
    for k in 0..n {
        m[k][k] = 1.0;
    }
    m
}

fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut out = vec![vec![0.0_f64; n]; n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i][k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

/// A kernel evaluation bundled with its nodes, for audit output.
#[derive(Debug, Clone)]
pub struct SimplexIntegrand {
    pub node_energies: Vec<f64>,
    pub value: f64,
}

impl SimplexIntegrand {
    pub fn evaluate(nodes: &[f64]) -> Self {
        Self {
            node_energies: nodes.to_vec(),
            value: simplex_kernel(nodes),
        }
    }
}

/// Dense table of `I_n` over all nondecreasing index tuples into a fixed
/// ascending energy list. Divided differences are symmetric in their nodes,
/// so one entry serves every permutation of a tuple; the n-point sums look
/// kernels up by the combinadic rank of the sorted tuple.
pub(crate) struct KernelTable {
    order: usize,
    binom: Vec<Vec<usize>>,
    values: Vec<f64>,
}

impl KernelTable {
    pub fn build(energies: &[f64], order: usize) -> Result<Self> {
        let dim = energies.len();
        assert!(order >= 1 && dim >= 1);
        let binom = binomial_table(dim + order, order + 1);
        let count = binom[dim + order - 1][order];
        // ~128 MB of f64 is far beyond desk scale already.
        if count > 16_000_000 {
            return Err(Error::BudgetExceeded { order, dim });
        }

        let mut values = vec![0.0_f64; count];
        let mut tuple = vec![0usize; order];
        let mut nodes = vec![0.0_f64; order];
        loop {
            for (slot, &idx) in tuple.iter().enumerate() {
                nodes[slot] = energies[idx];
            }
            let r = rank(&binom, &tuple);
            values[r] = simplex_kernel(&nodes);

            // Advance to the next nondecreasing tuple.
            let mut k = order;
            loop {
                if k == 0 {
                    return Ok(Self {
                        order,
                        binom,
                        values,
                    });
                }
                k -= 1;
                if tuple[k] + 1 < dim {
                    let v = tuple[k] + 1;
                    for slot in k..order {
                        tuple[slot] = v;
                    }
                    break;
                }
            }
        }
    }

    /// Kernel for an arbitrary index tuple; `scratch` must have length
    /// `order` and is reused as the sorting buffer.
    #[inline]
    pub fn value_for(&self, tuple: &[usize], scratch: &mut [usize]) -> f64 {
        scratch.copy_from_slice(tuple);
        // Insertion sort: tuples are tiny (order <= 6).
        for i in 1..self.order {
            let x = scratch[i];
            let mut j = i;
            while j > 0 && scratch[j - 1] > x {
                scratch[j] = scratch[j - 1];
                j -= 1;
            }
            scratch[j] = x;
        }
        self.values[rank(&self.binom, scratch)]
    }
}

#[inline]
fn rank(binom: &[Vec<usize>], sorted: &[usize]) -> usize {
    let mut r = 0usize;
    for (k, &j) in sorted.iter().enumerate() {
        r += binom[j + k][k + 1];
    }
    r
}

fn binomial_table(rows: usize, cols: usize) -> Vec<Vec<usize>> {
    let mut b = vec![vec![0usize; cols]; rows];
    for row in b.iter_mut() {
        row[0] = 1;
    }
    for m in 1..rows {
        for k in 1..cols {
            b[m][k] = b[m - 1][k] + b[m - 1][k - 1];
        }
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent oracle: nested adaptive Simpson over the 2-simplex.
    fn simplex3_quadrature(x: [f64; 3], tol: f64) -> f64 {
        fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: usize) -> f64 {
            let m = 0.5 * (a + b);
            let coarse = (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b));
            let lm = 0.5 * (a + m);
            let rm = 0.5 * (m + b);
            let left = (m - a) / 6.0 * (f(a) + 4.0 * f(lm) + f(m));
            let right = (b - m) / 6.0 * (f(m) + 4.0 * f(rm) + f(b));
            let fine = left + right;
            if depth == 0 || (fine - coarse).abs() <= 15.0 * tol {
                fine + (fine - coarse) / 15.0
            } else {
                simpson(f, a, m, 0.5 * tol, depth - 1) + simpson(f, m, b, 0.5 * tol, depth - 1)
            }
        }
        let outer = |a1: f64| {
            let inner = |a2: f64| (-(a1 * x[0] + a2 * x[1] + (1.0 - a1 - a2) * x[2])).exp();
            simpson(&inner, 0.0, 1.0 - a1, tol * 0.1, 40)
        };
        simpson(&outer, 0.0, 1.0, tol, 40)
    }

    #[test]
    fn single_node_is_exponential() {
        for &e in &[1.0, 2.5, 40.0] {
            assert!((simplex_kernel(&[e]) - (-e).exp()).abs() <= 1e-15 * (-e).exp());
        }
    }

    #[test]
    fn confluent_limit_exact() {
        // All nodes equal E: I_n = exp(-E)/(n-1)!.
        for n in 1..=6 {
            let nodes = vec![3.0_f64; n];
            let expect = (-3.0_f64).exp() / (1..n).map(|k| k as f64).product::<f64>().max(1.0);
            let got = simplex_kernel(&nodes);
            assert!(
                (got - expect).abs() <= 1e-14 * expect,
                "n={n}: {got} vs {expect}"
            );
        }
    }

    #[test]
    fn two_nodes_closed_form() {
        let (a, b) = (1.0_f64, 2.5_f64);
        let want = ((-a).exp() - (-b).exp()) / (b - a);
        assert!((simplex_kernel(&[a, b]) - want).abs() <= 1e-14 * want);
    }

    #[test]
    fn three_nodes_match_quadrature_oracle() {
        let nodes = [1.0, 2.0, 4.0];
        let oracle = simplex3_quadrature(nodes, 1e-12);
        let got = simplex_kernel(&nodes);
        assert!(
            (got - oracle).abs() <= 1e-10 * oracle,
            "kernel {got} vs quadrature {oracle}"
        );
    }

    #[test]
    fn permutation_symmetry() {
        let base = simplex_kernel(&[1.0, 3.0, 7.0, 2.0]);
        for perm in [
            [3.0, 1.0, 7.0, 2.0],
            [7.0, 2.0, 1.0, 3.0],
            [2.0, 7.0, 3.0, 1.0],
        ] {
            let v = simplex_kernel(&perm);
            assert!((v - base).abs() <= 1e-12 * base);
        }
    }

    #[test]
    fn clustered_nodes_stay_accurate() {
        // Nodes within 1e-9 of each other: the naive recurrence would lose
        // everything; the positive series loses nothing.
        let e = 5.0_f64;
        let nodes = [e, e + 1e-9, e + 2e-9, e - 1e-9];
        let confluent = (-e).exp() / 6.0;
        let got = simplex_kernel(&nodes);
        assert!((got - confluent).abs() <= 1e-8 * confluent);
    }

    #[test]
    fn wide_span_paths_agree() {
        // Straddle the row-series/squaring handover and check continuity.
        let narrow = [1.0, 60.0, 130.0, 199.0];
        let wide = [1.0, 80.0, 160.0, 260.0];
        let a = kernel_row_series(&narrow, 199.0);
        let b = kernel_squaring(&narrow, 199.0, 198.0);
        assert!((a - b).abs() <= 1e-12 * a.max(b));
        let c = simplex_kernel(&wide);
        assert!(c > 0.0 && c.is_finite());
        // Dominated by the smallest node: crude sanity bracket.
        assert!(c < (-1.0_f64).exp());
    }

    #[test]
    fn kernel_table_lookup_matches_direct() {
        let energies = [1.0, 1.7, 2.2, 4.0, 9.5];
        let table = KernelTable::build(&energies, 3).unwrap();
        let mut scratch = [0usize; 3];
        for tuple in [[0usize, 0, 0], [2, 0, 4], [4, 4, 1], [3, 2, 1]] {
            let want =
                simplex_kernel(&[energies[tuple[0]], energies[tuple[1]], energies[tuple[2]]]);
            let got = table.value_for(&tuple, &mut scratch);
            assert!((got - want).abs() <= 1e-15 * want.abs().max(1e-300));
        }
    }

    #[test]
    fn integrand_struct_positive() {
        let s = SimplexIntegrand::evaluate(&[2.0, 3.0]);
        assert!(s.value > 0.0);
        assert_eq!(s.node_energies.len(), 2);
    }
}
