//! Spanning-tree counts of multigraphs via the matrix-tree theorem.
//!
//! Small minors are evaluated exactly with fraction-free (Bareiss)
//! elimination; larger ones fall back to a log-domain LU factorization.

use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{ToPrimitive, Zero};

use crate::error::TreeError;
use crate::graph::Multigraph;

/// Default largest minor dimension evaluated exactly.
pub const DEFAULT_EXACT_CUTOFF: usize = 64;

/// A spanning-tree count with its natural logarithm.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeCount {
    /// Exact value, absent when only the log-domain path was used.
    pub value: Option<BigUint>,
    pub log_value: f64,
}

impl TreeCount {
    pub fn one() -> Self {
        TreeCount {
            value: Some(BigUint::from(1u32)),
            log_value: 0.0,
        }
    }

    pub fn exact(value: BigUint) -> Self {
        let log_value = ln_biguint(&value);
        TreeCount {
            value: Some(value),
            log_value,
        }
    }

    pub fn from_log(log_value: f64) -> Self {
        TreeCount {
            value: None,
            log_value,
        }
    }

    pub fn mul(&self, other: &TreeCount) -> TreeCount {
        match (&self.value, &other.value) {
            (Some(a), Some(b)) => TreeCount::exact(a * b),
            _ => TreeCount::from_log(self.log_value + other.log_value),
        }
    }
}

impl std::fmt::Display for TreeCount {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.value {
            Some(v) => write!(f, "{v}"),
            None => write!(f, "exp({})", self.log_value),
        }
    }
}

/// Natural log of a big unsigned integer (−∞ for zero).
pub fn ln_biguint(value: &BigUint) -> f64 {
    if value.is_zero() {
        return f64::NEG_INFINITY;
    }
    let bits = value.bits();
    if bits <= 1000 {
        value.to_f64().expect("fits in f64").ln()
    } else {
        let shift = bits - 64;
        let top = (value >> shift).to_f64().expect("64-bit mantissa");
        top.ln() + shift as f64 * std::f64::consts::LN_2
    }
}

/// Reduced Laplacian (last vertex removed) as a dense integer matrix.
fn reduced_laplacian(g: &Multigraph) -> Vec<Vec<i64>> {
    let n = g.num_vertices();
    let dim = n - 1;
    let mut lap = vec![vec![0i64; dim]; dim];
    for &(a, b, _) in &g.edges {
        if a == b {
            continue;
        }
        if a < dim {
            lap[a][a] += 1;
        }
        if b < dim {
            lap[b][b] += 1;
        }
        if a < dim && b < dim {
            lap[a][b] -= 1;
            lap[b][a] -= 1;
        }
    }
    lap
}

fn check(g: &Multigraph) -> Result<(), TreeError> {
    if g.num_vertices() == 0 {
        Err(TreeError::Empty)
    } else if !g.is_connected() {
        Err(TreeError::Disconnected)
    } else {
        Ok(())
    }
}

/// `τ(g)` with the default exact cutoff.
pub fn count_spanning_trees(g: &Multigraph) -> Result<TreeCount, TreeError> {
    count_spanning_trees_with(g, DEFAULT_EXACT_CUTOFF)
}

/// `τ(g)`: exact when the reduced Laplacian has dimension ≤ `exact_cutoff`.
pub fn count_spanning_trees_with(
    g: &Multigraph,
    exact_cutoff: usize,
) -> Result<TreeCount, TreeError> {
    check(g)?;
    if g.num_vertices() == 1 {
        return Ok(TreeCount::one());
    }
    let lap = reduced_laplacian(g);
    if lap.len() <= exact_cutoff {
        Ok(TreeCount::exact(bareiss_determinant(&lap)))
    } else {
        Ok(TreeCount::from_log(log_determinant(&lap)))
    }
}

/// `ln τ(g)` through floating-point LU only.
pub fn log_spanning_trees(g: &Multigraph) -> Result<f64, TreeError> {
    check(g)?;
    if g.num_vertices() == 1 {
        return Ok(0.0);
    }
    Ok(log_determinant(&reduced_laplacian(g)))
}

/// Exact determinant of a nonsingular-or-singular integer matrix whose
/// determinant is known to be nonnegative.
pub fn bareiss_determinant(m: &[Vec<i64>]) -> BigUint {
    let n = m.len();
    if n == 0 {
        return BigUint::from(1u32);
    }
    let mut a: Vec<Vec<BigInt>> = m
        .iter()
        .map(|row| row.iter().map(|&x| BigInt::from(x)).collect())
        .collect();
    let mut prev = BigInt::from(1);
    let mut negate = false;
    for k in 0..n - 1 {
        if a[k][k].is_zero() {
            match (k + 1..n).find(|&r| !a[r][k].is_zero()) {
                Some(r) => {
                    a.swap(k, r);
                    negate = !negate;
                }
                None => return BigUint::zero(),
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let v = (&a[i][j] * &a[k][k] - &a[i][k] * &a[k][j]) / &prev;
                a[i][j] = v;
            }
        }
        prev = a[k][k].clone();
    }
    let mut det = a[n - 1][n - 1].clone();
    if negate {
        det = -det;
    }
    match det.sign() {
        Sign::Minus => panic!("Laplacian minor has negative determinant"),
        _ => det.magnitude().clone(),
    }
}

/// `ln |det m|` by partial-pivot LU.
pub fn log_determinant(m: &[Vec<i64>]) -> f64 {
    let n = m.len();
    let mut a: Vec<f64> = m
        .iter()
        .flat_map(|row| row.iter().map(|&x| x as f64))
        .collect();
    let mut log_det = 0.0;
    for k in 0..n {
        let pivot_row = (k..n)
            .max_by(|&r, &s| a[r * n + k].abs().total_cmp(&a[s * n + k].abs()))
            .expect("nonempty range");
        let pivot = a[pivot_row * n + k];
        if pivot == 0.0 {
            return f64::NEG_INFINITY;
        }
        if pivot_row != k {
            for j in 0..n {
                a.swap(k * n + j, pivot_row * n + j);
            }
        }
        log_det += pivot.abs().ln();
        for i in k + 1..n {
            let factor = a[i * n + k] / pivot;
            if factor != 0.0 {
                for j in k + 1..n {
                    a[i * n + j] -= factor * a[k * n + j];
                }
            }
        }
    }
    log_det
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mg(n: usize, edges: &[(usize, usize)]) -> Multigraph {
        Multigraph::new(
            (0..n).collect(),
            edges
                .iter()
                .enumerate()
                .map(|(i, &(a, b))| (a, b, i))
                .collect(),
        )
    }

    #[test]
    fn triangle_has_three_trees() {
        let c = count_spanning_trees(&mg(3, &[(0, 1), (1, 2), (2, 0)])).unwrap();
        assert_eq!(c.value, Some(BigUint::from(3u32)));
        assert!((c.log_value - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn parallel_edges_count_separately() {
        for w in 1..6 {
            let edges = vec![(0, 1); w];
            let c = count_spanning_trees(&mg(2, &edges)).unwrap();
            assert_eq!(c.value, Some(BigUint::from(w as u32)));
        }
    }

    #[test]
    fn single_vertex_has_one_tree() {
        assert_eq!(count_spanning_trees(&mg(1, &[])).unwrap(), TreeCount::one());
    }

    #[test]
    fn disconnected_and_empty_are_errors() {
        assert_eq!(
            count_spanning_trees(&mg(2, &[])),
            Err(TreeError::Disconnected)
        );
        assert_eq!(count_spanning_trees(&mg(0, &[])), Err(TreeError::Empty));
    }

    #[test]
    fn complete_graphs_follow_cayley() {
        for n in 2..9usize {
            let edges: Vec<_> = (0..n)
                .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
                .collect();
            let g = mg(n, &edges);
            let c = count_spanning_trees(&g).unwrap();
            assert_eq!(c.value, Some(BigUint::from(n).pow(n as u32 - 2)));
            let lu = log_spanning_trees(&g).unwrap();
            assert!((lu - c.log_value).abs() < 1e-9 * c.log_value.max(1.0));
        }
    }

    #[test]
    fn exact_and_log_paths_agree_on_a_large_grid() {
        let g = crate::fixtures::grid_graph(12, 12);
        let m = Multigraph::new(
            (0..144).collect(),
            g.edges()
                .iter()
                .enumerate()
                .map(|(e, &(a, b))| (a, b, e))
                .collect(),
        );
        let exact = count_spanning_trees_with(&m, 200).unwrap();
        let approx = count_spanning_trees_with(&m, 10).unwrap();
        assert!(approx.value.is_none());
        assert!((exact.log_value - approx.log_value).abs() < 1e-9 * exact.log_value);
    }

    #[test]
    fn huge_values_have_finite_logs() {
        let big = BigUint::from(3u32).pow(2000);
        assert!((ln_biguint(&big) - 2000.0 * 3f64.ln()).abs() < 1e-9 * 2000.0);
    }
}
