//! Rank-revealing dense helpers built on nalgebra's SVD.

use nalgebra::{ComplexField, DMatrix, DVector};

use crate::poly::C64;

/// Singular values in descending order.
pub fn singular_values<T>(m: &DMatrix<T>) -> Vec<f64>
where
    T: ComplexField<RealField = f64>,
{
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut sv: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sv
}

/// Number of singular values above `threshold`.
pub fn rank_above(sv: &[f64], threshold: f64) -> usize {
    sv.iter().filter(|&&s| s > threshold).count()
}

/// Numerical rank with the cutoff `rel * sigma_max`.
pub fn numerical_rank<T>(m: &DMatrix<T>, rel: f64) -> usize
where
    T: ComplexField<RealField = f64>,
{
    let sv = singular_values(m);
    let smax = sv.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return 0;
    }
    rank_above(&sv, rel * smax)
}

/// Minimal-norm least-squares solution, discarding singular values below `rel * sigma_max`.
pub fn min_norm_solve<T>(a: &DMatrix<T>, b: &DVector<T>, rel: f64) -> DVector<T>
where
    T: ComplexField<RealField = f64>,
{
    assert_eq!(a.nrows(), b.len());
    if a.ncols() == 0 {
        return DVector::zeros(0);
    }
    if a.nrows() == 0 {
        return DVector::zeros(a.ncols());
    }
    let smax = singular_values(a).first().copied().unwrap_or(0.0);
    min_norm_solve_cutoff(a, b, rel * smax)
}

/// Minimal-norm least-squares solution, discarding singular values `<= cutoff`.
pub fn min_norm_solve_cutoff<T>(a: &DMatrix<T>, b: &DVector<T>, cutoff: f64) -> DVector<T>
where
    T: ComplexField<RealField = f64>,
{
    assert_eq!(a.nrows(), b.len());
    let mut x = DVector::<T>::zeros(a.ncols());
    if a.ncols() == 0 || a.nrows() == 0 {
        return x;
    }
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().unwrap();
    let vt = svd.v_t.as_ref().unwrap();
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s <= cutoff || s == 0.0 {
            continue;
        }
        let coef = u.column(i).adjoint() * b;
        let scale = coef[(0, 0)].clone().unscale(s);
        x += vt.row(i).adjoint() * scale;
    }
    x
}

/// Orthonormal basis of the numerical null space of a real matrix.
pub fn null_space(m: &DMatrix<f64>, rel: f64) -> Vec<DVector<f64>> {
    let n = m.ncols();
    if n == 0 {
        return Vec::new();
    }
    let padded = if m.nrows() < n {
        let mut p = DMatrix::<f64>::zeros(n, n);
        p.view_mut((0, 0), (m.nrows(), n)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(false, true);
    let vt = svd.v_t.unwrap();
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cutoff = if smax == 0.0 { f64::INFINITY } else { rel * smax };
    let mut out = Vec::new();
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s <= cutoff || smax == 0.0 {
            out.push(vt.row(i).transpose());
        }
    }
    out
}

/// 2-norm condition number of a square matrix.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = singular_values(m);
    match (sv.first(), sv.last()) {
        (Some(&a), Some(&b)) if b > 0.0 => a / b,
        _ => f64::INFINITY,
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra] = rb;
        }
    }
}

/// Singular values of a sparse matrix given by columns.
///
/// The matrix is split into the connected components of its row/column incidence
/// graph; each component is dense-decomposed separately. The union of the
/// component spectra is the spectrum of the whole matrix.
pub fn sparse_singular_values(columns: &[Vec<(usize, C64)>], nrows: usize) -> Vec<f64> {
    let ncols = columns.len();
    let mut uf = UnionFind::new(nrows + ncols);
    for (j, col) in columns.iter().enumerate() {
        for &(i, _) in col {
            uf.union(i, nrows + j);
        }
    }
    let mut groups: std::collections::HashMap<usize, (Vec<usize>, Vec<usize>)> =
        std::collections::HashMap::new();
    for j in 0..ncols {
        if columns[j].is_empty() {
            continue;
        }
        let r = uf.find(nrows + j);
        groups.entry(r).or_default().1.push(j);
    }
    for i in 0..nrows {
        let r = uf.find(i);
        if let Some(g) = groups.get_mut(&r) {
            g.0.push(i);
        }
    }
    let mut sv = Vec::new();
    for (rows, cols) in groups.values() {
        let row_pos: std::collections::HashMap<usize, usize> =
            rows.iter().enumerate().map(|(a, &b)| (b, a)).collect();
        let mut block = DMatrix::<C64>::zeros(rows.len(), cols.len());
        for (cj, &j) in cols.iter().enumerate() {
            for &(i, v) in &columns[j] {
                block[(row_pos[&i], cj)] += v;
            }
        }
        sv.extend(singular_values(&block));
    }
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sv
}

/// Numerical rank of a sparse column set with cutoff `rel * sigma_max`.
pub fn sparse_rank(columns: &[Vec<(usize, C64)>], nrows: usize, rel: f64) -> usize {
    let sv = sparse_singular_values(columns, nrows);
    let smax = sv.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return 0;
    }
    rank_above(&sv, rel * smax)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_of_known_matrices() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 0.0, 1.0, 1.0]);
        assert_eq!(numerical_rank(&m, 1e-12), 2);
        assert_eq!(null_space(&m, 1e-12).len(), 1);
        let ns = &null_space(&m, 1e-12)[0];
        assert!((&m * ns).norm() < 1e-12);
    }

    #[test]
    fn min_norm_picks_smallest_solution() {
        // x + y = 2 has minimal-norm solution (1, 1)
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let b = DVector::from_vec(vec![2.0]);
        let x = min_norm_solve(&a, &b, 1e-12);
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn sparse_rank_matches_dense() {
        let one = C64::new(1.0, 0.0);
        // two decoupled blocks: [[1,1],[1,1]] and [[2]]
        let cols = vec![
            vec![(0, one), (1, one)],
            vec![(0, one), (1, one)],
            vec![(2, one * 2.0)],
            vec![],
        ];
        assert_eq!(sparse_rank(&cols, 3, 1e-12), 2);
        let mut dense = DMatrix::<C64>::zeros(3, 4);
        for (j, c) in cols.iter().enumerate() {
            for &(i, v) in c {
                dense[(i, j)] = v;
            }
        }
        let a = sparse_singular_values(&cols, 3);
        let b = singular_values(&dense);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
