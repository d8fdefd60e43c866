//! Difference-vector inner products served from a shared Gram matrix.
//!
//! Every exemplar of a training set draws its negatives from the same pool,
//! so `⟨x_a − x₀, x_b − x₀⟩ = G_ab − c_a − c_b + ‖x₀‖²` with `c = G x₀`
//! turns each kernel row into `O(n)` work instead of `O(n·d)`. Projections
//! onto a tangent complement subtract `⟨p_a, p_b⟩` where `p = Bᵀ(x − x₀)`.

use crate::linalg;
use crate::model::FeatureVector;
use crate::solver::DiffDots;

/// Dense symmetric Gram matrix of a vector pool.
#[derive(Debug, Clone)]
pub struct Gram {
    n: usize,
    data: Vec<f64>,
}

impl Gram {
    pub fn new(pool: &[FeatureVector]) -> Self {
        let n = pool.len();
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = linalg::dot(&pool[i], &pool[j]);
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        Gram { n, data }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }
}

/// The difference vectors `x_{m} − x₀` for a subset `m` of a Gram pool,
/// optionally projected off an orthonormal basis.
pub struct GramDiffs<'a> {
    gram: &'a Gram,
    members: Vec<usize>,
    /// `⟨x_m, x₀⟩` per member
    cross: Vec<f64>,
    anchor_sq: f64,
    /// `rank` coefficients per member, row-major
    coeffs: Vec<f64>,
    rank: usize,
    self_dots: Vec<f64>,
}

impl<'a> GramDiffs<'a> {
    /// `cross_all[j] = ⟨x_j, x₀⟩` for every pool index `j`.
    pub fn new(gram: &'a Gram, members: Vec<usize>, cross_all: &[f64], anchor_sq: f64) -> Self {
        let cross: Vec<f64> = members.iter().map(|&m| cross_all[m]).collect();
        let self_dots = members
            .iter()
            .zip(&cross)
            .map(|(&m, &c)| {
                let scale = gram.get(m, m) + anchor_sq;
                let v = gram.get(m, m) - 2.0 * c + anchor_sq;
                // duplicates of the anchor cancel only up to rounding
                if v <= 1e-12 * scale {
                    0.0
                } else {
                    v
                }
            })
            .collect();
        GramDiffs {
            gram,
            members,
            cross,
            anchor_sq,
            coeffs: Vec::new(),
            rank: 0,
            self_dots,
        }
    }

    /// Projects every difference off the span of an orthonormal basis;
    /// `coeffs` holds `⟨b, x_m − x₀⟩` for each member (row) and basis vector.
    /// Squared norms at or below `zero_sq` are treated as zero.
    pub fn with_projection(mut self, coeffs: Vec<f64>, rank: usize, zero_sq: f64) -> Self {
        assert_eq!(coeffs.len(), rank * self.members.len());
        self.rank = rank;
        self.coeffs = coeffs;
        for (a, s) in self.self_dots.iter_mut().enumerate() {
            let p = &self.coeffs[a * rank..(a + 1) * rank];
            let v = *s - linalg::norm_sq(p);
            *s = if v <= zero_sq { 0.0 } else { v };
        }
        self
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }
}

impl DiffDots for GramDiffs<'_> {
    fn len(&self) -> usize {
        self.members.len()
    }

    fn self_dot(&self, i: usize) -> f64 {
        self.self_dots[i]
    }

    fn row_dots(&self, i: usize, out: &mut [f64]) {
        let row = self.gram.row(self.members[i]);
        let (ci, r) = (self.cross[i], self.rank);
        for (b, o) in out.iter_mut().enumerate() {
            *o = row[self.members[b]] - ci - self.cross[b] + self.anchor_sq;
        }
        if r > 0 {
            let pi = &self.coeffs[i * r..(i + 1) * r];
            for (b, o) in out.iter_mut().enumerate() {
                *o -= linalg::dot(pi, &self.coeffs[b * r..(b + 1) * r]);
            }
        }
        // zeroed rows stay exactly zero so the solver skips them
        if self.self_dots[i] == 0.0 {
            out.iter_mut().for_each(|o| *o = 0.0);
        } else {
            for (b, o) in out.iter_mut().enumerate() {
                if self.self_dots[b] == 0.0 {
                    *o = 0.0;
                }
            }
        }
    }
}

/// Extra dense rows appended after a base set of differences.
pub struct StackedDiffs<'a, D: DiffDots + ?Sized> {
    base: &'a D,
    extra_self: Vec<f64>,
    /// `extra.len() × base.len()`
    cross: Vec<Vec<f64>>,
    /// `extra.len() × extra.len()`
    extra_gram: Vec<Vec<f64>>,
}

impl<'a, D: DiffDots + ?Sized> StackedDiffs<'a, D> {
    /// `cross[a][j] = ⟨e_a, x̃_j⟩` for every base row `j`.
    pub fn new(base: &'a D, extra: &[Vec<f64>], cross: Vec<Vec<f64>>) -> Self {
        let extra_gram: Vec<Vec<f64>> = extra
            .iter()
            .map(|a| extra.iter().map(|b| linalg::dot(a, b)).collect())
            .collect();
        let extra_self = (0..extra.len()).map(|a| extra_gram[a][a]).collect();
        StackedDiffs {
            base,
            extra_self,
            cross,
            extra_gram,
        }
    }
}

impl<D: DiffDots + ?Sized> DiffDots for StackedDiffs<'_, D> {
    fn len(&self) -> usize {
        self.base.len() + self.extra_self.len()
    }

    fn self_dot(&self, i: usize) -> f64 {
        let n = self.base.len();
        if i < n {
            self.base.self_dot(i)
        } else {
            self.extra_self[i - n]
        }
    }

    fn row_dots(&self, i: usize, out: &mut [f64]) {
        let n = self.base.len();
        if i < n {
            self.base.row_dots(i, &mut out[..n]);
            for (a, o) in out[n..].iter_mut().enumerate() {
                *o = self.cross[a][i];
            }
        } else {
            let a = i - n;
            out[..n].copy_from_slice(&self.cross[a]);
            out[n..].copy_from_slice(&self.extra_gram[a]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::DenseDiffs;

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector::new(v.to_vec()).unwrap()
    }

    fn pool() -> Vec<FeatureVector> {
        vec![
            fv(&[0.0, 1.0, 0.5]),
            fv(&[1.0, 0.2, -0.3]),
            fv(&[0.4, -0.8, 0.9]),
            fv(&[-0.6, 0.1, 0.2]),
        ]
    }

    #[test]
    fn gram_rows_match_dense_differences() {
        let pool = pool();
        let g = Gram::new(&pool);
        let anchor = 0;
        let members = vec![1, 2, 3];
        let diffs = GramDiffs::new(&g, members.clone(), g.row(anchor), g.get(anchor, anchor));
        let dense_rows: Vec<Vec<f64>> = members
            .iter()
            .map(|&m| linalg::sub(&pool[m], &pool[anchor]))
            .collect();
        let dense = DenseDiffs::new(3, &dense_rows).unwrap();
        let (mut a, mut b) = (vec![0.0; 3], vec![0.0; 3]);
        for i in 0..3 {
            diffs.row_dots(i, &mut a);
            dense.row_dots(i, &mut b);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-12);
            }
            assert!((diffs.self_dot(i) - dense.self_dot(i)).abs() < 1e-12);
        }
    }

    #[test]
    fn stacked_rows_are_symmetric() {
        let base_rows = vec![vec![1.0, 0.0], vec![0.5, 0.5]];
        let base = DenseDiffs::new(2, &base_rows).unwrap();
        let extra = vec![vec![0.0, 2.0]];
        let cross = vec![base_rows
            .iter()
            .map(|r| linalg::dot(r, &extra[0]))
            .collect()];
        let s = StackedDiffs::new(&base, &extra, cross);
        assert_eq!(s.len(), 3);
        let mut full = vec![vec![0.0; 3]; 3];
        for (i, row) in full.iter_mut().enumerate() {
            s.row_dots(i, row);
        }
        for i in 0..3 {
            assert_eq!(full[i][i], s.self_dot(i));
            for j in 0..3 {
                assert_eq!(full[i][j], full[j][i]);
            }
        }
    }
}
