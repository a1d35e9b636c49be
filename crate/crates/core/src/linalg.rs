//! Solvers for the symmetric stencil systems `(D - dt*Lap) x = b` that appear
//! in every implicit step.
//!
//! Both systems in the scheme are Stieltjes matrices (symmetric, positive
//! definite, nonpositive off-diagonals). The banded Cholesky factor of such a
//! matrix keeps nonpositive off-diagonals, so the triangular solves map a
//! nonnegative right-hand side to a nonnegative solution in floating point.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// `A = diag(d) - sum_faces c_axis (e_lo - e_hi)(e_lo - e_hi)^T` restricted to
/// off-diagonals: `A_ii = d_i`, `A_ij = -c_axis` across every interior face.
#[derive(Debug, Clone)]
pub struct StencilMatrix {
    grid: Arc<Grid>,
    diag: Vec<f64>,
    coupling: Vec<f64>,
}

impl StencilMatrix {
    /// `I*(1 + extra) - dt*Lap` with Neumann closure.
    pub fn implicit_diffusion(grid: Arc<Grid>, dt: f64, extra_diag: Option<&[f64]>) -> Self {
        let coupling: Vec<f64> = grid.spacing().iter().map(|h| dt / (h * h)).collect();
        let mut diag = match extra_diag {
            Some(e) => e.iter().map(|x| 1.0 + x).collect(),
            None => vec![1.0; grid.len()],
        };
        for face in grid.faces() {
            diag[face.lo] += coupling[face.axis];
            diag[face.hi] += coupling[face.axis];
        }
        StencilMatrix {
            grid,
            diag,
            coupling,
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y: Vec<f64> = self.diag.iter().zip(x).map(|(d, x)| d * x).collect();
        for face in self.grid.faces() {
            let c = self.coupling[face.axis];
            y[face.lo] -= c * x[face.hi];
            y[face.hi] -= c * x[face.lo];
        }
        y
    }

    /// Lower band of the matrix: `band[i * (w + 1) + k] = A(i, i - k)`.
    fn lower_band(&self) -> (usize, Vec<f64>) {
        let w = self.grid.bandwidth();
        let n = self.len();
        let mut band = vec![0.0; n * (w + 1)];
        for i in 0..n {
            band[i * (w + 1)] = self.diag[i];
        }
        for face in self.grid.faces() {
            let k = face.hi - face.lo;
            band[face.hi * (w + 1) + k] = -self.coupling[face.axis];
        }
        (w, band)
    }
}

/// Banded Cholesky factor `A = L L^T`.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    w: usize,
    // l[i * (w + 1) + k] = L(i, i - k)
    l: Vec<f64>,
}

impl BandedCholesky {
    pub fn factor(a: &StencilMatrix) -> Result<Self> {
        let n = a.len();
        let (w, mut l) = a.lower_band();
        let stride = w + 1;
        for i in 0..n {
            let j0 = i.saturating_sub(w);
            for j in j0..=i {
                let mut sum = l[i * stride + (i - j)];
                let k0 = j0.max(j.saturating_sub(w));
                for k in k0..j {
                    sum -= l[i * stride + (i - k)] * l[j * stride + (j - k)];
                }
                if i == j {
                    if !(sum > 0.0) {
                        return Err(Error::Solver(format!(
                            "matrix is not positive definite (pivot {sum:e} at row {i})"
                        )));
                    }
                    l[i * stride] = sum.sqrt();
                } else {
                    l[i * stride + (i - j)] = sum / l[j * stride];
                }
            }
        }
        Ok(BandedCholesky { n, w, l })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let stride = self.w + 1;
        let mut y = b.to_vec();
        for i in 0..self.n {
            let mut sum = y[i];
            for k in i.saturating_sub(self.w)..i {
                sum -= self.l[i * stride + (i - k)] * y[k];
            }
            y[i] = sum / self.l[i * stride];
        }
        for i in (0..self.n).rev() {
            let mut sum = y[i];
            for k in (i + 1)..(i + 1 + self.w).min(self.n) {
                sum -= self.l[k * stride + (k - i)] * y[k];
            }
            y[i] = sum / self.l[i * stride];
        }
        y
    }
}

/// Unpreconditioned conjugate gradient. Starting from `x0 = b` keeps the
/// residual orthogonal to constants whenever the constant vector is an
/// eigenvector of `A` with eigenvalue 1, so mass is preserved to round-off.
pub fn conjugate_gradient(
    a: &StencilMatrix,
    b: &[f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let mut x = b.to_vec();
    let ax = a.apply(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, ax)| b - ax).collect();
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        return Ok(vec![0.0; b.len()]);
    }
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    for _ in 0..max_iter {
        if rr.sqrt() <= rel_tol * b_norm {
            return Ok(x);
        }
        let ap = a.apply(&p);
        let alpha = rr / dot(&p, &ap);
        for i in 0..x.len() {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..p.len() {
            p[i] = r[i] + beta * p[i];
        }
    }
    if rr.sqrt() <= rel_tol * b_norm {
        Ok(x)
    } else {
        Err(Error::Solver(format!(
            "conjugate gradient stalled at relative residual {:e} after {max_iter} iterations",
            rr.sqrt() / b_norm
        )))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Which solver handles the implicit systems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LinearSolver {
    /// Banded Cholesky when the band fits in memory, CG otherwise.
    #[default]
    Auto,
    Banded,
    ConjugateGradient { rel_tol: f64 },
}

/// Band storage above which `Auto` switches to CG.
const AUTO_BAND_LIMIT: usize = 8_000_000;
const CG_AUTO_TOL: f64 = 1e-13;

impl LinearSolver {
    pub fn solve(&self, a: &StencilMatrix, b: &[f64]) -> Result<Vec<f64>> {
        let banded = match self {
            LinearSolver::Auto => a.len() * (a.grid.bandwidth() + 1) <= AUTO_BAND_LIMIT,
            LinearSolver::Banded => true,
            LinearSolver::ConjugateGradient { .. } => false,
        };
        if banded {
            Ok(BandedCholesky::factor(a)?.solve(b))
        } else {
            let tol = match self {
                LinearSolver::ConjugateGradient { rel_tol } => *rel_tol,
                _ => CG_AUTO_TOL,
            };
            conjugate_gradient(a, b, tol, 20 * a.len() + 100)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid2(nx: usize, ny: usize) -> Arc<Grid> {
        Arc::new(Grid::on_box(vec![nx, ny], &[1.0, 0.7]).unwrap())
    }

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (*seed >> 11) as f64 / (1u64 << 53) as f64
    }

    #[test]
    fn banded_and_cg_agree() {
        let g = grid2(9, 7);
        let mut seed = 7;
        let extra: Vec<f64> = (0..g.len()).map(|_| lcg(&mut seed)).collect();
        let a = StencilMatrix::implicit_diffusion(g.clone(), 0.01, Some(&extra));
        let b: Vec<f64> = (0..g.len()).map(|_| lcg(&mut seed) - 0.3).collect();
        let x1 = BandedCholesky::factor(&a).unwrap().solve(&b);
        let x2 = conjugate_gradient(&a, &b, 1e-14, 10_000).unwrap();
        for (p, q) in x1.iter().zip(&x2) {
            assert!((p - q).abs() < 1e-11);
        }
        let ax = a.apply(&x1);
        for (p, q) in ax.iter().zip(&b) {
            assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn banded_solve_keeps_nonnegative_data_nonnegative() {
        let g = Arc::new(Grid::on_box(vec![40], &[1.0]).unwrap());
        let a = StencilMatrix::implicit_diffusion(g.clone(), 10.0, None);
        let mut b = vec![0.0; 40];
        b[0] = 1.0;
        let x = BandedCholesky::factor(&a).unwrap().solve(&b);
        assert!(x.iter().all(|&v| v >= 0.0));
        // Column sums of I - dt*Lap are one, so the sum is preserved.
        let drift = (x.iter().sum::<f64>() - 1.0).abs();
        assert!(drift < 1e-12, "drift {drift:e}");
    }

    #[test]
    fn cg_preserves_sum_for_pure_diffusion() {
        let g = grid2(16, 16);
        let a = StencilMatrix::implicit_diffusion(g.clone(), 0.05, None);
        let mut seed = 3;
        let b: Vec<f64> = (0..g.len()).map(|_| lcg(&mut seed)).collect();
        let x = conjugate_gradient(&a, &b, 1e-10, 10_000).unwrap();
        let sb: f64 = b.iter().sum();
        let sx: f64 = x.iter().sum();
        assert!((sb - sx).abs() < 1e-12 * sb);
    }

    #[test]
    fn indefinite_matrix_is_reported() {
        let g = Arc::new(Grid::on_box(vec![4], &[1.0]).unwrap());
        let extra = vec![-2.0; 4];
        let a = StencilMatrix::implicit_diffusion(g, 0.1, Some(&extra));
        assert!(matches!(BandedCholesky::factor(&a), Err(Error::Solver(_))));
    }
}
