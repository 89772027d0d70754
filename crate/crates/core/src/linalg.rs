//! Dense complex linear algebra on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct HermEigen {
    pub values: DVector<f64>,
    pub vectors: CMat,
}

impl HermEigen {
    pub fn new(m: &CMat) -> Self {
        let se = nalgebra::SymmetricEigen::new(m.clone());
        let n = se.eigenvalues.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
        let values = DVector::from_iterator(n, order.iter().map(|&i| se.eigenvalues[i]));
        let mut vectors = CMat::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            vectors.set_column(dst, &se.eigenvectors.column(src));
        }
        HermEigen { values, vectors }
    }

    /// U f(Λ) U* x
    pub fn apply<F: Fn(f64) -> C64>(&self, f: F, x: &CVec) -> CVec {
        let mut y = self.vectors.ad_mul(x);
        for (yi, &l) in y.iter_mut().zip(self.values.iter()) {
            *yi *= f(l);
        }
        &self.vectors * y
    }

    /// U f(Λ) U*
    pub fn function<F: Fn(f64) -> C64>(&self, f: F) -> CMat {
        let mut scaled = self.vectors.clone();
        for (j, &l) in self.values.iter().enumerate() {
            let fl = f(l);
            scaled.column_mut(j).scale_mut_c(fl);
        }
        scaled * self.vectors.adjoint()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

trait ScaleC {
    fn scale_mut_c(&mut self, c: C64);
}

impl<S> ScaleC for nalgebra::Matrix<C64, nalgebra::Dyn, nalgebra::U1, S>
where
    S: nalgebra::StorageMut<C64, nalgebra::Dyn, nalgebra::U1>,
{
    fn scale_mut_c(&mut self, c: C64) {
        for v in self.iter_mut() {
            *v *= c;
        }
    }
}

pub fn eigenvalues_herm(m: &CMat) -> DVector<f64> {
    let mut v: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    DVector::from_vec(v)
}

pub fn min_eig(m: &CMat) -> f64 {
    m.clone().symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

pub fn hermitize(m: &mut CMat) {
    let a = m.adjoint();
    *m += a;
    m.scale_mut(0.5);
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest singular value.
pub fn op_norm(m: &CMat) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    let g = if m.nrows() >= m.ncols() { m.ad_mul(m) } else { m * m.adjoint() };
    min_eig(&(-g)).abs().sqrt()
}

/// Right singular vector for the largest singular value.
pub fn top_right_singular(m: &CMat) -> (f64, CVec) {
    let g = m.ad_mul(m);
    let e = HermEigen::new(&g);
    let last = e.values.len() - 1;
    (e.values[last].max(0.0).sqrt(), e.vectors.column(last).into_owned())
}

pub fn real_mat(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> CMat {
    CMat::from_fn(rows, cols, |i, j| C64::new(f(i, j), 0.0))
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Cholesky factor of a Hermitian matrix, or None unless positive definite.
/// nalgebra's complex factorization takes square roots of negative pivots
/// without complaint, so the pivots are checked here.
pub fn cholesky(a: &CMat) -> Option<nalgebra::Cholesky<C64, nalgebra::Dyn>> {
    let ch = nalgebra::Cholesky::new(a.clone())?;
    let l = ch.l_dirty();
    let ok = (0..a.nrows()).all(|i| {
        let d = l[(i, i)];
        d.re > 0.0 && d.im.abs() <= 1e-12 * d.re && d.re.is_finite()
    });
    ok.then_some(ch)
}

/// Solve a Hermitian positive definite system, dense Cholesky below `dense_limit`
/// unknowns, conjugate gradient above.
pub fn solve_hpd(a: &CMat, b: &CMat, dense_limit: usize) -> Result<CMat> {
    if a.nrows() == 0 {
        return Ok(CMat::zeros(0, b.ncols()));
    }
    if a.nrows() < dense_limit {
        let ch = cholesky(a)
            .ok_or_else(|| Error::IndefiniteCoefficient("Galerkin matrix".into()))?;
        return Ok(ch.solve(b));
    }
    let mut x = CMat::zeros(a.nrows(), b.ncols());
    for c in 0..b.ncols() {
        let col = conjugate_gradient(a, &b.column(c).into_owned(), 1e-12, 10 * a.nrows())?;
        x.set_column(c, &col);
    }
    Ok(x)
}

pub fn conjugate_gradient(a: &CMat, b: &CVec, rtol: f64, max_iter: usize) -> Result<CVec> {
    let bnorm = b.norm();
    let mut x = CVec::zeros(b.len());
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rr = r.norm_squared();
    for _ in 0..max_iter {
        if rr.sqrt() <= rtol * bnorm {
            return Ok(x);
        }
        let ap = a * &p;
        let pap = p.dotc(&ap).re;
        if pap <= 0.0 {
            return Err(Error::IndefiniteCoefficient("Galerkin matrix".into()));
        }
        let alpha = rr / pap;
        x.axpy(C64::new(alpha, 0.0), &p, ONE);
        r.axpy(C64::new(-alpha, 0.0), &ap, ONE);
        let rr_new = r.norm_squared();
        p = &r + &p * C64::new(rr_new / rr, 0.0);
        rr = rr_new;
    }
    if rr.sqrt() <= rtol * bnorm {
        Ok(x)
    } else {
        Err(Error::NoConvergence { iters: max_iter, residual: rr.sqrt() / bnorm })
    }
}

/// (e^z - 1)/z, accurate near z = 0.
pub fn phi1(z: C64) -> C64 {
    if z.norm() < 0.5 {
        let mut term = ONE;
        let mut sum = ONE;
        for k in 2..30 {
            term *= z / k as f64;
            sum += term;
            if term.norm() < 1e-18 {
                break;
            }
        }
        sum
    } else {
        (z.exp() - ONE) / z
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_sorted_and_reconstructs() {
        let m = CMat::from_fn(5, 5, |i, j| {
            let re = ((i * 7 + j * 3) % 5) as f64 + if i == j { 6.0 } else { 0.0 };
            let im = if i == j { 0.0 } else { (i as f64 - j as f64) * 0.3 };
            C64::new(re, im)
        });
        let mut h = m.clone();
        hermitize(&mut h);
        let e = HermEigen::new(&h);
        for w in e.values.as_slice().windows(2) {
            assert!(w[0] <= w[1]);
        }
        let back = e.function(|l| C64::new(l, 0.0));
        assert!((back - &h).norm() < 1e-12 * h.norm());
    }

    #[test]
    fn cg_matches_cholesky() {
        let n = 30;
        let x = CMat::from_fn(n, n, |i, j| C64::new(((i * j) % 7) as f64 * 0.1, (i as f64 - j as f64) * 0.01));
        let a = &x * x.adjoint() + identity(n);
        let b = CMat::from_fn(n, 2, |i, j| C64::new(i as f64, j as f64));
        let d = solve_hpd(&a, &b, 1000).unwrap();
        let c = solve_hpd(&a, &b, 1).unwrap();
        assert!((d - c).norm() < 1e-9);
    }

    #[test]
    fn phi1_branches_agree() {
        for &z in &[C64::new(0.49, 0.0), C64::new(0.0, 0.499), C64::new(-0.3, 0.35)] {
            let direct = (z.exp() - ONE) / z;
            assert!((phi1(z) - direct).norm() < 1e-14);
        }
        assert_eq!(phi1(ZERO), ONE);
    }

    #[test]
    fn op_norm_of_diagonal() {
        let m = CMat::from_diagonal(&CVec::from_vec(vec![C64::new(1.0, 0.0), C64::new(0.0, -3.0)]));
        assert!((op_norm(&m) - 3.0).abs() < 1e-12);
    }
}
