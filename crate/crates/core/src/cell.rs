//! Cell problems for Λ and Λ̃ and the ingredients of the effective operator.

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::fields::{ModeBox, PeriodicField};
use crate::lattice::Lattice;
use crate::linalg::{self, min_eig, CMat, C64};
use crate::problem::Problem;

/// Dense factorization below this many unknowns, conjugate gradient above.
pub const DENSE_LIMIT: usize = 2000;
const DIRECTIONS: usize = 64;

/// b(ξ) = Σ b_j ξ_j with constant m×n matrices b_j.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolSpec {
    pub m: usize,
    pub n: usize,
    pub b: Vec<CMat>,
}

impl SymbolSpec {
    pub fn new(b: Vec<CMat>) -> Result<Self> {
        let (m, n) = b.first().map(|x| x.shape()).ok_or_else(|| Error::Config("symbol needs at least one matrix b_j".into()))?;
        if b.len() > 2 || b.iter().any(|x| x.shape() != (m, n)) {
            return Err(Error::ShapeMismatch("b_j must be d (<= 2) matrices of equal shape".into()));
        }
        if m < n {
            return Err(Error::ShapeMismatch(format!("b_j is {m}x{n}; need m >= n")));
        }
        let s = SymbolSpec { m, n, b };
        let (a0, _) = s.alpha_bounds();
        if a0 <= 1e-20 {
            return Err(Error::Config("b(θ) loses rank on the unit sphere".into()));
        }
        Ok(s)
    }

    /// Scalar symbol b(D) = D in one dimension.
    pub fn scalar_1d() -> Self {
        SymbolSpec { m: 1, n: 1, b: vec![CMat::identity(1, 1)] }
    }

    /// Gradient b(D) = D in two dimensions (m = 2, n = 1).
    pub fn gradient_2d() -> Self {
        let e = |i: usize| CMat::from_fn(2, 1, |r, _| if r == i { linalg::ONE } else { linalg::ZERO });
        SymbolSpec { m: 2, n: 1, b: vec![e(0), e(1)] }
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn at(&self, xi: [f64; 2]) -> CMat {
        let mut out = CMat::zeros(self.m, self.n);
        for (j, bj) in self.b.iter().enumerate() {
            out += bj * C64::new(xi[j], 0.0);
        }
        out
    }

    fn directions(&self) -> Vec<[f64; 2]> {
        if self.dim() == 1 {
            return vec![[1.0, 0.0], [-1.0, 0.0]];
        }
        (0..DIRECTIONS)
            .map(|i| {
                let t = std::f64::consts::TAU * (i as f64 + 0.5) / DIRECTIONS as f64;
                [t.cos(), t.sin()]
            })
            .collect()
    }

    /// (α₀, α₁): extreme eigenvalues of b(θ)*b(θ) over sampled unit θ.
    pub fn alpha_bounds(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for th in self.directions() {
            let b = self.at(th);
            let ev = linalg::eigenvalues_herm(&b.ad_mul(&b));
            lo = lo.min(ev[0]);
            hi = hi.max(ev[ev.len() - 1]);
        }
        (lo, hi)
    }
}

/// Shared Galerkin data for the cell problems on |j|_∞ ≤ jmax.
pub struct CellGalerkin {
    pub lattice: Lattice,
    pub symbol: SymbolSpec,
    pub jmax: usize,
    /// Principal coefficient as an operator on m-vector trigonometric polynomials.
    pub g: CMat,
    /// Block diagonal of b(ξ_j), (m·M)×(n·M).
    pub bmat: CMat,
    stiffness: CMat,
    unknowns: Vec<usize>,
}

impl CellGalerkin {
    pub fn new(problem: &Problem) -> Result<Self> {
        let jmax = problem.cutoff;
        let lattice = problem.lattice;
        let g = problem.principal_matrix(jmax)?;
        let bmat = symbol_blocks(&problem.symbol, &lattice, jmax, |j| j);
        let mut stiffness = bmat.ad_mul(&(&g * &bmat));
        linalg::hermitize(&mut stiffness);
        let n = problem.symbol.n;
        let bx = ModeBox::new(lattice.dim, jmax);
        let unknowns = bx
            .iter()
            .enumerate()
            .filter(|(_, j)| *j != [0, 0])
            .flat_map(|(p, _)| (0..n).map(move |c| p * n + c))
            .collect();
        Ok(CellGalerkin { lattice, symbol: problem.symbol.clone(), jmax, g, bmat, stiffness, unknowns })
    }

    pub fn modes(&self) -> ModeBox {
        ModeBox::new(self.lattice.dim, self.jmax)
    }

    /// Solve the reduced system with the mean excluded; returns the full stacked
    /// solution (zeros at j = 0) and the relative Galerkin residual.
    fn solve(&self, rhs: &CMat) -> Result<(CMat, f64)> {
        let u = &self.unknowns;
        let a = CMat::from_fn(u.len(), u.len(), |i, j| self.stiffness[(u[i], u[j])]);
        let b = CMat::from_fn(u.len(), rhs.ncols(), |i, j| rhs[(u[i], j)]);
        let x = linalg::solve_hpd(&a, &b, DENSE_LIMIT)?;
        let res = (&a * &x - &b).norm();
        let scale = b.norm().max(linalg::max_abs(&self.g)).max(f64::MIN_POSITIVE);
        let mut full = CMat::zeros(rhs.nrows(), rhs.ncols());
        for (i, &row) in u.iter().enumerate() {
            for c in 0..rhs.ncols() {
                full[(row, c)] = x[(i, c)];
            }
        }
        Ok((full, res / scale))
    }

    /// Stacked E with the m×m identity at the mean mode.
    fn mean_identity(&self) -> CMat {
        let m = self.symbol.m;
        let p0 = self.modes().index([0, 0]).unwrap();
        let mut e = CMat::zeros(m * self.modes().len(), m);
        for c in 0..m {
            e[(p0 * m + c, c)] = linalg::ONE;
        }
        e
    }

    pub fn solve_lambda(&self) -> Result<(PeriodicField, f64)> {
        let rhs = -self.bmat.ad_mul(&(&self.g * self.mean_identity()));
        let (x, res) = self.solve(&rhs)?;
        Ok((PeriodicField::from_stacked(self.lattice, &x, self.symbol.n, self.jmax), res))
    }

    pub fn solve_lambda_tilde(&self, a: &[PeriodicField]) -> Result<(PeriodicField, f64)> {
        let n = self.symbol.n;
        let bx = self.modes();
        let mut rhs = CMat::zeros(n * bx.len(), n);
        for (l, al) in a.iter().enumerate() {
            let adj = al.adjoint_field();
            for (p, j) in bx.iter().enumerate() {
                if let Some(c) = adj.coeff_ref(j) {
                    let xi = self.lattice.xi(j)[l];
                    let mut blk = rhs.view_mut((p * n, 0), (n, n));
                    blk -= c * C64::new(xi, 0.0);
                }
            }
        }
        let (x, res) = self.solve(&rhs)?;
        Ok((PeriodicField::from_stacked(self.lattice, &x, n, self.jmax), res))
    }
}

/// Block diagonal of b(ξ_{k(j)}) over the local cube, with k given by `global`.
pub fn symbol_blocks(symbol: &SymbolSpec, lattice: &Lattice, jmax: usize, global: impl Fn([i64; 2]) -> [i64; 2]) -> CMat {
    let bx = ModeBox::new(lattice.dim, jmax);
    let (m, n) = (symbol.m, symbol.n);
    let mut out = CMat::zeros(m * bx.len(), n * bx.len());
    for (p, j) in bx.iter().enumerate() {
        out.view_mut((p * m, p * n), (m, n)).copy_from(&symbol.at(lattice.xi(global(j))));
    }
    out
}

/// Everything that defines B⁰.
#[derive(Clone, Debug)]
pub struct CellSolution {
    pub cutoff: usize,
    /// Λ, n×m.
    pub lambda: PeriodicField,
    /// Λ̃, n×n.
    pub lambda_tilde: PeriodicField,
    /// b(D)Λ, m×m.
    pub b_lambda: PeriodicField,
    /// b(D)Λ̃, m×n.
    pub b_lambda_tilde: PeriodicField,
    /// g̃ = g(b(D)Λ + 1), m×m.
    pub g_tilde: PeriodicField,
    /// g b(D)Λ̃, m×n.
    pub g_b_lambda_tilde: PeriodicField,
    pub g0: CMat,
    pub v: CMat,
    pub w: CMat,
    pub qbar: CMat,
    pub q0bar: CMat,
    pub sum_a: Vec<CMat>,
    pub g_bar: CMat,
    pub g_under: CMat,
    pub residual_lambda: f64,
    pub residual_lambda_tilde: f64,
}

pub fn solve_lambda(problem: &Problem) -> Result<PeriodicField> {
    let gal = CellGalerkin::new(problem)?;
    Ok(gal.solve_lambda()?.0)
}

pub fn solve_lambda_tilde(problem: &Problem) -> Result<PeriodicField> {
    let gal = CellGalerkin::new(problem)?;
    Ok(gal.solve_lambda_tilde(&problem.a)?.0)
}

pub fn effective_assembly(problem: &Problem) -> Result<CellSolution> {
    let gal = CellGalerkin::new(problem)?;
    let (lambda, residual_lambda) = gal.solve_lambda()?;
    let (lambda_tilde, residual_lambda_tilde) = gal.solve_lambda_tilde(&problem.a)?;
    let j = gal.jmax;
    let (m, lat) = (problem.symbol.m, problem.lattice);
    let x = &gal.bmat * lambda.stacked(j);
    let y = &gal.bmat * lambda_tilde.stacked(j);
    let gt = &gal.g * (&x + gal.mean_identity());
    let gy = &gal.g * &y;
    let g_tilde = PeriodicField::from_stacked(lat, &gt, m, j);
    let mut g0 = g_tilde.cell_average();
    linalg::hermitize(&mut g0);
    let v = x.ad_mul(&gy);
    let mut w = y.ad_mul(&gy);
    linalg::hermitize(&mut w);
    let sum_a = problem
        .a
        .iter()
        .map(|al| {
            let c = al.cell_average();
            &c + c.adjoint()
        })
        .collect();
    let mut qbar = problem.q.cell_average();
    let mut q0bar = problem.q0.cell_average();
    linalg::hermitize(&mut qbar);
    linalg::hermitize(&mut q0bar);
    Ok(CellSolution {
        cutoff: j,
        b_lambda: PeriodicField::from_stacked(lat, &x, m, j),
        b_lambda_tilde: PeriodicField::from_stacked(lat, &y, m, j),
        g_b_lambda_tilde: PeriodicField::from_stacked(lat, &gy, m, j),
        lambda,
        lambda_tilde,
        g_tilde,
        g0,
        v,
        w,
        qbar,
        q0bar,
        sum_a,
        g_bar: problem.g.cell_average(),
        g_under: problem.g.harmonic_mean()?,
        residual_lambda,
        residual_lambda_tilde,
    })
}

/// L(ξ) = b*g⁰b − b*V − V*b + Σ(a_j+a_j*)‾ξ_j − W + Q̄ + λQ̄₀.
pub fn symbol_l(sol: &CellSolution, b: &SymbolSpec, lambda: f64, xi: [f64; 2]) -> CMat {
    let bx = b.at(xi);
    let bv = bx.ad_mul(&sol.v);
    let mut l = bx.ad_mul(&(&sol.g0 * &bx)) - &bv - bv.adjoint() - &sol.w + &sol.qbar + &sol.q0bar * C64::new(lambda, 0.0);
    for (j, s) in sol.sum_a.iter().enumerate() {
        l += s * C64::new(xi[j], 0.0);
    }
    linalg::hermitize(&mut l);
    l
}

impl CellSolution {
    /// (min eig(ḡ − g⁰), min eig(g⁰ − g̲)).
    pub fn voigt_reuss_margins(&self) -> (f64, f64) {
        let mut up = &self.g_bar - &self.g0;
        let mut lo = &self.g0 - &self.g_under;
        linalg::hermitize(&mut up);
        linalg::hermitize(&mut lo);
        (min_eig(&up), min_eig(&lo))
    }

    pub fn to_json(&self) -> Value {
        json!({
            "cutoff": self.cutoff,
            "g0": mat_json(&self.g0),
            "V": mat_json(&self.v),
            "W": mat_json(&self.w),
            "Qbar": mat_json(&self.qbar),
            "Q0bar": mat_json(&self.q0bar),
            "sum_a": self.sum_a.iter().map(mat_json).collect::<Vec<_>>(),
            "g_bar": mat_json(&self.g_bar),
            "g_under": mat_json(&self.g_under),
            "lambda": field_json(&self.lambda),
            "lambda_tilde": field_json(&self.lambda_tilde),
            "g_tilde": field_json(&self.g_tilde),
        })
    }
}

pub fn mat_json(m: &CMat) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|i| Value::Array((0..m.ncols()).map(|j| json!([m[(i, j)].re, m[(i, j)].im])).collect()))
            .collect(),
    )
}

pub fn field_json(f: &PeriodicField) -> Value {
    json!({
        "rows": f.rows,
        "cols": f.cols,
        "cutoff": f.cutoff,
        "modes": f.modes().map(|(k, m)| json!({"k": &k[..f.dim()], "value": mat_json(m)})).collect::<Vec<_>>(),
    })
}
