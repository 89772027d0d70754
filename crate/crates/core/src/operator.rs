//! Plane-wave discretizations of B_ε and B⁰ on the computational torus and their
//! spectral functional calculus.
//!
//! With ε = 1/N the coefficients of B_ε only carry modes in N·Z^d, so B_ε couples
//! k with k + N·j and nothing else. The retained modes are organized in fibers
//! {r + N·j : |j|_∞ ≤ J}, one per residue r ∈ (-N/2, N/2]^d, and every operator
//! here is block diagonal over fibers. Eigendecompositions are computed per fiber
//! on first use; the fiber blocks together form the full dense Hermitian matrix.

use std::sync::{Arc, OnceLock};

use rayon::prelude::*;

use crate::cell::{symbol_blocks, symbol_l, CellSolution, SymbolSpec};
use crate::error::{Error, Result};
use crate::fields::{ModeBox, TorusFunction};
use crate::lattice::{Lattice, Mode};
use crate::linalg::{self, CMat, CVec, HermEigen, C64};
use crate::problem::Problem;
use crate::quadrature::gauss_legendre_on;

// --- layout ----------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct FloquetLayout {
    pub lattice: Lattice,
    /// Components per mode.
    pub n: usize,
    /// N, with ε = 1/N.
    pub scale: usize,
    pub jmax: usize,
    fibers: Vec<Mode>,
}

impl FloquetLayout {
    pub fn new(lattice: Lattice, n: usize, scale: usize, jmax: usize) -> Self {
        assert!(scale >= 1);
        let (lo, hi) = residue_range(scale);
        let rs: Vec<i64> = (lo..=hi).collect();
        let fibers = if lattice.dim == 1 {
            rs.iter().map(|&r| [r, 0]).collect()
        } else {
            rs.iter().flat_map(|&a| rs.iter().map(move |&b| [a, b])).collect()
        };
        FloquetLayout { lattice, n, scale, jmax, fibers }
    }

    pub fn eps(&self) -> f64 {
        1.0 / self.scale as f64
    }

    pub fn num_fibers(&self) -> usize {
        self.fibers.len()
    }

    pub fn residue(&self, f: usize) -> Mode {
        self.fibers[f]
    }

    pub fn local(&self) -> ModeBox {
        ModeBox::new(self.lattice.dim, self.jmax)
    }

    pub fn fiber_dim(&self) -> usize {
        self.n * self.local().len()
    }

    pub fn global(&self, f: usize, j: Mode) -> Mode {
        let r = self.fibers[f];
        let n = self.scale as i64;
        [r[0] + n * j[0], r[1] + n * j[1]]
    }

    /// Largest |k_i| among retained modes.
    pub fn kbig(&self) -> usize {
        self.scale * self.jmax + self.scale / 2
    }

    /// (fiber, local position) of a global mode, if retained.
    pub fn locate(&self, k: Mode) -> Option<(usize, usize)> {
        if self.lattice.dim == 1 && k[1] != 0 {
            return None;
        }
        let n = self.scale as i64;
        let (lo, hi) = residue_range(self.scale);
        let split = |x: i64| {
            let mut r = x.rem_euclid(n);
            if r > hi {
                r -= n;
            }
            (r, (x - r) / n)
        };
        let (r0, j0) = split(k[0]);
        let (r1, j1) = split(k[1]);
        let p = self.local().index([j0, j1])?;
        let side = (hi - lo + 1) as usize;
        let f = if self.lattice.dim == 1 { (r0 - lo) as usize } else { (r0 - lo) as usize * side + (r1 - lo) as usize };
        Some((f, p))
    }

    pub fn xi(&self, f: usize, p: usize) -> [f64; 2] {
        self.lattice.xi(self.global(f, self.local().mode(p)))
    }

    /// Coefficients of u on fiber f, `comps` values per mode.
    pub fn gather(&self, u: &TorusFunction, f: usize) -> CVec {
        let c = u.n;
        let lb = self.local();
        let mut x = CVec::zeros(c * lb.len());
        for (p, j) in lb.iter().enumerate() {
            if let Some(v) = u.get(self.global(f, j)) {
                x.rows_mut(p * c, c).copy_from_slice(v);
            }
        }
        x
    }

    pub fn scatter(&self, u: &mut TorusFunction, f: usize, x: &CVec) {
        let c = u.n;
        for (p, j) in self.local().iter().enumerate() {
            if let Some(dst) = u.get_mut(self.global(f, j)) {
                dst.copy_from_slice(x.rows(p * c, c).as_slice());
            }
        }
    }

    pub fn empty_function(&self, comps: usize) -> TorusFunction {
        TorusFunction::zeros(self.lattice, comps, self.kbig())
    }

    /// Restriction of u to the retained modes.
    pub fn project(&self, u: &TorusFunction) -> TorusFunction {
        let mut out = self.empty_function(u.n);
        for f in self.touched(u) {
            let x = self.gather(u, f);
            self.scatter(&mut out, f, &x);
        }
        out
    }

    /// Fibers carrying a nonzero retained coefficient of u, ascending.
    pub fn touched(&self, u: &TorusFunction) -> Vec<usize> {
        let mut fs: Vec<usize> = u.nonzero_modes().filter_map(|(k, _)| self.locate(k).map(|(f, _)| f)).collect();
        fs.sort_unstable();
        fs.dedup();
        fs
    }

    /// (1+|ξ|²)^{s/2} per fiber coordinate, `comps` per mode.
    pub fn sobolev_weights(&self, f: usize, s: f64, comps: usize) -> Vec<f64> {
        (0..self.local().len())
            .flat_map(|p| {
                let x = self.xi(f, p);
                let w = (1.0 + x[0] * x[0] + x[1] * x[1]).powf(0.5 * s);
                std::iter::repeat_n(w, comps)
            })
            .collect()
    }

    /// Π_ε as a mask per fiber coordinate.
    pub fn smoothing_mask(&self, f: usize, comps: usize) -> Vec<bool> {
        let eps = self.eps();
        (0..self.local().len())
            .flat_map(|p| std::iter::repeat(self.lattice.in_brillouin(self.xi(f, p), eps)).take(comps))
            .collect()
    }

    pub fn symbol_blocks(&self, symbol: &SymbolSpec, f: usize) -> CMat {
        symbol_blocks(symbol, &self.lattice, self.jmax, |j| self.global(f, j))
    }
}

fn residue_range(n: usize) -> (i64, i64) {
    (-(((n - 1) / 2) as i64), (n / 2) as i64)
}

// --- spectral functions ----------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SpectralFn {
    CosSqrt(f64),
    /// sin(t√λ)/√λ
    SincSqrt(f64),
    /// √λ sin(t√λ)
    SqrtSin(f64),
    /// e^{-itλ}
    ExpI(f64),
    Inv,
    InvSqrt,
    Sqrt,
    /// (λ + ν)⁻¹
    Resolvent(f64),
}

impl SpectralFn {
    pub fn eval(self, l: f64) -> C64 {
        let r = |x: f64| C64::new(x, 0.0);
        match self {
            SpectralFn::CosSqrt(t) => r((t * l.sqrt()).cos()),
            SpectralFn::SincSqrt(t) => r(sinc_sqrt(t, l)),
            SpectralFn::SqrtSin(t) => r(l.sqrt() * (t * l.sqrt()).sin()),
            SpectralFn::ExpI(t) => C64::new(0.0, -t * l).exp(),
            SpectralFn::Inv => r(1.0 / l),
            SpectralFn::InvSqrt => r(1.0 / l.sqrt()),
            SpectralFn::Sqrt => r(l.sqrt()),
            SpectralFn::Resolvent(nu) => r(1.0 / (l + nu)),
        }
    }

    fn needs_positive(self) -> bool {
        !matches!(self, SpectralFn::ExpI(_) | SpectralFn::Resolvent(_))
    }
}

pub fn sinc_sqrt(t: f64, l: f64) -> f64 {
    let w = l.sqrt();
    if (t * w).abs() < 1e-8 {
        t * (1.0 - t * t * l / 6.0)
    } else {
        (t * w).sin() / w
    }
}

/// f(M) for a Hermitian matrix.
pub fn matrix_function(m: &CMat, kind: SpectralFn) -> Result<CMat> {
    let e = HermEigen::new(m);
    if kind.needs_positive() && e.min() <= 0.0 {
        return Err(Error::NotPositive { beta: e.min() });
    }
    Ok(e.function(|l| kind.eval(l)))
}

/// M^{-1/2} = (1/π)∫₀^∞ ν^{-1/2}(M+ν)⁻¹dν, with ν = c² tan²θ mapping the integral to
/// (2/π)∫₀^{π/2} c (M cos²θ + c² sin²θ)⁻¹ dθ, c² = tr(M)/n, evaluated by Gauss–Legendre.
pub fn inv_sqrt_quadrature(m: &CMat, points: usize) -> Result<CMat> {
    let n = m.nrows();
    let c2 = (m.trace().re / n as f64).max(f64::MIN_POSITIVE);
    let c = c2.sqrt();
    let (th, w) = gauss_legendre_on(points, 0.0, std::f64::consts::FRAC_PI_2);
    let mut acc = CMat::zeros(n, n);
    let id = CMat::identity(n, n);
    for (t, wt) in th.iter().zip(&w) {
        let (s, co) = t.sin_cos();
        let a = m * C64::new(co * co, 0.0) + &id * C64::new(c2 * s * s, 0.0);
        let inv = linalg::cholesky(&a).ok_or(Error::NotPositive { beta: f64::NAN })?.inverse();
        acc += inv * C64::new(wt * c, 0.0);
    }
    Ok(acc * C64::new(2.0 / std::f64::consts::PI, 0.0))
}

// --- discrete operators ----------------------------------------------------

/// Cell-scale pieces of B_ε; only the symbol blocks depend on the fiber.
#[derive(Clone, Debug)]
pub struct EpsParts {
    pub symbol: SymbolSpec,
    pub g: CMat,
    pub a: Vec<CMat>,
    pub q: CMat,
    pub q0: CMat,
}

impl EpsParts {
    pub fn new(problem: &Problem, jmax: usize) -> Result<Self> {
        Ok(EpsParts {
            symbol: problem.symbol.clone(),
            g: problem.principal_matrix(jmax)?,
            a: problem.a.iter().map(|a| a.toeplitz(jmax)).collect(),
            q: problem.q.toeplitz(jmax),
            q0: problem.q0.toeplitz(jmax),
        })
    }

    pub fn fiber_matrix(&self, layout: &FloquetLayout, f: usize, lambda: f64) -> CMat {
        let bm = layout.symbol_blocks(&self.symbol, f);
        let mut m = bm.ad_mul(&(&self.g * &bm));
        let n = layout.n;
        for (l, al) in self.a.iter().enumerate() {
            let mut t = al.clone();
            for p in 0..layout.local().len() {
                let x = layout.xi(f, p)[l];
                for c in 0..n {
                    t.column_mut(p * n + c).scale_mut(x);
                }
            }
            m += &t + t.adjoint();
        }
        m += &self.q + &self.q0 * C64::new(lambda, 0.0);
        linalg::hermitize(&mut m);
        m
    }
}

#[derive(Clone, Debug)]
enum Source {
    Eps(Arc<EpsParts>),
    Effective { cell: Arc<CellSolution>, symbol: SymbolSpec },
}

#[derive(Clone, Debug)]
pub struct FiberData {
    pub matrix: CMat,
    pub eigen: HermEigen,
}

/// Hermitian discretization of B_ε (or B⁰) on a Floquet layout.
#[derive(Debug)]
pub struct DiscreteOperator {
    pub layout: FloquetLayout,
    pub lambda: f64,
    /// Smallest eigenvalue.
    pub beta: f64,
    /// For B⁰: inf over retained modes of min-eig L(ξ)/(1+|ξ|²).
    pub c_star: Option<f64>,
    source: Source,
    cache: Vec<OnceLock<Arc<FiberData>>>,
}

pub fn assemble_beps(problem: &Problem, lambda: f64, layout: FloquetLayout) -> Result<DiscreteOperator> {
    if layout.jmax < problem.cutoff {
        return Err(Error::TruncationTooTight(format!(
            "fiber cutoff {} below the cell cutoff {}; retained modes must reach N·(K + 1/2) = {}",
            layout.jmax,
            problem.cutoff,
            layout.scale * problem.cutoff + layout.scale / 2
        )));
    }
    if layout.n != problem.symbol.n {
        return Err(Error::ShapeMismatch("layout components differ from symbol n".into()));
    }
    let parts = Arc::new(EpsParts::new(problem, layout.jmax)?);
    let beta = (0..layout.num_fibers())
        .into_par_iter()
        .map(|f| linalg::min_eig(&parts.fiber_matrix(&layout, f, lambda)))
        .reduce(|| f64::INFINITY, f64::min);
    if !(beta > 0.0) {
        return Err(Error::LambdaInadmissible { lambda, min_eig: beta });
    }
    let cache = (0..layout.num_fibers()).map(|_| OnceLock::new()).collect();
    Ok(DiscreteOperator { layout, lambda, beta, c_star: None, source: Source::Eps(parts), cache })
}

pub fn assemble_b0(cell: Arc<CellSolution>, symbol: &SymbolSpec, lambda: f64, layout: FloquetLayout) -> Result<DiscreteOperator> {
    let (beta, c_star) = effective_bounds(&cell, symbol, lambda, &layout);
    if !(beta > 0.0) {
        return Err(Error::LambdaInadmissible { lambda, min_eig: beta });
    }
    let cache = (0..layout.num_fibers()).map(|_| OnceLock::new()).collect();
    Ok(DiscreteOperator {
        layout,
        lambda,
        beta,
        c_star: Some(c_star),
        source: Source::Effective { cell, symbol: symbol.clone() },
        cache,
    })
}

fn effective_bounds(cell: &CellSolution, symbol: &SymbolSpec, lambda: f64, layout: &FloquetLayout) -> (f64, f64) {
    let lb = layout.local();
    (0..layout.num_fibers())
        .flat_map(|f| lb.iter().map(move |j| layout.global(f, j)))
        .map(|k| {
            let xi = layout.lattice.xi(k);
            let e = linalg::min_eig(&symbol_l(cell, symbol, lambda, xi));
            (e, e / (1.0 + xi[0] * xi[0] + xi[1] * xi[1]))
        })
        .fold((f64::INFINITY, f64::INFINITY), |a, b| (a.0.min(b.0), a.1.min(b.1)))
}

/// Smallest λ with min-eig B_ε ≥ β for every N and min-eig B⁰ ≥ β, by doubling then bisection.
pub fn choose_lambda(problem: &Problem, cell: &CellSolution, n_list: &[usize], beta_target: f64) -> Result<f64> {
    choose_lambda_on(problem, cell, n_list, problem.cutoff, beta_target)
}

/// As [`choose_lambda`], on layouts with `jmax` local modes per fiber.
pub fn choose_lambda_on(problem: &Problem, cell: &CellSolution, n_list: &[usize], jmax: usize, beta_target: f64) -> Result<f64> {
    let parts = EpsParts::new(problem, jmax)?;
    // Both discretizations are affine in λ; the λ-free parts are assembled once.
    let mut fibers: Vec<CMat> = Vec::new();
    let mut symbols: Vec<CMat> = Vec::new();
    for &n in n_list {
        let lay = FloquetLayout::new(problem.lattice, problem.symbol.n, n, jmax);
        fibers.par_extend((0..lay.num_fibers()).into_par_iter().map(|f| parts.fiber_matrix(&lay, f, 0.0)));
        let lb = lay.local();
        let modes: Vec<Mode> = (0..lay.num_fibers()).flat_map(|f| lb.iter().map(|j| lay.global(f, j)).collect::<Vec<_>>()).collect();
        symbols.par_extend(modes.into_par_iter().map(|k| symbol_l(cell, &problem.symbol, 0.0, problem.lattice.xi(k))));
    }
    let q0bar = &cell.q0bar;
    let margin = |lambda: f64| -> f64 {
        let l = C64::new(lambda, 0.0);
        let e = fibers.par_iter().map(|a| linalg::min_eig(&(a + &parts.q0 * l))).reduce(|| f64::INFINITY, f64::min);
        let e0 = symbols.par_iter().map(|a| linalg::min_eig(&(a + q0bar * l))).reduce(|| f64::INFINITY, f64::min);
        e.min(e0) - beta_target
    };
    let (mut lo, mut hi);
    if margin(0.0) >= 0.0 {
        hi = 0.0;
        let mut step = 1.0;
        loop {
            lo = -step;
            if margin(lo) < 0.0 {
                break;
            }
            hi = lo;
            step *= 2.0;
            if step > 1e18 {
                return Err(Error::SearchFailed("no lower bracket for lambda".into()));
            }
        }
    } else {
        lo = 0.0;
        let mut step = 1.0;
        loop {
            hi = step;
            if margin(hi) >= 0.0 {
                break;
            }
            lo = hi;
            step *= 2.0;
            if step > 1e18 {
                return Err(Error::SearchFailed("no admissible lambda found while doubling".into()));
            }
        }
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if margin(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-12 * hi.abs().max(1.0) {
            break;
        }
    }
    if margin(hi) < 0.0 {
        return Err(Error::SearchFailed(format!("bisection ended at inadmissible lambda {hi}")));
    }
    Ok(hi)
}

impl DiscreteOperator {
    pub fn is_effective(&self) -> bool {
        matches!(self.source, Source::Effective { .. })
    }

    pub fn fiber_matrix(&self, f: usize) -> CMat {
        match &self.source {
            Source::Eps(parts) => parts.fiber_matrix(&self.layout, f, self.lambda),
            Source::Effective { cell, symbol } => {
                let n = self.layout.n;
                let len = self.layout.local().len();
                let mut m = CMat::zeros(n * len, n * len);
                for p in 0..len {
                    let l = symbol_l(cell, symbol, self.lambda, self.layout.xi(f, p));
                    m.view_mut((p * n, p * n), (n, n)).copy_from(&l);
                }
                m
            }
        }
    }

    pub fn fiber(&self, f: usize) -> Arc<FiberData> {
        self.cache[f]
            .get_or_init(|| {
                let matrix = self.fiber_matrix(f);
                let eigen = match &self.source {
                    Source::Eps(_) => HermEigen::new(&matrix),
                    Source::Effective { .. } => block_eigen(&matrix, self.layout.n),
                };
                Arc::new(FiberData { matrix, eigen })
            })
            .clone()
    }

    fn check_components(&self, v: &TorusFunction) -> Result<()> {
        if v.n != self.layout.n {
            return Err(Error::ShapeMismatch(format!("operator acts on {} components, got {}", self.layout.n, v.n)));
        }
        Ok(())
    }

    fn check_positive(&self, kind: SpectralFn) -> Result<()> {
        if kind.needs_positive() && !(self.beta > 0.0) {
            return Err(Error::NotPositive { beta: self.beta });
        }
        Ok(())
    }

    /// U f(Λ) U* v, fiber by fiber. Coefficients of v outside the retained modes are dropped.
    pub fn apply_fn(&self, v: &TorusFunction, f: impl Fn(f64) -> C64 + Sync) -> Result<TorusFunction> {
        self.check_components(v)?;
        let mut out = self.layout.empty_function(v.n);
        for fi in self.layout.touched(v) {
            let x = self.layout.gather(v, fi);
            let y = self.fiber(fi).eigen.apply(&f, &x);
            self.layout.scatter(&mut out, fi, &y);
        }
        Ok(out)
    }

    pub fn func_calc(&self, kind: SpectralFn, v: &TorusFunction) -> Result<TorusFunction> {
        self.check_positive(kind)?;
        self.apply_fn(v, |l| kind.eval(l))
    }

    pub fn fiber_function(&self, f: usize, kind: SpectralFn) -> Result<CMat> {
        self.check_positive(kind)?;
        Ok(self.fiber(f).eigen.function(|l| kind.eval(l)))
    }

    pub fn matvec(&self, v: &TorusFunction) -> Result<TorusFunction> {
        self.check_components(v)?;
        let mut out = self.layout.empty_function(v.n);
        for fi in self.layout.touched(v) {
            let y = &self.fiber(fi).matrix * self.layout.gather(v, fi);
            self.layout.scatter(&mut out, fi, &y);
        }
        Ok(out)
    }

    /// u* B u
    pub fn quadratic_form(&self, u: &TorusFunction) -> Result<f64> {
        self.check_components(u)?;
        let mut acc = 0.0;
        for fi in self.layout.touched(u) {
            let x = self.layout.gather(u, fi);
            acc += x.dotc(&(&self.fiber(fi).matrix * &x)).re;
        }
        Ok(acc)
    }

    /// Principal coefficient g^ε applied to an m-component function (B_ε only).
    pub fn apply_principal(&self, v: &TorusFunction) -> Result<TorusFunction> {
        let Source::Eps(parts) = &self.source else {
            return Err(Error::ShapeMismatch("principal coefficient is defined for B_eps only".into()));
        };
        if v.n != parts.symbol.m {
            return Err(Error::ShapeMismatch(format!("expected {} components, got {}", parts.symbol.m, v.n)));
        }
        let mut out = self.layout.empty_function(v.n);
        for fi in self.layout.touched(v) {
            let y = &parts.g * self.layout.gather(v, fi);
            self.layout.scatter(&mut out, fi, &y);
        }
        Ok(out)
    }

    /// g^ε as an (m·M)×(m·M) block over one fiber (B_ε only); identical for every fiber.
    pub fn principal_block(&self) -> Option<&CMat> {
        match &self.source {
            Source::Eps(parts) => Some(&parts.g),
            Source::Effective { .. } => None,
        }
    }

    /// Full dense matrix, rows ordered fiber by fiber. For small layouts only.
    pub fn dense_matrix(&self) -> (Vec<Mode>, CMat) {
        let nf = self.layout.num_fibers();
        let fd = self.layout.fiber_dim();
        let mut modes = Vec::with_capacity(nf * self.layout.local().len());
        let mut m = CMat::zeros(nf * fd, nf * fd);
        for f in 0..nf {
            modes.extend(self.layout.local().iter().map(|j| self.layout.global(f, j)));
            m.view_mut((f * fd, f * fd), (fd, fd)).copy_from(&self.fiber(f).matrix);
        }
        (modes, m)
    }

    /// Largest eigenvalue over all fibers (computes every fiber).
    pub fn max_eigenvalue(&self) -> f64 {
        (0..self.layout.num_fibers()).map(|f| self.fiber(f).eigen.values.max()).fold(f64::NEG_INFINITY, f64::max)
    }
}

fn block_eigen(m: &CMat, n: usize) -> HermEigen {
    let len = m.nrows() / n;
    let mut vals = Vec::with_capacity(m.nrows());
    let mut vecs = CMat::zeros(m.nrows(), m.nrows());
    for p in 0..len {
        let e = HermEigen::new(&m.view((p * n, p * n), (n, n)).into_owned());
        for c in 0..n {
            vals.push(e.values[c]);
            vecs.view_mut((p * n, p * n + c), (n, 1)).copy_from(&e.vectors.column(c));
        }
    }
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
    let values = nalgebra::DVector::from_iterator(vals.len(), order.iter().map(|&i| vals[i]));
    let mut vectors = CMat::zeros(m.nrows(), m.nrows());
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &vecs.column(src));
    }
    HermEigen { values, vectors }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::effective_assembly;
    use crate::fields::PeriodicField;
    use crate::problem::{piecewise_1d, PrincipalRule};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    fn scalar(x: f64) -> CMat {
        CMat::from_element(1, 1, c(x))
    }

    fn constant_1d(g: f64, cutoff: usize) -> Problem {
        let lat = Lattice::cubic(1, 1.0);
        Problem::new("c", lat, SymbolSpec::scalar_1d(), PeriodicField::constant(lat, scalar(g)), PrincipalRule::Laurent, cutoff)
    }

    fn two_phase(cutoff: usize) -> Problem {
        let lat = Lattice::cubic(1, 1.0);
        let g = piecewise_1d(lat, &[0.0, 0.5], &[scalar(1.0), scalar(4.0)], 2 * cutoff).unwrap();
        Problem::new("tp", lat, SymbolSpec::scalar_1d(), g, PrincipalRule::Inverse, cutoff)
    }

    fn random_problem(seed: u64) -> Problem {
        let lat = Lattice::cubic(2, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = PeriodicField::random_hermitian_positive(lat, 2, 1, &mut rng);
        let a = (0..2).map(|_| PeriodicField::random(lat, 1, 1, 1, 0.4, &mut rng)).collect();
        let q = PeriodicField::random(lat, 1, 1, 1, 0.4, &mut rng);
        let q = q.plus(&q.adjoint_field()).unwrap();
        let q0 = PeriodicField::random_hermitian_positive(lat, 1, 1, &mut rng);
        Problem::new("rand", lat, SymbolSpec::gradient_2d(), g, PrincipalRule::Laurent, 2).with_a(a).with_q(q).with_q0(q0)
    }

    fn random_fn(layout: &FloquetLayout, seed: u64) -> TorusFunction {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut u = TorusFunction::random_band_limited(layout.lattice, layout.n, layout.kbig(), &mut rng);
        // drop the unretained edge modes (even N)
        let modes: Vec<Mode> = u.mode_box().iter().filter(|k| layout.locate(*k).is_none()).collect();
        for k in modes {
            u.get_mut(k).unwrap().fill(C64::new(0.0, 0.0));
        }
        u
    }

    #[test]
    fn layout_round_trip() {
        for (dim, n) in [(1, 1), (1, 4), (1, 7), (2, 2), (2, 3)] {
            let lay = FloquetLayout::new(Lattice::cubic(dim, 1.0), 1, n, 2);
            let mut seen = std::collections::HashSet::new();
            for f in 0..lay.num_fibers() {
                for (p, j) in lay.local().iter().enumerate() {
                    let k = lay.global(f, j);
                    assert_eq!(lay.locate(k), Some((f, p)));
                    assert!(k[0].unsigned_abs() as usize <= lay.kbig());
                    assert!(seen.insert(k));
                }
            }
            let side = 2 * lay.kbig() + 1 - if n % 2 == 0 { 1 } else { 0 };
            assert_eq!(seen.len(), side.pow(dim as u32));
        }
    }

    #[test]
    fn constant_coefficients_are_diagonal() {
        let p = constant_1d(2.0, 4);
        let op = assemble_beps(&p, 1.0, FloquetLayout::new(p.lattice, 1, 1, 6)).unwrap();
        let (modes, m) = op.dense_matrix();
        for (i, k) in modes.iter().enumerate() {
            for (j, _) in modes.iter().enumerate() {
                let want = if i == j { 2.0 * (2.0 * PI * k[0] as f64).powi(2) + 1.0 } else { 0.0 };
                assert!((m[(i, j)] - c(want)).norm() < 1e-9);
            }
        }
        let sol = Arc::new(effective_assembly(&p).unwrap());
        let b0 = assemble_b0(sol, &p.symbol, 1.0, FloquetLayout::new(p.lattice, 1, 1, 6)).unwrap();
        assert!((b0.dense_matrix().1 - m).norm() < 1e-9);
        assert!((b0.c_star.unwrap() - 1.0).abs() < 1e-12);
    }

    /// 𝔟_ε[u,u] = ∫ g^ε b(D)u·b(D)u + 2Re Σ∫ a_j^ε D_j u·u + ∫(Q^ε + λQ0^ε)u·u by exact grid quadrature.
    fn grid_form(p: &Problem, n: usize, lambda: f64, u: &TorusFunction) -> f64 {
        let grid = 4 * u.cutoff + 4 * n + 3;
        let eval = |f: &PeriodicField| f.rescale_eps(n).eval_on_grid(grid).unwrap();
        let (g, q, q0) = (eval(&p.g), eval(&p.q), eval(&p.q0));
        let a: Vec<_> = p.a.iter().map(eval).collect();
        let uu = u.eval_on_grid(grid).unwrap();
        let du: Vec<_> = (0..2).map(|l| u.derivative(l).eval_on_grid(grid).unwrap()).collect();
        let bu = u.apply_multiplier(p.symbol.m, |xi| p.symbol.at(xi)).eval_on_grid(grid).unwrap();
        let mut acc = 0.0;
        for i in 0..uu.len() {
            acc += bu[i].dotc(&(&g[i] * &bu[i])).re;
            for l in 0..2 {
                acc += 2.0 * uu[i].dotc(&(&a[l][i] * &du[l][i])).re;
            }
            acc += uu[i].dotc(&((&q[i] + &q0[i] * c(lambda)) * &uu[i])).re;
        }
        acc / uu.len() as f64
    }

    #[test]
    fn quadratic_form_matches_grid_quadrature() {
        let p = random_problem(5);
        for n in [2, 3] {
            let op = assemble_beps(&p, 3.0, FloquetLayout::new(p.lattice, 1, n, 2)).unwrap();
            for s in 0..10 {
                let u = random_fn(&op.layout, 100 + s);
                let want = grid_form(&p, n, 3.0, &u);
                let got = op.quadratic_form(&u).unwrap();
                assert!((got - want).abs() <= 1e-8 * want.abs(), "N={n}: {got} vs {want}");
                assert!(got >= op.beta * u.l2_norm().powi(2) * (1.0 - 1e-12));
            }
        }
    }

    #[test]
    fn fibers_are_hermitian_and_reconstruct() {
        let p = random_problem(9);
        let op = assemble_beps(&p, 3.0, FloquetLayout::new(p.lattice, 1, 3, 2)).unwrap();
        for f in 0..op.layout.num_fibers() {
            let fd = op.fiber(f);
            let m = &fd.matrix;
            assert!(linalg::max_abs(&(m - m.adjoint())) <= 1e-12 * linalg::max_abs(m));
            let rec = fd.eigen.function(c);
            assert!((rec - m).norm() <= 1e-9 * m.norm());
        }
        assert!(op.beta > 0.0);
    }

    #[test]
    fn effective_blocks_are_the_symbol() {
        let p = random_problem(2);
        let sol = Arc::new(effective_assembly(&p).unwrap());
        let lay = FloquetLayout::new(p.lattice, 1, 4, 2);
        let op = assemble_b0(sol.clone(), &p.symbol, 4.0, lay.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let f = rng.gen_range(0..lay.num_fibers());
            let pos = rng.gen_range(0..lay.local().len());
            let blk = op.fiber(f).matrix.view((pos, pos), (1, 1)).into_owned();
            let want = symbol_l(&sol, &p.symbol, 4.0, lay.xi(f, pos));
            assert!((blk - want).norm() < 1e-12);
        }
    }

    #[test]
    fn lowest_branch_follows_effective_symbol() {
        let p = two_phase(8);
        let mut prev = f64::INFINITY;
        for n in [8, 16, 32] {
            let op = assemble_beps(&p, 1.0, FloquetLayout::new(p.lattice, 1, n, 8)).unwrap();
            let mut worst: f64 = 0.0;
            for r in [1i64, 2] {
                let (f, _) = op.layout.locate([r, 0]).unwrap();
                let xi = 2.0 * PI * r as f64;
                let want = 1.6 * xi * xi + 1.0;
                worst = worst.max((op.fiber(f).eigen.min() - want).abs() / want);
            }
            assert!(worst < prev && worst < 0.05, "N={n}: {worst}");
            prev = worst;
        }
    }

    #[test]
    fn choose_lambda_cases() {
        let p = two_phase(4);
        let sol = effective_assembly(&p).unwrap();
        let lam = choose_lambda(&p, &sol, &[2, 4], 0.1).unwrap();
        assert!((lam - 0.1).abs() < 1e-9, "{lam}");
        let p = constant_1d(1.0, 2).with_q(PeriodicField::constant(Lattice::cubic(1, 1.0), scalar(-3.0)));
        let sol = effective_assembly(&p).unwrap();
        let lam = choose_lambda(&p, &sol, &[1, 3], 0.1).unwrap();
        assert!((lam - 3.1).abs() < 1e-9, "{lam}");
        let op = assemble_beps(&p, lam, FloquetLayout::new(p.lattice, 1, 3, 2)).unwrap();
        assert!(op.beta >= 0.1 - 1e-9);
        assert!(matches!(
            assemble_beps(&p, 2.0, FloquetLayout::new(p.lattice, 1, 3, 2)),
            Err(Error::LambdaInadmissible { .. })
        ));
        assert!(matches!(
            assemble_beps(&p, 4.0, FloquetLayout::new(p.lattice, 1, 3, 1)),
            Err(Error::TruncationTooTight(_))
        ));
    }

    #[test]
    fn scalar_spectral_calculus() {
        let m = CMat::identity(3, 3) * c(4.0);
        let t = 0.7;
        assert!((matrix_function(&m, SpectralFn::CosSqrt(t)).unwrap() - CMat::identity(3, 3) * c((2.0 * t).cos())).norm() < 1e-14);
        assert!((matrix_function(&m, SpectralFn::SincSqrt(t)).unwrap() - CMat::identity(3, 3) * c((2.0 * t).sin() / 2.0)).norm() < 1e-14);
        assert!((SpectralFn::SincSqrt(t).eval(1e-30).re - t).abs() < 1e-15);
        assert!(matches!(matrix_function(&(-m), SpectralFn::Inv), Err(Error::NotPositive { .. })));
    }

    #[test]
    fn operator_calculus_identities() {
        let p = random_problem(4);
        let op = assemble_beps(&p, 3.0, FloquetLayout::new(p.lattice, 1, 2, 2)).unwrap();
        let v = random_fn(&op.layout, 77);
        let id = op.func_calc(SpectralFn::CosSqrt(0.0), &v).unwrap();
        assert!(id.sub(&v).unwrap().l2_norm() < 1e-12 * v.l2_norm());
        let e = op.func_calc(SpectralFn::ExpI(1.3), &v).unwrap();
        assert!((e.l2_norm() - v.l2_norm()).abs() < 1e-10 * v.l2_norm());
        let cs = op.func_calc(SpectralFn::CosSqrt(1.3), &v).unwrap();
        assert!(cs.l2_norm() <= v.l2_norm() * (1.0 + 1e-12));
        // resolvent identity
        let (nu, mu) = (0.5, 2.0);
        let lhs = op.func_calc(SpectralFn::Resolvent(nu), &v).unwrap().sub(&op.func_calc(SpectralFn::Resolvent(mu), &v).unwrap()).unwrap();
        let rhs = op.func_calc(SpectralFn::Resolvent(nu), &op.func_calc(SpectralFn::Resolvent(mu), &v).unwrap()).unwrap().scaled(c(mu - nu));
        assert!(lhs.sub(&rhs).unwrap().l2_norm() <= 1e-9 * lhs.l2_norm());
        // inverse undoes the matrix
        let back = op.func_calc(SpectralFn::Inv, &op.matvec(&v).unwrap()).unwrap();
        assert!(back.sub(&v).unwrap().l2_norm() <= 1e-9 * v.l2_norm());
    }

    #[test]
    fn time_derivative_of_cosine() {
        let p = two_phase(4);
        let op = assemble_beps(&p, 1.0, FloquetLayout::new(p.lattice, 1, 2, 4)).unwrap();
        let v = random_fn(&op.layout, 3).scaled(c(1e-3));
        let t = 0.4;
        let exact = op.func_calc(SpectralFn::SqrtSin(t), &v).unwrap().scaled(c(-1.0));
        let fd = |h: f64| {
            let up = op.func_calc(SpectralFn::CosSqrt(t + h), &v).unwrap();
            let dn = op.func_calc(SpectralFn::CosSqrt(t - h), &v).unwrap();
            up.sub(&dn).unwrap().scaled(c(0.5 / h)).sub(&exact).unwrap().l2_norm()
        };
        let (e1, e2) = (fd(1e-4), fd(0.5e-4));
        assert!(e1 / e2 > 3.0 && e1 / e2 < 5.0, "{e1} {e2}");
    }

    #[test]
    fn inv_sqrt_matches_resolvent_integral() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = CMat::from_fn(12, 12, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let m = x.ad_mul(&x) + CMat::identity(12, 12) * c(0.5);
        let direct = matrix_function(&m, SpectralFn::InvSqrt).unwrap();
        let quad = inv_sqrt_quadrature(&m, 64).unwrap();
        assert!((&direct - quad).norm() <= 1e-6 * direct.norm());
    }
}
