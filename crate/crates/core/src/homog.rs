//! Correctors, first-order approximations and flux approximations, applied to
//! concrete data or assembled per Floquet fiber.
//!
//! Multiplication by an ε-periodic field maps a fiber into itself, so every
//! corrector here is block diagonal over fibers. Outputs are restricted to the
//! retained modes, the same Galerkin space in which B_ε is discretized.

use std::sync::Arc;

use serde::Serialize;

use crate::cell::{CellSolution, SymbolSpec};
use crate::error::{Error, Result};
use crate::fields::{multiply, PeriodicField, TorusFunction};
use crate::linalg::{CMat, C64};
use crate::operator::{DiscreteOperator, FloquetLayout, SpectralFn};
use crate::propagate::{solve_hyperbolic, SourceTerm};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum NormTag {
    L2,
    H1,
    Hm1,
}

impl NormTag {
    pub fn s(self) -> f64 {
        match self {
            NormTag::L2 => 0.0,
            NormTag::H1 => 1.0,
            NormTag::Hm1 => -1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            NormTag::L2 => "L2",
            NormTag::H1 => "H1",
            NormTag::Hm1 => "Hm1",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TimeCorrector {
    /// cos(t√B⁰)(B⁰)⁻¹
    K1(f64),
    /// (B⁰)^{-1/2} sin(t√B⁰)
    K2(f64),
    /// e^{-itB⁰}(B⁰)⁻¹
    K3(f64),
}

impl TimeCorrector {
    fn eval(self, l: f64) -> C64 {
        match self {
            TimeCorrector::K1(t) => SpectralFn::CosSqrt(t).eval(l) / l,
            TimeCorrector::K2(t) => SpectralFn::SincSqrt(t).eval(l),
            TimeCorrector::K3(t) => SpectralFn::ExpI(t).eval(l) / l,
        }
    }
}

/// Cell data rescaled to ε = 1/N, plus the fiber layout the correctors act in.
#[derive(Clone, Debug)]
pub struct CorrectorKit {
    pub cell: Arc<CellSolution>,
    pub symbol: SymbolSpec,
    pub layout: FloquetLayout,
    pub use_smoothing: bool,
    pub lambda_eps: PeriodicField,
    pub lambda_tilde_eps: PeriodicField,
    pub b_lambda_tilde_eps: PeriodicField,
    pub g_tilde_eps: PeriodicField,
    /// (g b(D)Λ̃)^ε
    pub g_b_lambda_tilde_eps: PeriodicField,
}

impl CorrectorKit {
    pub fn new(cell: Arc<CellSolution>, symbol: &SymbolSpec, layout: FloquetLayout, use_smoothing: bool) -> Self {
        let n = layout.scale;
        CorrectorKit {
            lambda_eps: cell.lambda.rescale_eps(n),
            lambda_tilde_eps: cell.lambda_tilde.rescale_eps(n),
            b_lambda_tilde_eps: cell.b_lambda_tilde.rescale_eps(n),
            g_tilde_eps: cell.g_tilde.rescale_eps(n),
            g_b_lambda_tilde_eps: cell.g_b_lambda_tilde.rescale_eps(n),
            cell,
            symbol: symbol.clone(),
            layout,
            use_smoothing,
        }
    }

    pub fn eps(&self) -> f64 {
        self.layout.eps()
    }

    fn smooth(&self, u: &TorusFunction) -> TorusFunction {
        if self.use_smoothing {
            u.apply_smoothing(self.eps())
        } else {
            u.clone()
        }
    }

    fn b_of(&self, u: &TorusFunction) -> TorusFunction {
        u.apply_multiplier(self.symbol.m, |xi| self.symbol.at(xi))
    }

    /// Restriction to the retained modes, as a function on the layout cube.
    fn restrict(&self, u: &TorusFunction) -> TorusFunction {
        self.layout.project(u)
    }

    /// (Λ^ε Π b(D) + Λ̃^ε Π) w
    pub fn corrector_apply(&self, w: &TorusFunction) -> Result<TorusFunction> {
        if w.n != self.symbol.n {
            return Err(Error::ShapeMismatch(format!("corrector acts on {} components, got {}", self.symbol.n, w.n)));
        }
        let sw = self.smooth(w);
        let first = multiply(&self.lambda_eps, &self.b_of(&sw))?;
        let second = multiply(&self.lambda_tilde_eps, &sw)?;
        let k = first.cutoff.max(second.cutoff);
        Ok(self.restrict(&first.resized(k).add(&second.resized(k))?))
    }

    /// K(ε)v = (Λ^ε Π b(D) + Λ̃^ε Π)(B⁰)⁻¹v
    pub fn corrector_resolvent(&self, op0: &DiscreteOperator, v: &TorusFunction) -> Result<TorusFunction> {
        self.corrector_apply(&op0.func_calc(SpectralFn::Inv, v)?)
    }

    pub fn corrector_time(&self, kind: TimeCorrector, op0: &DiscreteOperator, v: &TorusFunction) -> Result<TorusFunction> {
        if !(op0.beta > 0.0) {
            return Err(Error::NotPositive { beta: op0.beta });
        }
        self.corrector_apply(&op0.apply_fn(v, |l| kind.eval(l))?)
    }

    /// ũ₀(t): effective solution with data ((B⁰)⁻¹φ, ψ) and source F.
    pub fn effective_solution(&self, op0: &DiscreteOperator, phi: &TorusFunction, psi: &TorusFunction, f: &SourceTerm, t: f64) -> Result<TorusFunction> {
        let u0 = op0.func_calc(SpectralFn::Inv, phi)?;
        Ok(solve_hyperbolic(op0, &u0, psi, f, t)?.u)
    }

    /// ṽ_ε(t) = ũ₀(t) + ε(Λ^ε Π b(D) + Λ̃^ε Π)ũ₀(t)
    pub fn first_order_approx(&self, op0: &DiscreteOperator, phi: &TorusFunction, psi: &TorusFunction, f: &SourceTerm, t: f64) -> Result<TorusFunction> {
        let u0 = self.effective_solution(op0, phi, psi, f, t)?;
        let corr = self.corrector_apply(&u0)?.scaled(C64::new(self.eps(), 0.0));
        u0.add(&corr)
    }

    /// g̃^ε Π b(D)ũ₀ + g^ε(b(D)Λ̃)^ε Π ũ₀, m components.
    pub fn flux_approx(&self, op0: &DiscreteOperator, phi: &TorusFunction, psi: &TorusFunction, f: &SourceTerm, t: f64) -> Result<TorusFunction> {
        let u0 = self.smooth(&self.effective_solution(op0, phi, psi, f, t)?);
        let first = multiply(&self.g_tilde_eps, &self.b_of(&u0))?;
        let second = multiply(&self.g_b_lambda_tilde_eps, &u0)?;
        let k = first.cutoff.max(second.cutoff);
        Ok(self.restrict(&first.resized(k).add(&second.resized(k))?))
    }

    /// g⁰ b(D)ũ₀, the flux with no oscillating factor.
    pub fn plain_flux(&self, op0: &DiscreteOperator, phi: &TorusFunction, psi: &TorusFunction, f: &SourceTerm, t: f64) -> Result<TorusFunction> {
        let u0 = self.effective_solution(op0, phi, psi, f, t)?;
        let g0 = &self.cell.g0;
        Ok(u0.apply_multiplier(self.symbol.m, |xi| g0 * self.symbol.at(xi)))
    }

    // --- per-fiber matrices ---

    fn mask(&self, f: usize, comps: usize) -> CMat {
        let m = self.layout.smoothing_mask(f, comps);
        CMat::from_diagonal(&nalgebra::DVector::from_iterator(
            m.len(),
            m.iter().map(|&keep| if keep || !self.use_smoothing { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) }),
        ))
    }

    /// Λ^ε Π b(D) + Λ̃^ε Π on fiber f, (n·M)×(n·M).
    pub fn corrector_fiber(&self, f: usize) -> CMat {
        let j = self.layout.jmax;
        let pn = self.mask(f, self.symbol.n);
        let pm = self.mask(f, self.symbol.m);
        let bm = self.layout.symbol_blocks(&self.symbol, f);
        self.cell.lambda.toeplitz(j) * pm * bm + self.cell.lambda_tilde.toeplitz(j) * pn
    }

    /// g̃^ε Π b(D) + (g b(D)Λ̃)^ε Π on fiber f, (m·M)×(n·M).
    pub fn flux_fiber(&self, f: usize) -> CMat {
        let j = self.layout.jmax;
        let pn = self.mask(f, self.symbol.n);
        let pm = self.mask(f, self.symbol.m);
        let bm = self.layout.symbol_blocks(&self.symbol, f);
        self.cell.g_tilde.toeplitz(j) * pm * bm + self.cell.g_b_lambda_tilde.toeplitz(j) * pn
    }
}

/// p_ε(t) = g^ε b(D)ũ_ε(t), ũ_ε with data (B_ε⁻¹φ, ψ) and source F.
pub fn p_eps(op: &DiscreteOperator, symbol: &SymbolSpec, phi: &TorusFunction, psi: &TorusFunction, f: &SourceTerm, t: f64) -> Result<TorusFunction> {
    let u0 = op.func_calc(SpectralFn::Inv, phi)?;
    let u = solve_hyperbolic(op, &u0, psi, f, t)?.u;
    op.apply_principal(&u.apply_multiplier(symbol.m, |xi| symbol.at(xi)))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorRow {
    pub epsilon: f64,
    pub t: f64,
    pub norm: NormTag,
    pub datum: String,
    pub raw_error: f64,
    pub normalized_error: f64,
    /// ε(1+|t|)
    pub bound_shape: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorMeta {
    pub epsilon: f64,
    pub t: f64,
    pub datum: String,
    /// Norm of the datum in the theorem's source space.
    pub datum_norm: f64,
}

pub fn error_report(u_ref: &TorusFunction, u_approx: &TorusFunction, norms: &[NormTag], meta: &ErrorMeta) -> Result<Vec<ErrorRow>> {
    if u_ref.n != u_approx.n {
        return Err(Error::ShapeMismatch(format!("{} vs {} components", u_ref.n, u_approx.n)));
    }
    if !(meta.datum_norm > 0.0) {
        return Err(Error::NonFinite(format!("datum norm {}", meta.datum_norm)));
    }
    let k = u_ref.cutoff.max(u_approx.cutoff);
    let diff = u_ref.resized(k).sub(&u_approx.resized(k))?;
    norms
        .iter()
        .map(|&nt| {
            let raw = diff.sobolev_norm(nt.s());
            if !raw.is_finite() {
                return Err(Error::NonFinite(format!("{} error for datum {}", nt.as_str(), meta.datum)));
            }
            Ok(ErrorRow {
                epsilon: meta.epsilon,
                t: meta.t,
                norm: nt,
                datum: meta.datum.clone(),
                raw_error: raw,
                normalized_error: raw / meta.datum_norm,
                bound_shape: meta.epsilon * (1.0 + meta.t.abs()),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks;
    use crate::cell::effective_assembly;
    use crate::operator::{assemble_b0, FloquetLayout};
    use crate::problem::Problem;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct Setup {
        problem: Problem,
        kit: CorrectorKit,
        op0: DiscreteOperator,
    }

    fn setup(name: &str, n: usize, smoothing: bool) -> Setup {
        let problem = benchmarks::load(name).unwrap();
        let cell = Arc::new(effective_assembly(&problem).unwrap());
        let layout = FloquetLayout::new(problem.lattice, problem.symbol.n, n, problem.cutoff);
        let op0 = assemble_b0(cell.clone(), &problem.symbol, 2.0, layout.clone()).unwrap();
        let kit = CorrectorKit::new(cell, &problem.symbol, layout, smoothing);
        Setup { problem, kit, op0 }
    }

    fn random(s: &Setup, seed: u64, cutoff: usize) -> TorusFunction {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        s.kit.layout.project(&TorusFunction::random_band_limited(s.problem.lattice, s.problem.symbol.n, cutoff, &mut rng))
    }

    fn dist(a: &TorusFunction, b: &TorusFunction) -> f64 {
        let k = a.cutoff.max(b.cutoff);
        a.resized(k).sub(&b.resized(k)).unwrap().l2_norm()
    }

    #[test]
    fn constant_coefficients_have_no_corrector() {
        let s = setup("constant_1d", 4, true);
        let w = random(&s, 1, 6);
        assert!(s.kit.corrector_apply(&w).unwrap().l2_norm() < 1e-13);
        assert!(linalg_norm(&s.kit.corrector_fiber(1)) < 1e-13);
    }

    fn linalg_norm(m: &CMat) -> f64 {
        m.norm()
    }

    #[test]
    fn fiber_blocks_match_apply() {
        for smoothing in [true, false] {
            let s = setup("two_phase_1d_lower", 4, smoothing);
            let w = random(&s, 2, s.kit.layout.kbig());
            let direct = s.kit.corrector_apply(&w).unwrap();
            let mut blocks = s.kit.layout.empty_function(1);
            for f in 0..s.kit.layout.num_fibers() {
                let y = s.kit.corrector_fiber(f) * s.kit.layout.gather(&w, f);
                s.kit.layout.scatter(&mut blocks, f, &y);
            }
            assert!(dist(&direct, &blocks) < 1e-12 * w.l2_norm(), "smoothing {smoothing}");
        }
    }

    #[test]
    fn time_correctors_at_zero() {
        let s = setup("two_phase_1d_lower", 4, true);
        let v = random(&s, 3, 5);
        let k = s.kit.corrector_resolvent(&s.op0, &v).unwrap();
        let k1 = s.kit.corrector_time(TimeCorrector::K1(0.0), &s.op0, &v).unwrap();
        let k3 = s.kit.corrector_time(TimeCorrector::K3(0.0), &s.op0, &v).unwrap();
        let k2 = s.kit.corrector_time(TimeCorrector::K2(0.0), &s.op0, &v).unwrap();
        assert!(dist(&k, &k1) < 1e-13 && dist(&k, &k3) < 1e-13);
        assert!(k2.l2_norm() < 1e-14);
        assert!(k.l2_norm() > 1e-3);
    }

    #[test]
    fn corrector_is_linear() {
        let s = setup("zero_corrector_2d", 3, true);
        let (a, b) = (random(&s, 4, 3), random(&s, 5, 3));
        let z = C64::new(0.3, -1.1);
        let lhs = s.kit.corrector_apply(&a.add(&b.scaled(z)).unwrap()).unwrap();
        let rhs = s.kit.corrector_apply(&a).unwrap().add(&s.kit.corrector_apply(&b).unwrap().scaled(z)).unwrap();
        assert!(dist(&lhs, &rhs) < 1e-12);
    }

    #[test]
    fn smoothing_is_invisible_on_low_modes() {
        // Modes |k| ≤ 1 lie inside the dilated zone for N ≥ 4.
        let on = setup("two_phase_1d_lower", 4, true);
        let off = setup("two_phase_1d_lower", 4, false);
        let w = random(&on, 6, 1);
        assert!(dist(&on.kit.corrector_apply(&w).unwrap(), &off.kit.corrector_apply(&w).unwrap()) < 1e-14);
    }

    #[test]
    fn first_order_approximation_adds_the_corrector() {
        let s = setup("two_phase_1d_lower", 4, true);
        let (phi, psi) = (random(&s, 7, 3), random(&s, 8, 3));
        let f = SourceTerm::none();
        let u0 = s.kit.effective_solution(&s.op0, &phi, &psi, &f, 1.5).unwrap();
        let v = s.kit.first_order_approx(&s.op0, &phi, &psi, &f, 1.5).unwrap();
        let k = s.kit.corrector_apply(&u0).unwrap().scaled(C64::new(0.25, 0.0));
        assert!(dist(&v.sub(&u0).unwrap(), &k) < 1e-13);
    }

    #[test]
    fn plain_flux_when_flux_coefficient_is_constant() {
        // Principal part only in 1D: g̃ = g̲ is constant and Λ̃ = 0.
        let s = setup("two_phase_1d", 8, true);
        let (phi, psi) = (random(&s, 9, 3), random(&s, 10, 3));
        let f = SourceTerm::none();
        let a = s.kit.flux_approx(&s.op0, &phi, &psi, &f, 2.0).unwrap();
        let b = s.kit.plain_flux(&s.op0, &phi, &psi, &f, 2.0).unwrap();
        assert!(dist(&a, &b) <= 1e-9 * b.l2_norm());
    }

    #[test]
    fn error_report_single_mode() {
        let lat = crate::lattice::Lattice::cubic(1, 1.0);
        let u = TorusFunction::single_mode(lat, 1, [2, 0], &[C64::new(0.0, 3.0)]);
        let zero = TorusFunction::zeros(lat, 1, 0);
        let meta = ErrorMeta { epsilon: 0.125, t: 3.0, datum: "e2".into(), datum_norm: 2.0 };
        let rows = error_report(&u, &zero, &[NormTag::L2, NormTag::H1, NormTag::Hm1], &meta).unwrap();
        let w = 1.0 + (4.0 * std::f64::consts::PI).powi(2);
        for (row, s) in rows.iter().zip([0.0, 1.0, -1.0]) {
            let expect = 3.0 * w.powf(s / 2.0);
            assert!((row.raw_error - expect).abs() < 1e-12 * expect);
            assert!((row.normalized_error - expect / 2.0).abs() < 1e-12 * expect);
            assert_eq!(row.bound_shape, 0.5);
        }
        let bad = ErrorMeta { datum_norm: 0.0, ..meta };
        assert!(error_report(&u, &zero, &[NormTag::L2], &bad).is_err());
    }
}
