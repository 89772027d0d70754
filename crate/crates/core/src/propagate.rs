//! Exact-in-time solution operators: the wave equation with exponential-sum
//! sources, its block group, the Schrödinger group, and the wave energy.

use crate::error::{Error, Result};
use crate::fields::TorusFunction;
use crate::linalg::{phi1, CVec, C64};
use crate::operator::{DiscreteOperator, SpectralFn};

#[derive(Clone, Debug, PartialEq)]
pub struct WaveState {
    pub u: TorusFunction,
    /// ∂ₜu
    pub du: TorusFunction,
}

/// F(x, t) = Σ F_k(x) e^{iω_k t}.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SourceTerm {
    pub terms: Vec<(TorusFunction, f64)>,
}

impl SourceTerm {
    pub fn none() -> Self {
        SourceTerm::default()
    }

    pub fn single(f: TorusFunction, omega: f64) -> Self {
        SourceTerm { terms: vec![(f, omega)] }
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// F(·, t), on the cube of the widest term.
    pub fn eval(&self, t: f64) -> Option<TorusFunction> {
        let cutoff = self.terms.iter().map(|(f, _)| f.cutoff).max()?;
        let mut acc: Option<TorusFunction> = None;
        for (f, w) in &self.terms {
            let term = f.resized(cutoff).scaled(C64::new(0.0, w * t).exp());
            acc = Some(match acc {
                None => term,
                Some(a) => a.add(&term).expect("same cube"),
            });
        }
        acc
    }
}

/// ∫₀ᵗ e^{iδs} ds
fn exp_integral(delta: f64, t: f64) -> C64 {
    phi1(C64::new(0.0, delta * t)) * t
}

/// Duhamel weights for eigenvalue w² and source frequency ω:
/// (∫₀ᵗ sin((t−s)w)/w e^{iωs} ds, ∫₀ᵗ cos((t−s)w) e^{iωs} ds).
/// Resonance |ω ∓ w| → 0 is absorbed by the series branch of φ₁.
pub fn duhamel_weights(w: f64, omega: f64, t: f64) -> (C64, C64) {
    let p = C64::new(0.0, w * t).exp() * exp_integral(omega - w, t);
    let m = C64::new(0.0, -w * t).exp() * exp_integral(omega + w, t);
    ((p - m) / C64::new(0.0, 2.0 * w), (p + m) * 0.5)
}

fn check(op: &DiscreteOperator) -> Result<()> {
    if !(op.beta > 0.0) {
        return Err(Error::NotPositive { beta: op.beta });
    }
    Ok(())
}

fn union_fibers(op: &DiscreteOperator, fs: &[&TorusFunction]) -> Vec<usize> {
    let mut all: Vec<usize> = fs.iter().flat_map(|f| op.layout.touched(f)).collect();
    all.sort_unstable();
    all.dedup();
    all
}

/// u(t), ∂ₜu(t) for ü + Bu = F, u(0) = φ, ∂ₜu(0) = ψ. Coefficients outside the
/// retained modes are dropped.
pub fn solve_hyperbolic(op: &DiscreteOperator, phi: &TorusFunction, psi: &TorusFunction, source: &SourceTerm, t: f64) -> Result<WaveState> {
    check(op)?;
    let n = op.layout.n;
    for f in [phi, psi].into_iter().chain(source.terms.iter().map(|(f, _)| f)) {
        if f.n != n {
            return Err(Error::ShapeMismatch(format!("expected {n} components, got {}", f.n)));
        }
    }
    let mut inputs = vec![phi, psi];
    inputs.extend(source.terms.iter().map(|(f, _)| f));
    let mut u = op.layout.empty_function(n);
    let mut du = op.layout.empty_function(n);
    for fi in union_fibers(op, &inputs) {
        let fd = op.fiber(fi);
        let e = &fd.eigen;
        let to_eig = |x: &TorusFunction| e.vectors.ad_mul(&op.layout.gather(x, fi));
        let (p, q) = (to_eig(phi), to_eig(psi));
        let srcs: Vec<(CVec, f64)> = source.terms.iter().map(|(f, w)| (to_eig(f), *w)).collect();
        let dim = e.values.len();
        let (mut yu, mut yd) = (CVec::zeros(dim), CVec::zeros(dim));
        for i in 0..dim {
            let l = e.values[i];
            let w = l.sqrt();
            let (c, s) = ((w * t).cos(), (w * t).sin());
            let sinc = crate::operator::sinc_sqrt(t, l);
            yu[i] = p[i] * c + q[i] * sinc;
            yd[i] = -p[i] * (w * s) + q[i] * c;
            for (fv, om) in &srcs {
                let (a, b) = duhamel_weights(w, *om, t);
                yu[i] += fv[i] * a;
                yd[i] += fv[i] * b;
            }
        }
        op.layout.scatter(&mut u, fi, &(&e.vectors * yu));
        op.layout.scatter(&mut du, fi, &(&e.vectors * yd));
    }
    Ok(WaveState { u, du })
}

/// The wave group applied to a state: [[cos, sinc], [−√B sin, cos]](t√B).
pub fn block_group(op: &DiscreteOperator, state: &WaveState, t: f64) -> Result<WaveState> {
    solve_hyperbolic(op, &state.u, &state.du, &SourceTerm::none(), t)
}

pub fn schrodinger_evolve(op: &DiscreteOperator, phi: &TorusFunction, t: f64) -> Result<TorusFunction> {
    op.func_calc(SpectralFn::ExpI(t), phi)
}

/// ‖∂ₜu‖² + (Bu, u)
pub fn energy(op: &DiscreteOperator, state: &WaveState) -> Result<f64> {
    Ok(state.du.l2_norm().powi(2) + op.quadratic_form(&state.u)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::SymbolSpec;
    use crate::fields::PeriodicField;
    use crate::lattice::Lattice;
    use crate::linalg::CMat;
    use crate::operator::{assemble_beps, FloquetLayout};
    use crate::problem::{PrincipalRule, Problem};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    fn scalar(x: f64) -> CMat {
        CMat::from_element(1, 1, c(x))
    }

    /// g = 1/(4π²) makes the mode k an eigenvector with eigenvalue k² + λ.
    fn unit_op(lambda: f64) -> DiscreteOperator {
        let lat = Lattice::cubic(1, 1.0);
        let g = PeriodicField::constant(lat, scalar(1.0 / (4.0 * std::f64::consts::PI.powi(2))));
        let p = Problem::new("u", lat, SymbolSpec::scalar_1d(), g, PrincipalRule::Laurent, 3);
        assemble_beps(&p, lambda, FloquetLayout::new(lat, 1, 1, 3)).unwrap()
    }

    fn smooth_op(n: usize) -> DiscreteOperator {
        let lat = Lattice::cubic(1, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let g = PeriodicField::random_hermitian_positive(lat, 1, 1, &mut rng).scaled(c(0.05));
        let a = vec![PeriodicField::random(lat, 1, 1, 1, 0.05, &mut rng)];
        let p = Problem::new("s", lat, SymbolSpec::scalar_1d(), g, PrincipalRule::Laurent, 2).with_a(a);
        assemble_beps(&p, 1.0, FloquetLayout::new(lat, 1, n, 2)).unwrap()
    }

    fn mode(k: i64) -> TorusFunction {
        TorusFunction::single_mode(Lattice::cubic(1, 1.0), 1, [k, 0], &[c(1.0)])
    }

    fn random_fn(op: &DiscreteOperator, rng: &mut impl Rng) -> TorusFunction {
        op.layout.project(&TorusFunction::random_band_limited(op.layout.lattice, 1, op.layout.kbig(), rng))
    }

    fn close(a: &TorusFunction, b: &TorusFunction, tol: f64) -> bool {
        a.resized(a.cutoff.max(b.cutoff)).sub(&b.resized(a.cutoff.max(b.cutoff))).unwrap().l2_norm() <= tol * b.l2_norm().max(1e-300)
    }

    #[test]
    fn scalar_modes() {
        // mode 1 with λ = 3: eigenvalue 4
        let op = unit_op(3.0);
        let e = mode(1);
        let zero = e.scaled(c(0.0));
        let l0 = 4.0;
        let t = 0.9;
        let s = solve_hyperbolic(&op, &e, &zero, &SourceTerm::none(), t).unwrap();
        assert!(close(&s.u, &e.scaled(c((2.0 * t).cos())), 1e-12));
        assert!(close(&s.du, &e.scaled(c(-2.0 * (2.0 * t).sin())), 1e-12));
        assert!((energy(&op, &WaveState { u: e.clone(), du: zero.clone() }).unwrap() - l0).abs() < 1e-12);
        assert!((energy(&op, &s).unwrap() - l0).abs() < 1e-12);
        let z = schrodinger_evolve(&op, &e, t).unwrap();
        assert!(close(&z, &e.scaled(C64::new(0.0, -t * l0).exp()), 1e-12));
        // constant-in-time forcing: u = (1 − cos(t√λ₀))/λ₀ f
        let f = e.scaled(c(0.7));
        let s = solve_hyperbolic(&op, &zero, &zero, &SourceTerm::single(f.clone(), 0.0), t).unwrap();
        assert!(close(&s.u, &f.scaled(c((1.0 - (2.0 * t).cos()) / l0)), 1e-12));
    }

    #[test]
    fn duhamel_weights_match_quadrature() {
        let (x, wts) = crate::quadrature::gauss_legendre_on(60, 0.0, 1.3);
        for (w, om) in [(2.0, 2.0), (2.0, 2.0 + 1e-9), (2.0, -2.0), (0.7, 5.0), (3.0, 0.0)] {
            let t = 1.3;
            let (a, b) = duhamel_weights(w, om, t);
            let mut qa = c(0.0);
            let mut qb = c(0.0);
            for (s, ws) in x.iter().zip(&wts) {
                let ph = C64::new(0.0, om * s).exp() * *ws;
                qa += ph * (((t - s) * w).sin() / w);
                qb += ph * ((t - s) * w).cos();
            }
            assert!((a - qa).norm() < 1e-12 && (b - qb).norm() < 1e-12, "w={w} om={om}");
        }
    }

    #[test]
    fn initial_time_is_identity() {
        let op = smooth_op(2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (p, q) = (random_fn(&op, &mut rng), random_fn(&op, &mut rng));
        let s = solve_hyperbolic(&op, &p, &q, &SourceTerm::single(p.clone(), 3.0), 0.0).unwrap();
        assert!(close(&s.u, &p, 1e-12) && close(&s.du, &q, 1e-12));
        assert!(close(&schrodinger_evolve(&op, &p, 0.0).unwrap(), &p, 1e-12));
    }

    #[test]
    fn group_law_and_conservation() {
        let op = smooth_op(3);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let st = WaveState { u: random_fn(&op, &mut rng), du: random_fn(&op, &mut rng) };
            let (t, s) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let lhs = block_group(&op, &st, t + s).unwrap();
            let rhs = block_group(&op, &block_group(&op, &st, s).unwrap(), t).unwrap();
            assert!(close(&lhs.u, &rhs.u, 1e-9) && close(&lhs.du, &rhs.du, 1e-9));
            let z = schrodinger_evolve(&op, &st.u, t).unwrap();
            assert!((z.l2_norm() - st.u.l2_norm()).abs() < 1e-10 * st.u.l2_norm());
        }
        let st = WaveState { u: random_fn(&op, &mut rng), du: random_fn(&op, &mut rng) };
        let e0 = energy(&op, &st).unwrap();
        for t in [1.0, 5.0, 25.0] {
            let e = energy(&op, &block_group(&op, &st, t).unwrap()).unwrap();
            assert!((e - e0).abs() <= 1e-10 * e0);
        }
        let zero = st.u.scaled(c(0.0));
        let e = energy(&op, &WaveState { u: zero, du: st.du.clone() }).unwrap();
        assert!((e - st.du.l2_norm().powi(2)).abs() < 1e-12 * e);
    }

    #[test]
    fn matches_leapfrog_reference() {
        let op = smooth_op(1);
        let (modes, b) = op.dense_matrix();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (phi, psi, f1, f2) = (random_fn(&op, &mut rng), random_fn(&op, &mut rng), random_fn(&op, &mut rng), random_fn(&op, &mut rng));
        let src = SourceTerm { terms: vec![(f1, 0.0), (f2, 2.5)] };
        let vec_of = |u: &TorusFunction| CVec::from_iterator(modes.len(), modes.iter().map(|k| u.get(*k).unwrap()[0]));
        let force = |t: f64| vec_of(&src.eval(t).unwrap());
        let dt = 1e-3;
        let steps = 1000;
        let u0 = vec_of(&phi);
        let mut prev = u0.clone();
        let mut cur = &u0 + vec_of(&psi) * c(dt) + (force(0.0) - &b * &u0) * c(0.5 * dt * dt);
        for i in 1..steps {
            let next = &cur * c(2.0) - &prev + (force(i as f64 * dt) - &b * &cur) * c(dt * dt);
            prev = cur;
            cur = next;
        }
        let exact = solve_hyperbolic(&op, &phi, &psi, &src, 1.0).unwrap();
        let err = (vec_of(&exact.u) - &cur).norm();
        assert!(err < 1e-4, "leapfrog discrepancy {err}");
    }

    #[test]
    fn velocity_is_time_derivative() {
        let op = smooth_op(2);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (p, q, f) = (random_fn(&op, &mut rng), random_fn(&op, &mut rng), random_fn(&op, &mut rng));
        let src = SourceTerm::single(f, 1.7);
        let t = 0.8;
        let du = solve_hyperbolic(&op, &p, &q, &src, t).unwrap().du;
        let fd = |h: f64| {
            let a = solve_hyperbolic(&op, &p, &q, &src, t + h).unwrap().u;
            let b = solve_hyperbolic(&op, &p, &q, &src, t - h).unwrap().u;
            a.sub(&b).unwrap().scaled(c(0.5 / h)).sub(&du).unwrap().l2_norm()
        };
        let (e1, e2) = (fd(1e-3), fd(0.5e-3));
        assert!(e1 / e2 > 3.5 && e1 / e2 < 4.5, "{e1} {e2}");
    }
}
