//! Matrix-level check of the integral identities that compare two wave groups
//! through their resolvent difference.
//!
//! B_ε and B⁰ are replaced by random Hermitian positive n×n matrices, the
//! generators are 𝔄 = [[0, I], [−B, 0]] acting on (u, u') pairs and the
//! corrector 𝔊 = [[G, 0], [0, 0]] has only a top-left block. Every group and
//! inverse is evaluated in closed form from the eigendecomposition of B, so the
//! only approximation left is the Gauss–Legendre rule for the time integrals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::linalg::{identity, CMat, HermEigen, C64};
use crate::quadrature::gauss_legendre_on;

#[derive(Clone, Debug)]
pub struct OracleSetup {
    pub b_eps: CMat,
    pub b0: CMat,
    pub g: CMat,
    pub eps: f64,
}

impl OracleSetup {
    /// Random draws, reproducible from the seed.
    pub fn random(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b_eps = random_hpd(n, &mut rng);
        let b0 = random_hpd(n, &mut rng);
        let g = CMat::from_fn(n, n, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        OracleSetup { b_eps, b0, g, eps: 0.25 }
    }

    pub fn without_corrector(mut self) -> Self {
        self.g.fill(C64::new(0.0, 0.0));
        self
    }

    fn n(&self) -> usize {
        self.b0.nrows()
    }
}

fn random_hpd(n: usize, rng: &mut impl Rng) -> CMat {
    let x = CMat::from_fn(n, n, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    x.adjoint() * &x + identity(n) * C64::new(0.5, 0.0)
}

/// Closed forms for one generator 𝔄 = [[0, I], [−B, 0]].
struct Generator {
    eig: HermEigen,
    n: usize,
}

impl Generator {
    fn new(b: &CMat) -> Self {
        Generator { eig: HermEigen::new(b), n: b.nrows() }
    }

    fn blocks(&self, tl: CMat, tr: CMat, bl: CMat, br: CMat) -> CMat {
        let n = self.n;
        let mut m = CMat::zeros(2 * n, 2 * n);
        m.view_mut((0, 0), (n, n)).copy_from(&tl);
        m.view_mut((0, n), (n, n)).copy_from(&tr);
        m.view_mut((n, 0), (n, n)).copy_from(&bl);
        m.view_mut((n, n), (n, n)).copy_from(&br);
        m
    }

    fn f(&self, g: impl Fn(f64) -> f64) -> CMat {
        self.eig.function(|l| C64::new(g(l), 0.0))
    }

    /// e^{s𝔄}
    fn exp(&self, s: f64) -> CMat {
        let c = self.f(|l| (s * l.sqrt()).cos());
        let sn = self.f(|l| (s * l.sqrt()).sin() / l.sqrt());
        let ds = self.f(|l| -(s * l.sqrt()).sin() * l.sqrt());
        self.blocks(c.clone(), sn, ds, c)
    }

    /// 𝔄⁻¹ = [[0, −B⁻¹], [I, 0]]
    fn inv(&self) -> CMat {
        let n = self.n;
        self.blocks(CMat::zeros(n, n), -self.f(|l| 1.0 / l), identity(n), CMat::zeros(n, n))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IdentityResidual {
    pub quad_points: usize,
    pub four_term: f64,
    pub seven_term: f64,
}

struct Parts {
    ae: Generator,
    a0: Generator,
    ae_inv: CMat,
    a0_inv: CMat,
    corr: CMat,
    eye: CMat,
}

impl Parts {
    fn new(s: &OracleSetup) -> Self {
        let n = s.n();
        let ae = Generator::new(&s.b_eps);
        let a0 = Generator::new(&s.b0);
        let mut corr = CMat::zeros(2 * n, 2 * n);
        corr.view_mut((0, 0), (n, n)).copy_from(&(&s.g * C64::new(s.eps, 0.0)));
        Parts { ae_inv: ae.inv(), a0_inv: a0.inv(), ae, a0, corr, eye: identity(2 * n) }
    }

    /// ∫₀ᵗ e^{−s𝔄_ε} X e^{(s−t)𝔄₀} ds
    fn integral(&self, x: &CMat, t: f64, points: usize) -> CMat {
        let (nodes, weights) = gauss_legendre_on(points, 0.0, t);
        nodes.iter().zip(&weights).fold(CMat::zeros(x.nrows(), x.ncols()), |acc, (&s, &w)| {
            acc + self.ae.exp(-s) * x * self.a0.exp(s - t) * C64::new(w, 0.0)
        })
    }
}

fn rel(lhs: &CMat, terms: &[CMat]) -> f64 {
    let rhs = terms.iter().fold(CMat::zeros(lhs.nrows(), lhs.ncols()), |a, b| a + b);
    let scale = terms.iter().map(|m| m.norm()).sum::<f64>().max(lhs.norm());
    if scale == 0.0 {
        return 0.0;
    }
    (lhs - rhs).norm() / scale
}

/// Right-hand sides of both identities, for comparing them against each other.
pub fn right_hand_sides(s: &OracleSetup, t: f64, points: usize) -> (CMat, CMat) {
    let (four, seven) = terms(s, t, points);
    let sum = |v: &[CMat]| v.iter().skip(1).fold(CMat::zeros(v[0].nrows(), v[0].ncols()), |a, b| a + b);
    (sum(&four), sum(&seven))
}

/// [lhs, terms...] for the four-term and the seven-term identities.
fn terms(s: &OracleSetup, t: f64, points: usize) -> (Vec<CMat>, Vec<CMat>) {
    let p = Parts::new(s);
    let ee = p.ae.exp(-t);
    let e0 = p.a0.exp(-t);
    let a0_inv2 = &p.a0_inv * &p.a0_inv;
    let rdiff = &p.ae_inv - &p.a0_inv;
    let ig = &p.eye + &p.corr;
    let gc = &p.corr * &p.a0_inv;
    let corrected = &rdiff - &gc;

    let four = vec![
        (&ee - &e0) * &a0_inv2,
        -(&ee * &rdiff * &p.a0_inv),
        &rdiff * &p.a0_inv * &e0,
        p.integral(&corrected, t, points),
        p.integral(&gc, t, points),
    ];

    let x = &ig * &p.a0_inv;
    let comm = &p.ae_inv * &x - &x * &p.ae_inv;
    let seven = vec![
        &ee * &a0_inv2 - &ig * &e0 * &a0_inv2,
        -(&ee * &p.a0_inv * &rdiff),
        -(&ee * &gc * &p.ae_inv),
        &ig * &p.a0_inv * &rdiff * &e0,
        -(&ee * &comm),
        &comm * &e0,
        p.integral(&corrected, t, points),
        p.integral(&(&p.ae_inv * &p.corr), t, points),
    ];
    (four, seven)
}

/// Relative residuals ‖LHS − ΣTerms‖ / max(‖LHS‖, Σ‖Term‖) of both identities.
pub fn identity_residuals(s: &OracleSetup, t: f64, points: usize) -> IdentityResidual {
    let (four, seven) = terms(s, t, points);
    IdentityResidual { quad_points: points, four_term: rel(&four[0], &four[1..]), seven_term: rel(&seven[0], &seven[1..]) }
}

/// Residuals below this are at the roundoff floor of the closed forms.
pub const ROUNDOFF_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleReport {
    pub n: usize,
    pub seed: u64,
    pub t: f64,
    pub eps: f64,
    pub quad_points: usize,
    pub four_term: f64,
    pub seven_term: f64,
    /// Same quantities at 2·quad_points.
    pub four_term_doubled: f64,
    pub seven_term_doubled: f64,
    /// Residuals on a coarse ladder of point counts, showing the convergence order.
    pub ladder: Vec<IdentityResidual>,
    /// With 𝔊 = 0 both right-hand sides must coincide.
    pub g_zero_difference: f64,
    /// Doubling cut the residual by ≥ 4, or both residuals already sit at the roundoff floor.
    pub quadrature_limited: bool,
}

impl OracleReport {
    pub fn max_residual(&self) -> f64 {
        self.four_term.max(self.seven_term)
    }
}

pub fn trotter_kato_oracle(n: usize, seed: u64, t: f64, quad_points: usize) -> OracleReport {
    let s = OracleSetup::random(n, seed);
    let base = identity_residuals(&s, t, quad_points);
    let doubled = identity_residuals(&s, t, 2 * quad_points);
    let ladder = [2, 4, 8, 16].iter().map(|&q| identity_residuals(&s, t, q)).collect();
    let (r4, r7) = right_hand_sides(&s.clone().without_corrector(), t, quad_points);
    let g_zero_difference = (&r4 - &r7).norm() / r4.norm().max(f64::MIN_POSITIVE);
    let limited = |a: f64, b: f64| b * 4.0 <= a || (a <= ROUNDOFF_FLOOR && b <= ROUNDOFF_FLOOR);
    OracleReport {
        n,
        seed,
        t,
        eps: s.eps,
        quad_points,
        four_term: base.four_term,
        seven_term: base.seven_term,
        four_term_doubled: doubled.four_term,
        seven_term_doubled: doubled.seven_term,
        ladder,
        g_zero_difference,
        quadrature_limited: limited(base.four_term, doubled.four_term) && limited(base.seven_term, doubled.seven_term),
    }
}
