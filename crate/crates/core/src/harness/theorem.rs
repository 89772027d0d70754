//! Theorem left-hand sides as per-fiber matrices, weighted into Sobolev norms.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::TorusFunction;
use crate::homog::CorrectorKit;
use crate::linalg::{self, CMat, CVec, C64};
use crate::operator::{DiscreteOperator, SpectralFn};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TheoremTag {
    /// cos(t√B_ε) − cos(t√B⁰), H^r → L², r = 2 by default
    CosL2,
    /// B_ε^{-1/2}sin(t√B_ε) − (B⁰)^{-1/2}sin(t√B⁰), H^{r−1} → L²
    SinL2,
    /// B_ε^{1/2}sin(t√B_ε) − (B⁰)^{1/2}sin(t√B⁰), H^r → H⁻¹
    DsinHm1,
    /// cos(t√B_ε) − cos(t√B⁰), H^{r−1} → H⁻¹
    CosHm1,
    /// cos(t√B_ε)B_ε⁻¹ − cos(t√B⁰)(B⁰)⁻¹ − εK₁, H¹ → H¹
    CosH1Corr,
    /// sine difference minus εK₂, H² → H¹
    SinH1Corr,
    /// sine difference without corrector, H² → H¹
    SinH1Nocorr,
    /// B_ε⁻¹ − (B⁰)⁻¹, L² → L²
    Resolvent,
    /// B_ε⁻¹ − (B⁰)⁻¹ − εK(ε), L² → H¹
    ResolventCorr,
    /// e^{−itB_ε} − e^{−itB⁰}, H^r → L², r = 3 by default
    Schrodinger,
    /// e^{−itB_ε}B_ε⁻¹ − e^{−itB⁰}(B⁰)⁻¹ − εK₃, H^r → H¹, r = 2 by default
    SchrodingerCorr,
    /// p_ε − flux approximation, (φ, ψ) ∈ H^s × H^{1+s} → L², s = 1 by default
    Flux,
    /// ũ_ε − ṽ_ε, H¹ × H² → H¹
    FirstOrder,
    /// ũ_ε − ũ₀ with no corrector, H¹ × H² → H¹
    ZeroCorr,
    /// B_ε^{-1/2} − (B⁰)^{-1/2}, H² → L²
    SqrtInv,
}

impl TheoremTag {
    pub const ALL: [TheoremTag; 15] = [
        TheoremTag::CosL2,
        TheoremTag::SinL2,
        TheoremTag::DsinHm1,
        TheoremTag::CosHm1,
        TheoremTag::CosH1Corr,
        TheoremTag::SinH1Corr,
        TheoremTag::SinH1Nocorr,
        TheoremTag::Resolvent,
        TheoremTag::ResolventCorr,
        TheoremTag::Schrodinger,
        TheoremTag::SchrodingerCorr,
        TheoremTag::Flux,
        TheoremTag::FirstOrder,
        TheoremTag::ZeroCorr,
        TheoremTag::SqrtInv,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TheoremTag::CosL2 => "cos_l2",
            TheoremTag::SinL2 => "sin_l2",
            TheoremTag::DsinHm1 => "dsin_hm1",
            TheoremTag::CosHm1 => "cos_hm1",
            TheoremTag::CosH1Corr => "cos_h1_corr",
            TheoremTag::SinH1Corr => "sin_h1_corr",
            TheoremTag::SinH1Nocorr => "sin_h1_nocorr",
            TheoremTag::Resolvent => "resolvent",
            TheoremTag::ResolventCorr => "resolvent_corr",
            TheoremTag::Schrodinger => "schrodinger",
            TheoremTag::SchrodingerCorr => "schrodinger_corr",
            TheoremTag::Flux => "flux",
            TheoremTag::FirstOrder => "first_order",
            TheoremTag::ZeroCorr => "zero_corr",
            TheoremTag::SqrtInv => "sqrt_inv",
        }
    }

    fn default_r(self) -> Option<f64> {
        match self {
            TheoremTag::CosL2 | TheoremTag::SinL2 | TheoremTag::DsinHm1 | TheoremTag::CosHm1 | TheoremTag::SchrodingerCorr => Some(2.0),
            TheoremTag::Schrodinger => Some(3.0),
            TheoremTag::Flux => Some(1.0),
            _ => None,
        }
    }

    pub fn time_dependent(self) -> bool {
        !matches!(self, TheoremTag::Resolvent | TheoremTag::ResolventCorr | TheoremTag::SqrtInv)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoremSpec {
    pub tag: TheoremTag,
    /// Smoothness parameter of the interpolated estimates; the tag's default when absent.
    pub r: Option<f64>,
}

impl TheoremSpec {
    pub fn new(tag: TheoremTag) -> Self {
        TheoremSpec { tag, r: None }
    }

    pub fn with_r(tag: TheoremTag, r: f64) -> Self {
        TheoremSpec { tag, r: Some(r) }
    }

    pub fn validate(&self) -> Result<()> {
        let Some(r) = self.r else { return Ok(()) };
        let range = match self.tag {
            TheoremTag::CosL2 | TheoremTag::SinL2 | TheoremTag::DsinHm1 | TheoremTag::CosHm1 | TheoremTag::SchrodingerCorr => 0.0..=2.0,
            TheoremTag::Schrodinger => 0.0..=3.0,
            TheoremTag::Flux => 0.0..=1.0,
            _ => return Err(Error::Config(format!("theorem.r is not a parameter of `{}`", self.tag.as_str()))),
        };
        if !range.contains(&r) {
            return Err(Error::Config(format!("theorem.r = {r} outside {range:?} for `{}`", self.tag.as_str())));
        }
        Ok(())
    }

    pub fn r(&self) -> Option<f64> {
        self.r.or(self.tag.default_r())
    }

    /// Tag, with the parameter appended when it differs from the default.
    pub fn label(&self) -> String {
        match (self.r, self.tag.default_r()) {
            (Some(r), Some(d)) if r != d => format!("{}_r{}", self.tag.as_str(), fmt_num(r)),
            _ => self.tag.as_str().to_string(),
        }
    }

    /// Source Sobolev indices, one per datum (φ, or φ and ψ).
    pub fn input_norms(&self) -> Vec<f64> {
        let r = self.r().unwrap_or(0.0);
        match self.tag {
            TheoremTag::CosL2 | TheoremTag::DsinHm1 | TheoremTag::Schrodinger | TheoremTag::SchrodingerCorr => vec![r],
            TheoremTag::SinL2 | TheoremTag::CosHm1 => vec![r - 1.0],
            TheoremTag::CosH1Corr => vec![1.0],
            TheoremTag::SinH1Corr | TheoremTag::SinH1Nocorr | TheoremTag::SqrtInv => vec![2.0],
            TheoremTag::Resolvent | TheoremTag::ResolventCorr => vec![0.0],
            TheoremTag::Flux => vec![r, 1.0 + r],
            TheoremTag::FirstOrder | TheoremTag::ZeroCorr => vec![1.0, 2.0],
        }
    }

    pub fn output_norm(&self) -> f64 {
        match self.tag {
            TheoremTag::CosL2 | TheoremTag::SinL2 | TheoremTag::Resolvent | TheoremTag::Schrodinger | TheoremTag::Flux | TheoremTag::SqrtInv => 0.0,
            TheoremTag::DsinHm1 | TheoremTag::CosHm1 => -1.0,
            _ => 1.0,
        }
    }

    /// e.g. "H2->L2", "H1xH2->H1"
    pub fn norm_label(&self) -> String {
        let ins: Vec<String> = self.input_norms().into_iter().map(space).collect();
        format!("{}->{}", ins.join("x"), space(self.output_norm()))
    }

    /// Exponent of ε in the estimate.
    pub fn expected_rate(&self) -> f64 {
        let r = self.r().unwrap_or(0.0);
        match self.tag {
            TheoremTag::CosL2 | TheoremTag::SinL2 | TheoremTag::DsinHm1 | TheoremTag::CosHm1 | TheoremTag::SchrodingerCorr => r / 2.0,
            TheoremTag::Schrodinger => r / 3.0,
            TheoremTag::Flux => r,
            _ => 1.0,
        }
    }

    fn output_components(&self, ctx: &FiberContext) -> usize {
        match self.tag {
            TheoremTag::Flux => ctx.kit.symbol.m,
            _ => ctx.kit.symbol.n,
        }
    }
}

fn fmt_num(x: f64) -> String {
    if x.fract() == 0.0 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

fn space(s: f64) -> String {
    match s {
        0.0 => "L2".into(),
        s if s < 0.0 => format!("Hm{}", fmt_num(-s)),
        s => format!("H{}", fmt_num(s)),
    }
}

/// Everything the fiber matrices are built from, at one ε.
pub struct FiberContext<'a> {
    pub op_eps: &'a DiscreteOperator,
    pub op0: &'a DiscreteOperator,
    pub kit: &'a CorrectorKit,
}

impl FiberContext<'_> {
    fn fun(&self, op: &DiscreteOperator, f: usize, g: impl Fn(f64) -> C64) -> CMat {
        op.fiber(f).eigen.function(g)
    }

    fn pair(&self, f: usize, kind: impl Fn(f64) -> C64 + Copy) -> (CMat, CMat) {
        (self.fun(self.op_eps, f, kind), self.fun(self.op0, f, kind))
    }

    /// The theorem's operator on fiber f (unweighted).
    pub fn fiber_operator(&self, spec: &TheoremSpec, f: usize, t: f64) -> CMat {
        let eps = C64::new(self.kit.eps(), 0.0);
        let corr = || self.kit.corrector_fiber(f) * eps;
        let diff = |kind: SpectralFn| {
            let (a, b) = self.pair(f, |l| kind.eval(l));
            a - b
        };
        let cos_inv = |l: f64| SpectralFn::CosSqrt(t).eval(l) / l;
        let sinc = |l: f64| SpectralFn::SincSqrt(t).eval(l);
        let exp_inv = |l: f64| SpectralFn::ExpI(t).eval(l) / l;
        let inv = |l: f64| C64::new(1.0 / l, 0.0);
        let corrected = |g: &dyn Fn(f64) -> C64| {
            let (a, b) = (self.fun(self.op_eps, f, g), self.fun(self.op0, f, g));
            let kb = corr() * &b;
            a - b - kb
        };
        match spec.tag {
            TheoremTag::CosL2 | TheoremTag::CosHm1 => diff(SpectralFn::CosSqrt(t)),
            TheoremTag::SinL2 | TheoremTag::SinH1Nocorr => diff(SpectralFn::SincSqrt(t)),
            TheoremTag::DsinHm1 => diff(SpectralFn::SqrtSin(t)),
            TheoremTag::Resolvent => diff(SpectralFn::Inv),
            TheoremTag::Schrodinger => diff(SpectralFn::ExpI(t)),
            TheoremTag::SqrtInv => diff(SpectralFn::InvSqrt),
            TheoremTag::CosH1Corr => corrected(&cos_inv),
            TheoremTag::SinH1Corr => corrected(&sinc),
            TheoremTag::ResolventCorr => corrected(&inv),
            TheoremTag::SchrodingerCorr => corrected(&exp_inv),
            TheoremTag::Flux => {
                let g = self.op_eps.principal_block().expect("B_eps carries its principal coefficient");
                let p_eps = g * self.kit.layout.symbol_blocks(&self.kit.symbol, f);
                let p0 = self.kit.flux_fiber(f);
                let (ac, bc) = self.pair(f, cos_inv);
                let (as_, bs) = self.pair(f, sinc);
                hstack(&(&p_eps * ac - &p0 * bc), &(&p_eps * as_ - &p0 * bs))
            }
            TheoremTag::FirstOrder | TheoremTag::ZeroCorr => {
                let (ac, bc) = self.pair(f, cos_inv);
                let (as_, bs) = self.pair(f, sinc);
                let (bc, bs) = if spec.tag == TheoremTag::FirstOrder {
                    let k = corr();
                    (&bc + &k * &bc, &bs + &k * &bs)
                } else {
                    (bc, bs)
                };
                hstack(&(ac - bc), &(as_ - bs))
            }
        }
    }

    fn weights(&self, f: usize, s: f64, comps: usize) -> Vec<f64> {
        self.kit.layout.sobolev_weights(f, s, comps)
    }

    fn input_weights(&self, spec: &TheoremSpec, f: usize) -> Vec<f64> {
        let n = self.kit.symbol.n;
        spec.input_norms().into_iter().flat_map(|s| self.weights(f, s, n)).collect()
    }

    /// W_out T W_in⁻¹ on fiber f.
    pub fn weighted_operator(&self, spec: &TheoremSpec, f: usize, t: f64) -> CMat {
        let mut m = self.fiber_operator(spec, f, t);
        let win = self.input_weights(spec, f);
        let wout = self.weights(f, spec.output_norm(), spec.output_components(self));
        for (j, w) in win.iter().enumerate() {
            m.column_mut(j).scale_mut(1.0 / w);
        }
        for (i, w) in wout.iter().enumerate() {
            m.row_mut(i).scale_mut(*w);
        }
        m
    }

    /// Operator norm over all fibers, the maximizing fiber and its unit-norm
    /// worst datum (in unweighted coordinates).
    pub fn operator_norm(&self, spec: &TheoremSpec, t: f64) -> (f64, usize, CVec) {
        let per: Vec<(f64, CVec)> = (0..self.kit.layout.num_fibers())
            .into_par_iter()
            .map(|f| linalg::top_right_singular(&self.weighted_operator(spec, f, t)))
            .collect();
        let (best, _) = per.iter().enumerate().fold((0, f64::NEG_INFINITY), |acc, (i, (s, _))| if *s > acc.1 { (i, *s) } else { acc });
        let (sigma, v) = per[best].clone();
        let win = self.input_weights(spec, best);
        let x = CVec::from_iterator(v.len(), v.iter().zip(&win).map(|(z, w)| z / *w));
        (sigma, best, x)
    }

    /// (error in the output norm, datum norm in the source norm) of the theorem's
    /// operator applied to `data` (one function per input slot).
    pub fn apply_to(&self, spec: &TheoremSpec, t: f64, data: &[TorusFunction]) -> Result<(f64, f64)> {
        let ins = spec.input_norms();
        if data.len() != ins.len() {
            return Err(Error::ShapeMismatch(format!("{} data for {} input slots", data.len(), ins.len())));
        }
        let lay = &self.kit.layout;
        let mut fibers: Vec<usize> = data.iter().flat_map(|d| lay.touched(d)).collect();
        fibers.sort_unstable();
        fibers.dedup();
        let parts: Vec<(f64, f64)> = fibers
            .par_iter()
            .map(|&f| {
                let x = data.iter().fold(CVec::zeros(0), |acc, d| vstack(&acc, &lay.gather(d, f)));
                let y = self.fiber_operator(spec, f, t) * &x;
                let win = self.input_weights(spec, f);
                let wout = self.weights(f, spec.output_norm(), spec.output_components(self));
                let num: f64 = y.iter().zip(&wout).map(|(z, w)| (z.norm() * w).powi(2)).sum();
                let den: f64 = x.iter().zip(&win).map(|(z, w)| (z.norm() * w).powi(2)).sum();
                (num, den)
            })
            .collect();
        let (num, den) = parts.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
        Ok((num.sqrt(), den.sqrt()))
    }
}

fn hstack(a: &CMat, b: &CMat) -> CMat {
    let mut m = CMat::zeros(a.nrows(), a.ncols() + b.ncols());
    m.view_mut((0, 0), a.shape()).copy_from(a);
    m.view_mut((0, a.ncols()), b.shape()).copy_from(b);
    m
}

fn vstack(a: &CVec, b: &CVec) -> CVec {
    CVec::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).copied())
}
