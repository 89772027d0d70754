//! Coefficient sets and their ingestion from TOML documents.
//!
//! ```toml
//! [lattice]
//! basis = [[1.0]]                  # basis vectors a_1..a_d
//!
//! [symbol]
//! b = [[[[1.0, 0.0]]]]             # b_1..b_d, each an m×n matrix of (re, im) pairs
//!
//! [cell]
//! cutoff = 16
//! principal_rule = "inverse"       # or "laurent" (default)
//!
//! [coefficients.g]
//! kind = "piecewise1d"
//! breakpoints = [0.0, 0.5]
//! values = [[[[1.0, 0.0]]], [[[4.0, 0.0]]]]
//! ```
//!
//! Coefficient kinds: `constant` (`value`), `fourier` (`modes = [{ k = [..], value = .. }]`),
//! `grid` (`size`, row-major `samples`), `piecewise1d` (`breakpoints`, `values`).
//! `a` is a list of d entries and defaults to zero, `Q` to zero, `Q0` to the identity.

use std::f64::consts::PI;
use std::path::Path;

use serde::Deserialize;

use crate::cell::SymbolSpec;
use crate::error::{Error, Result};
use crate::fields::PeriodicField;
use crate::lattice::{Lattice, Mode};
use crate::linalg::{self, CMat, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PrincipalRule {
    /// Galerkin projection of multiplication by g (Toeplitz of ĝ).
    #[default]
    Laurent,
    /// Inverse of the Toeplitz matrix of g⁻¹. Exact harmonic averaging in one
    /// dimension, the natural choice for discontinuous layered coefficients.
    Inverse,
}

#[derive(Clone, Debug)]
pub struct Problem {
    pub name: String,
    pub lattice: Lattice,
    pub symbol: SymbolSpec,
    pub g: PeriodicField,
    pub a: Vec<PeriodicField>,
    pub q: PeriodicField,
    pub q0: PeriodicField,
    pub rule: PrincipalRule,
    /// Cell cutoff: unknowns live on |j|_∞ ≤ cutoff.
    pub cutoff: usize,
}

impl Problem {
    /// Problem with a = 0, Q = 0, Q0 = 1; adjust with the `with_*` builders.
    pub fn new(name: &str, lattice: Lattice, symbol: SymbolSpec, g: PeriodicField, rule: PrincipalRule, cutoff: usize) -> Self {
        let n = symbol.n;
        Problem {
            name: name.to_string(),
            lattice,
            a: (0..lattice.dim).map(|_| PeriodicField::zeros(lattice, n, n)).collect(),
            q: PeriodicField::zeros(lattice, n, n),
            q0: PeriodicField::constant(lattice, CMat::identity(n, n)),
            symbol,
            g,
            rule,
            cutoff,
        }
    }

    pub fn with_a(mut self, a: Vec<PeriodicField>) -> Self {
        self.a = a;
        self
    }

    pub fn with_q(mut self, q: PeriodicField) -> Self {
        self.q = q;
        self
    }

    pub fn with_q0(mut self, q0: PeriodicField) -> Self {
        self.q0 = q0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let (m, n, d) = (self.symbol.m, self.symbol.n, self.lattice.dim);
        if self.symbol.dim() != d {
            return Err(Error::ShapeMismatch(format!("symbol has {} matrices, lattice dimension {d}", self.symbol.dim())));
        }
        let check = |f: &PeriodicField, r: usize, c: usize, what: &str| {
            if (f.rows, f.cols) != (r, c) {
                Err(Error::ShapeMismatch(format!("{what} is {}x{}, expected {r}x{c}", f.rows, f.cols)))
            } else {
                Ok(())
            }
        };
        check(&self.g, m, m, "g")?;
        check(&self.q, n, n, "Q")?;
        check(&self.q0, n, n, "Q0")?;
        if self.a.len() != d {
            return Err(Error::ShapeMismatch(format!("{} lower-order coefficients a_j, expected {d}", self.a.len())));
        }
        for (j, a) in self.a.iter().enumerate() {
            check(a, n, n, &format!("a_{}", j + 1))?;
        }
        for (f, what) in [(&self.g, "g"), (&self.q, "Q"), (&self.q0, "Q0")] {
            let scale = f.l2_norm().max(1.0);
            if !f.is_hermitian_valued(1e-12 * scale) {
                return Err(Error::Config(format!("{what} must be Hermitian-valued")));
            }
        }
        if self.cutoff == 0 {
            return Err(Error::Config("cell.cutoff must be at least 1".into()));
        }
        Ok(())
    }

    /// Principal coefficient as an operator on m-vector trigonometric polynomials
    /// of degree ≤ jmax, per the configured product rule.
    pub fn principal_matrix(&self, jmax: usize) -> Result<CMat> {
        let m = match self.rule {
            PrincipalRule::Laurent => self.g.toeplitz(jmax),
            PrincipalRule::Inverse => {
                let h = self.g.pointwise_inverse(2 * jmax)?;
                let t = h.toeplitz(jmax);
                let ch = linalg::cholesky(&t).ok_or_else(|| Error::IndefiniteCoefficient("g".into()))?;
                ch.inverse()
            }
        };
        let mut m = m;
        linalg::hermitize(&mut m);
        if linalg::cholesky(&m).is_none() {
            return Err(Error::IndefiniteCoefficient("g".into()));
        }
        Ok(m)
    }

    pub fn from_toml_str(text: &str, name: &str) -> Result<Self> {
        let doc: ProblemDoc = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        doc.build(name)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("problem");
        Self::from_toml_str(&text, name)
    }
}

// --- document schema ------------------------------------------------------

type MatrixLit = Vec<Vec<[f64; 2]>>;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemDoc {
    pub lattice: Option<LatticeDoc>,
    pub symbol: Option<SymbolDoc>,
    pub cell: Option<CellDoc>,
    pub coefficients: Option<CoefficientsDoc>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeDoc {
    pub basis: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymbolDoc {
    pub b: Vec<MatrixLit>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellDoc {
    pub cutoff: Option<usize>,
    #[serde(default)]
    pub principal_rule: PrincipalRule,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientsDoc {
    pub g: Option<CoeffDoc>,
    pub a: Option<Vec<CoeffDoc>>,
    #[serde(rename = "Q")]
    pub q: Option<CoeffDoc>,
    #[serde(rename = "Q0")]
    pub q0: Option<CoeffDoc>,
}

#[derive(Deserialize, Clone)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum CoeffDoc {
    Constant { value: MatrixLit },
    Fourier { modes: Vec<ModeDoc> },
    Grid { size: usize, samples: Vec<MatrixLit> },
    Piecewise1d { breakpoints: Vec<f64>, values: Vec<MatrixLit> },
}

#[derive(Deserialize, Clone)]
#[serde(deny_unknown_fields)]
pub struct ModeDoc {
    pub k: Vec<i64>,
    pub value: MatrixLit,
}

fn missing(field: &str) -> Error {
    Error::Config(format!("missing field `{field}`"))
}

pub fn matrix(lit: &MatrixLit) -> Result<CMat> {
    let rows = lit.len();
    let cols = lit.first().map(|r| r.len()).unwrap_or(0);
    if rows == 0 || cols == 0 || lit.iter().any(|r| r.len() != cols) {
        return Err(Error::Config("matrix literal must be a non-empty rectangular array of [re, im] pairs".into()));
    }
    Ok(CMat::from_fn(rows, cols, |i, j| C64::new(lit[i][j][0], lit[i][j][1])))
}

impl ProblemDoc {
    pub fn build(self, name: &str) -> Result<Problem> {
        let lat_doc = self.lattice.ok_or_else(|| missing("lattice"))?;
        let lattice = Lattice::new(&lat_doc.basis)?;
        let sym = self.symbol.ok_or_else(|| missing("symbol"))?;
        let symbol = SymbolSpec::new(sym.b.iter().map(matrix).collect::<Result<_>>()?)?;
        let cell = self.cell.ok_or_else(|| missing("cell"))?;
        let cutoff = cell.cutoff.ok_or_else(|| missing("cell.cutoff"))?;
        let coeffs = self.coefficients.ok_or_else(|| missing("coefficients"))?;
        let (m, n, d) = (symbol.m, symbol.n, lattice.dim);
        // Fourier tables go to 2·cutoff so every Toeplitz block over the cell modes is complete.
        let fc = 2 * cutoff;
        let g = build_coefficient(coeffs.g.as_ref().ok_or_else(|| missing("coefficients.g"))?, lattice, m, fc, "g")?;
        let a = match &coeffs.a {
            Some(list) => list
                .iter()
                .enumerate()
                .map(|(j, c)| build_coefficient(c, lattice, n, fc, &format!("a_{}", j + 1)))
                .collect::<Result<Vec<_>>>()?,
            None => (0..d).map(|_| PeriodicField::zeros(lattice, n, n)).collect(),
        };
        let q = match &coeffs.q {
            Some(c) => build_coefficient(c, lattice, n, fc, "Q")?,
            None => PeriodicField::zeros(lattice, n, n),
        };
        let q0 = match &coeffs.q0 {
            Some(c) => build_coefficient(c, lattice, n, fc, "Q0")?,
            None => PeriodicField::constant(lattice, CMat::identity(n, n)),
        };
        let p = Problem { name: name.to_string(), lattice, symbol, g, a, q, q0, rule: cell.principal_rule, cutoff };
        p.validate()?;
        Ok(p)
    }
}

fn build_coefficient(doc: &CoeffDoc, lattice: Lattice, size: usize, cutoff: usize, what: &str) -> Result<PeriodicField> {
    let shape_err = |got: (usize, usize)| Error::ShapeMismatch(format!("{what} is {}x{}, expected {size}x{size}", got.0, got.1));
    let checked = |m: CMat| if m.shape() == (size, size) { Ok(m) } else { Err(shape_err(m.shape())) };
    match doc {
        CoeffDoc::Constant { value } => Ok(PeriodicField::constant(lattice, checked(matrix(value)?)?)),
        CoeffDoc::Fourier { modes } => {
            let mut list = Vec::new();
            for md in modes {
                if md.k.len() != lattice.dim {
                    return Err(Error::Config(format!("{what}: mode index {:?} has wrong dimension", md.k)));
                }
                let k: Mode = [md.k[0], md.k.get(1).copied().unwrap_or(0)];
                list.push((k, checked(matrix(&md.value)?)?));
            }
            PeriodicField::from_modes(lattice, size, size, list)
        }
        CoeffDoc::Grid { size: gsize, samples } => {
            let mats = samples.iter().map(|s| matrix(s).and_then(checked)).collect::<Result<Vec<_>>>()?;
            let keep = cutoff.min((gsize.saturating_sub(1)) / 2);
            let f = PeriodicField::from_grid(lattice, size, size, *gsize, &mats, keep)?;
            let inv = mats
                .iter()
                .map(|m| m.clone().try_inverse())
                .collect::<Option<Vec<_>>>()
                .map(|inv| PeriodicField::from_grid(lattice, size, size, *gsize, &inv, keep))
                .transpose()?;
            Ok(match inv {
                Some(i) => f.with_inverse(i),
                None => f,
            })
        }
        CoeffDoc::Piecewise1d { breakpoints, values } => {
            if lattice.dim != 1 {
                return Err(Error::Config(format!("{what}: piecewise1d needs a one-dimensional lattice")));
            }
            let mats = values.iter().map(|s| matrix(s).and_then(checked)).collect::<Result<Vec<_>>>()?;
            piecewise_1d(lattice, breakpoints, &mats, cutoff)
        }
    }
}

/// Closed-form Fourier table of a piecewise-constant function on [0, 1): value
/// `values[i]` on [b_i, b_{i+1}), the last piece wrapping to 1 + b_0. The exact
/// table of the pointwise inverse is recorded alongside when every value is invertible.
pub fn piecewise_1d(lattice: Lattice, breakpoints: &[f64], values: &[CMat], cutoff: usize) -> Result<PeriodicField> {
    if breakpoints.len() != values.len() || breakpoints.is_empty() {
        return Err(Error::Config("piecewise1d needs as many breakpoints as values".into()));
    }
    if breakpoints.windows(2).any(|w| w[0] >= w[1]) || breakpoints[0] < 0.0 || *breakpoints.last().unwrap() >= 1.0 {
        return Err(Error::Config("piecewise1d breakpoints must increase within [0, 1)".into()));
    }
    let size = values[0].nrows();
    let table = |vals: &[CMat]| -> Result<PeriodicField> {
        let mut modes = Vec::new();
        for k in -(cutoff as i64)..=(cutoff as i64) {
            let mut acc = CMat::zeros(size, size);
            for (i, v) in vals.iter().enumerate() {
                let lo = breakpoints[i];
                let hi = if i + 1 < breakpoints.len() { breakpoints[i + 1] } else { 1.0 + breakpoints[0] };
                let w = if k == 0 {
                    C64::new(hi - lo, 0.0)
                } else {
                    let kk = 2.0 * PI * k as f64;
                    (C64::new(0.0, -kk * lo).exp() - C64::new(0.0, -kk * hi).exp()) / C64::new(0.0, kk)
                };
                acc += v * w;
            }
            modes.push(([k, 0], acc));
        }
        PeriodicField::from_modes(lattice, size, size, modes)
    };
    let f = table(values)?;
    match values.iter().map(|v| v.clone().try_inverse()).collect::<Option<Vec<_>>>() {
        Some(inv) => Ok(f.with_inverse(table(&inv)?)),
        None => Ok(f),
    }
}
