//! Periodic matrix fields and vector functions on the computational torus, both
//! stored as truncated Fourier tables over the dual lattice.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rustfft::{FftDirection, FftPlanner};

use crate::error::{Error, Result};
use crate::lattice::{Lattice, Mode};
use crate::linalg::{CMat, CVec, C64, ZERO};

/// The cube |k|_∞ ≤ cutoff in Z^d, enumerated with the last coordinate fastest.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModeBox {
    pub dim: usize,
    pub cutoff: usize,
}

impl ModeBox {
    pub fn new(dim: usize, cutoff: usize) -> Self {
        ModeBox { dim, cutoff }
    }

    pub fn side(&self) -> usize {
        2 * self.cutoff + 1
    }

    pub fn len(&self) -> usize {
        self.side().pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, k: Mode) -> bool {
        let c = self.cutoff as i64;
        k[0].abs() <= c && if self.dim == 2 { k[1].abs() <= c } else { k[1] == 0 }
    }

    pub fn index(&self, k: Mode) -> Option<usize> {
        if !self.contains(k) {
            return None;
        }
        let c = self.cutoff as i64;
        let s = self.side() as i64;
        Some(if self.dim == 1 { (k[0] + c) as usize } else { ((k[0] + c) * s + k[1] + c) as usize })
    }

    pub fn mode(&self, idx: usize) -> Mode {
        let c = self.cutoff as i64;
        let s = self.side();
        if self.dim == 1 {
            [idx as i64 - c, 0]
        } else {
            [(idx / s) as i64 - c, (idx % s) as i64 - c]
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = Mode> + '_ {
        (0..self.len()).map(move |i| self.mode(i))
    }
}

pub fn linf(k: Mode) -> usize {
    k[0].unsigned_abs().max(k[1].unsigned_abs()) as usize
}

fn neg(k: Mode) -> Mode {
    [-k[0], -k[1]]
}

fn add(a: Mode, b: Mode) -> Mode {
    [a[0] + b[0], a[1] + b[1]]
}

fn sub(a: Mode, b: Mode) -> Mode {
    [a[0] - b[0], a[1] - b[1]]
}

// --- grid transforms -------------------------------------------------------

fn fft_all_axes(data: &mut [C64], dim: usize, g: usize, dir: FftDirection) {
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft(g, dir);
    if dim == 1 {
        fft.process(data);
        return;
    }
    for row in data.chunks_mut(g) {
        fft.process(row);
    }
    let mut col = vec![ZERO; g];
    for j in 0..g {
        for i in 0..g {
            col[i] = data[i * g + j];
        }
        fft.process(&mut col);
        for i in 0..g {
            data[i * g + j] = col[i];
        }
    }
}

fn wrap_index(k: Mode, dim: usize, g: usize) -> usize {
    let w = |x: i64| x.rem_euclid(g as i64) as usize;
    if dim == 1 {
        w(k[0])
    } else {
        w(k[0]) * g + w(k[1])
    }
}

/// Values Σ_k c(k) e^{2πi k·x_p} at grid points x_p = p/g.
fn synthesize(dim: usize, g: usize, coeffs: impl Iterator<Item = (Mode, C64)>) -> Vec<C64> {
    let mut data = vec![ZERO; g.pow(dim as u32)];
    for (k, c) in coeffs {
        data[wrap_index(k, dim, g)] += c;
    }
    fft_all_axes(&mut data, dim, g, FftDirection::Inverse);
    data
}

/// Discrete Fourier coefficients for |k|_∞ ≤ cutoff from samples on a g-grid.
fn analyze(dim: usize, g: usize, values: &[C64], cutoff: usize) -> Vec<(Mode, C64)> {
    let mut data = values.to_vec();
    fft_all_axes(&mut data, dim, g, FftDirection::Forward);
    let scale = 1.0 / data.len() as f64;
    ModeBox::new(dim, cutoff).iter().map(|k| (k, data[wrap_index(k, dim, g)] * scale)).collect()
}

pub fn grid_points(dim: usize, g: usize) -> usize {
    g.pow(dim as u32)
}

// --- PeriodicField ---------------------------------------------------------

/// Floor on the harmonic-mean grid; 4K+3 points alone leave 1e-4 errors for K = 1.
pub const MIN_HARMONIC_GRID: usize = 64;

/// Γ-periodic rows×cols matrix function, f(x) = Σ_k f̂(k) e^{i⟨ξ_k, x⟩}.
#[derive(Clone, Debug)]
pub struct PeriodicField {
    pub lattice: Lattice,
    pub rows: usize,
    pub cols: usize,
    pub cutoff: usize,
    coeffs: BTreeMap<Mode, CMat>,
    /// Fourier table of the pointwise inverse, recorded at ingestion when the
    /// exact inverse is cheaper to get than from resampling the truncated series.
    inverse: Option<Arc<PeriodicField>>,
}

impl PartialEq for PeriodicField {
    fn eq(&self, o: &Self) -> bool {
        self.rows == o.rows && self.cols == o.cols && self.cutoff == o.cutoff && self.coeffs == o.coeffs
    }
}

impl PeriodicField {
    pub fn zeros(lattice: Lattice, rows: usize, cols: usize) -> Self {
        PeriodicField { lattice, rows, cols, cutoff: 0, coeffs: BTreeMap::new(), inverse: None }
    }

    pub fn constant(lattice: Lattice, m: CMat) -> Self {
        let mut f = Self::zeros(lattice, m.nrows(), m.ncols());
        f.set([0, 0], m);
        f
    }

    pub fn from_modes(lattice: Lattice, rows: usize, cols: usize, modes: impl IntoIterator<Item = (Mode, CMat)>) -> Result<Self> {
        let mut f = Self::zeros(lattice, rows, cols);
        for (k, m) in modes {
            if m.shape() != (rows, cols) {
                return Err(Error::ShapeMismatch(format!("mode {k:?} has shape {:?}, expected {:?}", m.shape(), (rows, cols))));
            }
            if lattice.dim == 1 && k[1] != 0 {
                return Err(Error::ShapeMismatch(format!("mode {k:?} is not one-dimensional")));
            }
            let cur = f.coeff(k);
            f.set(k, cur + m);
        }
        Ok(f)
    }

    pub fn dim(&self) -> usize {
        self.lattice.dim
    }

    pub fn set(&mut self, k: Mode, m: CMat) {
        assert_eq!(m.shape(), (self.rows, self.cols));
        self.cutoff = self.cutoff.max(linf(k));
        self.coeffs.insert(k, m);
        self.inverse = None;
    }

    pub fn coeff(&self, k: Mode) -> CMat {
        self.coeffs.get(&k).cloned().unwrap_or_else(|| CMat::zeros(self.rows, self.cols))
    }

    pub fn coeff_ref(&self, k: Mode) -> Option<&CMat> {
        self.coeffs.get(&k)
    }

    pub fn modes(&self) -> impl Iterator<Item = (Mode, &CMat)> {
        self.coeffs.iter().map(|(k, m)| (*k, m))
    }

    pub fn with_inverse(mut self, inv: PeriodicField) -> Self {
        self.inverse = Some(Arc::new(inv));
        self
    }

    pub fn recorded_inverse(&self) -> Option<&PeriodicField> {
        self.inverse.as_deref()
    }

    /// Pointwise inverse: the recorded one, else grid inversion on a fine grid.
    pub fn pointwise_inverse(&self, cutoff: usize) -> Result<PeriodicField> {
        if let Some(inv) = &self.inverse {
            return Ok(inv.truncated(cutoff));
        }
        let g = (4 * self.cutoff.max(cutoff) + 3).max(16);
        let vals = self.eval_on_grid(g)?;
        let mut inv = Vec::with_capacity(vals.len());
        for (i, v) in vals.iter().enumerate() {
            inv.push(invert_checked(v, i)?);
        }
        PeriodicField::from_grid(self.lattice, self.rows, self.cols, g, &inv, cutoff)
    }

    pub fn truncated(&self, cutoff: usize) -> PeriodicField {
        let mut f = Self::zeros(self.lattice, self.rows, self.cols);
        for (k, m) in self.modes() {
            if linf(k) <= cutoff {
                f.set(k, m.clone());
            }
        }
        f
    }

    pub fn eval_on_grid(&self, g: usize) -> Result<Vec<CMat>> {
        if g < 2 * self.cutoff + 1 {
            return Err(Error::GridTooCoarse { grid: g, cutoff: self.cutoff });
        }
        let d = self.dim();
        let np = grid_points(d, g);
        let mut out = vec![CMat::zeros(self.rows, self.cols); np];
        for r in 0..self.rows {
            for c in 0..self.cols {
                let vals = synthesize(d, g, self.modes().map(|(k, m)| (k, m[(r, c)])));
                for (o, v) in out.iter_mut().zip(vals) {
                    o[(r, c)] = v;
                }
            }
        }
        Ok(out)
    }

    /// Grid analysis keeping |k|_∞ ≤ cutoff.
    pub fn from_grid(lattice: Lattice, rows: usize, cols: usize, g: usize, samples: &[CMat], cutoff: usize) -> Result<Self> {
        let d = lattice.dim;
        if samples.len() != grid_points(d, g) {
            return Err(Error::ShapeMismatch(format!("expected {} grid samples, got {}", grid_points(d, g), samples.len())));
        }
        if g < 2 * cutoff + 1 {
            return Err(Error::GridTooCoarse { grid: g, cutoff });
        }
        let mut table: BTreeMap<Mode, CMat> = BTreeMap::new();
        for r in 0..rows {
            for c in 0..cols {
                let vals: Vec<C64> = samples.iter().map(|m| m[(r, c)]).collect();
                for (k, v) in analyze(d, g, &vals, cutoff) {
                    table.entry(k).or_insert_with(|| CMat::zeros(rows, cols))[(r, c)] = v;
                }
            }
        }
        let mut f = Self::zeros(lattice, rows, cols);
        for (k, m) in table {
            if m.iter().any(|z| z.norm() > 0.0) {
                f.set(k, m);
            }
        }
        f.cutoff = cutoff;
        Ok(f)
    }

    /// f^ε with ε = 1/n on the computational torus.
    pub fn rescale_eps(&self, n: usize) -> PeriodicField {
        let n = n as i64;
        let mut f = Self::zeros(self.lattice, self.rows, self.cols);
        for (k, m) in self.modes() {
            f.set([n * k[0], n * k[1]], m.clone());
        }
        f.cutoff = self.cutoff * n as usize;
        f
    }

    pub fn cell_average(&self) -> CMat {
        self.coeff([0, 0])
    }

    pub fn harmonic_mean(&self) -> Result<CMat> {
        if self.rows != self.cols {
            return Err(Error::ShapeMismatch("harmonic mean of a non-square field".into()));
        }
        let mean_inv = match &self.inverse {
            Some(inv) => inv.cell_average(),
            None => {
                let g = (4 * self.cutoff + 3).max(MIN_HARMONIC_GRID);
                let vals = self.eval_on_grid(g)?;
                let mut acc = CMat::zeros(self.rows, self.cols);
                for (i, v) in vals.iter().enumerate() {
                    acc += invert_checked(v, i)?;
                }
                acc / C64::new(vals.len() as f64, 0.0)
            }
        };
        invert_checked(&mean_inv, 0)
    }

    /// Pointwise adjoint x ↦ f(x)*.
    pub fn adjoint_field(&self) -> PeriodicField {
        let mut f = Self::zeros(self.lattice, self.cols, self.rows);
        for (k, m) in self.modes() {
            f.set(neg(k), m.adjoint());
        }
        f
    }

    /// Pointwise product (Laurent convolution, untruncated).
    pub fn mul(&self, o: &PeriodicField) -> Result<PeriodicField> {
        if self.cols != o.rows {
            return Err(Error::ShapeMismatch(format!("{}x{} times {}x{}", self.rows, self.cols, o.rows, o.cols)));
        }
        let mut f = Self::zeros(self.lattice, self.rows, o.cols);
        for (p, a) in self.modes() {
            for (q, b) in o.modes() {
                let k = add(p, q);
                let cur = f.coeff(k);
                f.set(k, cur + a * b);
            }
        }
        Ok(f)
    }

    pub fn scaled(&self, c: C64) -> PeriodicField {
        let mut f = Self::zeros(self.lattice, self.rows, self.cols);
        for (k, m) in self.modes() {
            f.set(k, m * c);
        }
        f
    }

    pub fn plus(&self, o: &PeriodicField) -> Result<PeriodicField> {
        if (self.rows, self.cols) != (o.rows, o.cols) {
            return Err(Error::ShapeMismatch("field sum".into()));
        }
        let mut f = self.clone();
        f.inverse = None;
        for (k, m) in o.modes() {
            let cur = f.coeff(k);
            f.set(k, cur + m);
        }
        Ok(f)
    }

    pub fn is_hermitian_valued(&self, tol: f64) -> bool {
        self.rows == self.cols
            && self.modes().all(|(k, m)| (self.coeff(neg(k)) - m.adjoint()).iter().all(|z| z.norm() <= tol))
    }

    pub fn is_real_valued(&self, tol: f64) -> bool {
        self.modes().all(|(k, m)| (self.coeff(neg(k)) - m.map(|z| z.conj())).iter().all(|z| z.norm() <= tol))
    }

    /// Normalized L²(Ω) norm: (Σ ‖f̂(k)‖_F²)^{1/2}.
    pub fn l2_norm(&self) -> f64 {
        self.modes().map(|(_, m)| m.norm_squared()).sum::<f64>().sqrt()
    }

    /// Block Toeplitz matrix [f̂(j - j')] over the modes |j|_∞ ≤ jmax.
    pub fn toeplitz(&self, jmax: usize) -> CMat {
        let bx = ModeBox::new(self.dim(), jmax);
        let nm = bx.len();
        let mut t = CMat::zeros(self.rows * nm, self.cols * nm);
        for (p, jp) in bx.iter().enumerate() {
            for (q, jq) in bx.iter().enumerate() {
                if let Some(m) = self.coeff_ref(sub(jp, jq)) {
                    t.view_mut((p * self.rows, q * self.cols), (self.rows, self.cols)).copy_from(m);
                }
            }
        }
        t
    }

    /// Field whose coefficient at j is the block j of a stacked vector over |j|_∞ ≤ jmax.
    pub fn from_stacked(lattice: Lattice, stacked: &CMat, rows: usize, jmax: usize) -> PeriodicField {
        let bx = ModeBox::new(lattice.dim, jmax);
        let cols = stacked.ncols();
        let mut f = Self::zeros(lattice, rows, cols);
        for (p, j) in bx.iter().enumerate() {
            let blk = stacked.view((p * rows, 0), (rows, cols)).into_owned();
            if blk.iter().any(|z| z.norm() > 0.0) {
                f.set(j, blk);
            }
        }
        f
    }

    pub fn stacked(&self, jmax: usize) -> CMat {
        let bx = ModeBox::new(self.dim(), jmax);
        let mut s = CMat::zeros(self.rows * bx.len(), self.cols);
        for (p, j) in bx.iter().enumerate() {
            if let Some(m) = self.coeff_ref(j) {
                s.view_mut((p * self.rows, 0), (self.rows, self.cols)).copy_from(m);
            }
        }
        s
    }

    pub fn random(lattice: Lattice, rows: usize, cols: usize, cutoff: usize, amp: f64, rng: &mut impl Rng) -> Self {
        let bx = ModeBox::new(lattice.dim, cutoff);
        let modes: Vec<(Mode, CMat)> = bx
            .iter()
            .map(|k| (k, CMat::from_fn(rows, cols, |_, _| C64::new(rng.gen_range(-amp..amp), rng.gen_range(-amp..amp)))))
            .collect();
        Self::from_modes(lattice, rows, cols, modes).expect("shapes")
    }

    /// Random Hermitian positive field: c·I + Re-symmetrized random perturbation.
    pub fn random_hermitian_positive(lattice: Lattice, size: usize, cutoff: usize, rng: &mut impl Rng) -> Self {
        let x = Self::random(lattice, size, size, cutoff, 0.3, rng);
        let h = x.plus(&x.adjoint_field()).expect("square").scaled(C64::new(0.5, 0.0));
        let bound: f64 = h.modes().map(|(_, m)| crate::linalg::op_norm(m)).sum();
        let shift = CMat::identity(size, size) * C64::new(bound + rng.gen_range(0.5..2.0), 0.0);
        h.plus(&Self::constant(lattice, shift)).expect("square")
    }
}

fn invert_checked(m: &CMat, index: usize) -> Result<CMat> {
    let sv = m.clone().singular_values();
    let sigma = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if !(sigma > 1e-10) {
        return Err(Error::SingularPointwise { index, sigma });
    }
    m.clone().try_inverse().ok_or(Error::SingularPointwise { index, sigma })
}

// --- TorusFunction ---------------------------------------------------------

/// n-vector function on the computational torus over the mode cube |k|_∞ ≤ cutoff.
#[derive(Clone, Debug, PartialEq)]
pub struct TorusFunction {
    pub lattice: Lattice,
    pub n: usize,
    pub cutoff: usize,
    coeffs: Vec<C64>,
}

impl TorusFunction {
    pub fn zeros(lattice: Lattice, n: usize, cutoff: usize) -> Self {
        let len = ModeBox::new(lattice.dim, cutoff).len() * n;
        TorusFunction { lattice, n, cutoff, coeffs: vec![ZERO; len] }
    }

    pub fn from_modes(lattice: Lattice, n: usize, modes: &[(Mode, Vec<C64>)]) -> Result<Self> {
        let cutoff = modes.iter().map(|(k, _)| linf(*k)).max().unwrap_or(0);
        let mut u = Self::zeros(lattice, n, cutoff);
        for (k, v) in modes {
            if v.len() != n {
                return Err(Error::ShapeMismatch(format!("mode {k:?} has {} components, expected {n}", v.len())));
            }
            let s = u.get_mut(*k).ok_or_else(|| Error::ShapeMismatch(format!("mode {k:?} outside dimension")))?;
            for (a, b) in s.iter_mut().zip(v) {
                *a += b;
            }
        }
        Ok(u)
    }

    pub fn single_mode(lattice: Lattice, n: usize, k: Mode, v: &[C64]) -> Self {
        Self::from_modes(lattice, n, &[(k, v.to_vec())]).expect("single mode")
    }

    pub fn mode_box(&self) -> ModeBox {
        ModeBox::new(self.lattice.dim, self.cutoff)
    }

    pub fn get(&self, k: Mode) -> Option<&[C64]> {
        self.mode_box().index(k).map(|i| &self.coeffs[i * self.n..(i + 1) * self.n])
    }

    pub fn get_mut(&mut self, k: Mode) -> Option<&mut [C64]> {
        let n = self.n;
        self.mode_box().index(k).map(move |i| &mut self.coeffs[i * n..(i + 1) * n])
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.coeffs
    }

    /// (mode, coefficient vector) pairs with at least one nonzero entry.
    pub fn nonzero_modes(&self) -> impl Iterator<Item = (Mode, &[C64])> + '_ {
        let bx = self.mode_box();
        self.coeffs
            .chunks(self.n)
            .enumerate()
            .filter(|(_, c)| c.iter().any(|z| *z != ZERO))
            .map(move |(i, c)| (bx.mode(i), c))
    }

    pub fn resized(&self, cutoff: usize) -> TorusFunction {
        let mut u = Self::zeros(self.lattice, self.n, cutoff);
        for (k, c) in self.nonzero_modes() {
            if let Some(s) = u.get_mut(k) {
                s.copy_from_slice(c);
            }
        }
        u
    }

    fn aligned(&self, o: &TorusFunction) -> Result<(TorusFunction, TorusFunction)> {
        if self.n != o.n {
            return Err(Error::ShapeMismatch(format!("{} vs {} components", self.n, o.n)));
        }
        let k = self.cutoff.max(o.cutoff);
        Ok((self.resized(k), o.resized(k)))
    }

    pub fn add(&self, o: &TorusFunction) -> Result<TorusFunction> {
        let (mut a, b) = self.aligned(o)?;
        for (x, y) in a.coeffs.iter_mut().zip(&b.coeffs) {
            *x += y;
        }
        Ok(a)
    }

    pub fn sub(&self, o: &TorusFunction) -> Result<TorusFunction> {
        let (mut a, b) = self.aligned(o)?;
        for (x, y) in a.coeffs.iter_mut().zip(&b.coeffs) {
            *x -= y;
        }
        Ok(a)
    }

    pub fn scaled(&self, c: C64) -> TorusFunction {
        let mut u = self.clone();
        u.coeffs.iter_mut().for_each(|z| *z *= c);
        u
    }

    /// Σ conj(u) v
    pub fn dot(&self, o: &TorusFunction) -> Result<C64> {
        let (a, b) = self.aligned(o)?;
        Ok(a.coeffs.iter().zip(&b.coeffs).map(|(x, y)| x.conj() * y).sum())
    }

    pub fn sobolev_norm(&self, s: f64) -> f64 {
        assert!((-2.0..=3.0).contains(&s), "Sobolev index {s} outside [-2, 3]");
        let mut acc = 0.0;
        for (k, c) in self.nonzero_modes() {
            let w = (1.0 + self.lattice.xi_norm2(k)).powf(s);
            acc += w * c.iter().map(|z| z.norm_sqr()).sum::<f64>();
        }
        acc.sqrt()
    }

    pub fn l2_norm(&self) -> f64 {
        self.coeffs.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Π_ε: keep modes whose frequency lies in Ω̃/ε.
    pub fn apply_smoothing(&self, eps: f64) -> TorusFunction {
        let mut u = self.clone();
        let bx = u.mode_box();
        let n = u.n;
        for (i, c) in u.coeffs.chunks_mut(n).enumerate() {
            if c.iter().any(|z| *z != ZERO) && !self.lattice.in_brillouin(self.lattice.xi(bx.mode(i)), eps) {
                c.fill(ZERO);
            }
        }
        u
    }

    /// D_l = -i ∂_l, a Fourier multiplier by ξ_l.
    pub fn derivative(&self, l: usize) -> TorusFunction {
        let mut u = self.clone();
        let bx = u.mode_box();
        let n = u.n;
        for (i, c) in u.coeffs.chunks_mut(n).enumerate() {
            let x = self.lattice.xi(bx.mode(i))[l];
            c.iter_mut().for_each(|z| *z *= x);
        }
        u
    }

    /// Apply the constant-coefficient multiplier k ↦ m(ξ_k) (rows×n).
    pub fn apply_multiplier(&self, rows: usize, m: impl Fn([f64; 2]) -> CMat) -> TorusFunction {
        let mut out = TorusFunction::zeros(self.lattice, rows, self.cutoff);
        for (k, c) in self.nonzero_modes() {
            let y = m(self.lattice.xi(k)) * CVec::from_column_slice(c);
            out.get_mut(k).unwrap().copy_from_slice(y.as_slice());
        }
        out
    }

    pub fn eval_on_grid(&self, g: usize) -> Result<Vec<CVec>> {
        if g < 2 * self.cutoff + 1 {
            return Err(Error::GridTooCoarse { grid: g, cutoff: self.cutoff });
        }
        let d = self.lattice.dim;
        let mut out = vec![CVec::zeros(self.n); grid_points(d, g)];
        for c in 0..self.n {
            let vals = synthesize(d, g, self.nonzero_modes().map(|(k, v)| (k, v[c])));
            for (o, v) in out.iter_mut().zip(vals) {
                o[c] = v;
            }
        }
        Ok(out)
    }

    pub fn random_band_limited(lattice: Lattice, n: usize, cutoff: usize, rng: &mut impl Rng) -> Self {
        let mut u = Self::zeros(lattice, n, cutoff);
        u.coeffs.iter_mut().for_each(|z| *z = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        u
    }
}

/// [f]u as a convolution of Fourier tables; f must already be at the torus scale.
pub fn multiply(f: &PeriodicField, u: &TorusFunction) -> Result<TorusFunction> {
    if f.cols != u.n {
        return Err(Error::ShapeMismatch(format!("field has {} columns, function has {} components", f.cols, u.n)));
    }
    let mut out = TorusFunction::zeros(u.lattice, f.rows, f.cutoff + u.cutoff);
    let nz: Vec<(Mode, CVec)> = u.nonzero_modes().map(|(k, c)| (k, CVec::from_column_slice(c))).collect();
    for (q, m) in f.modes() {
        for (k, v) in &nz {
            let y = m * v;
            let dst = out.get_mut(add(*k, q)).expect("output cube holds all products");
            for (a, b) in dst.iter_mut().zip(y.iter()) {
                *a += b;
            }
        }
    }
    Ok(out)
}
