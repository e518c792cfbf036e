//! Periodic-lattice signals and the Fourier machinery shared by every energy.
//!
//! Transforms follow `x̂(ω) = Σ_u x(u) e^{-i ω·u}` with grid frequencies
//! `ω = 2πk/n`; the inverse carries the `1/d` factor. Under this convention
//! `‖x‖² = d⁻¹‖x̂‖²` and every norm in the crate is unambiguous.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grid shape: a periodic line of `n` samples or a periodic `n × n` square.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Line(usize),
    Square(usize),
}

impl Shape {
    pub fn line(n: usize) -> Result<Self> {
        let shape = Shape::Line(n);
        shape.validate()?;
        Ok(shape)
    }

    pub fn square(side: usize) -> Result<Self> {
        let shape = Shape::Square(side);
        shape.validate()?;
        Ok(shape)
    }

    pub fn validate(&self) -> Result<()> {
        if self.len() < 4 {
            return Err(Error::InvalidGrid(format!(
                "{self} has {} points, at least 4 are required",
                self.len()
            )));
        }
        Ok(())
    }

    /// Number of grid points `d`.
    pub fn len(&self) -> usize {
        match *self {
            Shape::Line(n) => n,
            Shape::Square(n) => n * n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Period along each axis, `d^{1/ℓ}`.
    pub fn side(&self) -> usize {
        match *self {
            Shape::Line(n) | Shape::Square(n) => n,
        }
    }

    pub fn ndim(&self) -> usize {
        match self {
            Shape::Line(_) => 1,
            Shape::Square(_) => 2,
        }
    }

    /// Row-major coordinates of a flat index; the second entry is 0 in 1-D.
    pub fn coords(&self, index: usize) -> [usize; 2] {
        match *self {
            Shape::Line(_) => [index, 0],
            Shape::Square(n) => [index / n, index % n],
        }
    }

    /// Flat index of (possibly out-of-range) coordinates, wrapped periodically.
    pub fn wrap_index(&self, coords: [isize; 2]) -> usize {
        let n = self.side() as isize;
        let a = coords[0].rem_euclid(n) as usize;
        match self {
            Shape::Line(_) => a,
            Shape::Square(_) => a * n as usize + coords[1].rem_euclid(n) as usize,
        }
    }

    /// Signed integer frequency of each axis for a flat index, in `(-n/2, n/2]`.
    pub fn signed_frequency(&self, index: usize) -> [isize; 2] {
        let n = self.side() as isize;
        let signed = |k: usize| {
            let k = k as isize;
            if k > n / 2 {
                k - n
            } else {
                k
            }
        };
        let c = self.coords(index);
        match self {
            Shape::Line(_) => [signed(c[0]), 0],
            Shape::Square(_) => [signed(c[0]), signed(c[1])],
        }
    }

    /// Angular frequency `2πk/n` per axis, each in `(-π, π]`.
    pub fn frequency(&self, index: usize) -> [f64; 2] {
        let step = 2.0 * std::f64::consts::PI / self.side() as f64;
        let k = self.signed_frequency(index);
        [k[0] as f64 * step, k[1] as f64 * step]
    }

    /// Flat index of the frequency `-ω`.
    pub fn negated_index(&self, index: usize) -> usize {
        let c = self.coords(index);
        self.wrap_index([-(c[0] as isize), -(c[1] as isize)])
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Line(n) => write!(f, "{n}"),
            Shape::Square(n) => write!(f, "{n}x{n}"),
        }
    }
}

/// Real signal on a periodic grid, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PeriodicSignal {
    shape: Shape,
    values: Vec<f64>,
}

impl PeriodicSignal {
    pub fn new(shape: Shape, values: Vec<f64>) -> Result<Self> {
        shape.validate()?;
        if values.len() != shape.len() {
            return Err(Error::dims(shape.len(), values.len()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Degenerate(format!("non-finite sample at index {i}")));
        }
        Ok(Self { shape, values })
    }

    pub fn zeros(shape: Shape) -> Self {
        Self {
            shape,
            values: vec![0.0; shape.len()],
        }
    }

    /// Unit Dirac at the origin.
    pub fn dirac(shape: Shape) -> Self {
        let mut s = Self::zeros(shape);
        s.values[0] = 1.0;
        s
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.len() as f64
    }

    /// Empirical variance with the `1/d` normalisation.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / self.len() as f64
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub(crate) fn from_raw(shape: Shape, values: Vec<f64>) -> Self {
        debug_assert_eq!(shape.len(), values.len());
        Self { shape, values }
    }
}

/// Complex samples on a periodic grid, e.g. wavelet coefficients `x ⋆ ψ`.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexField {
    shape: Shape,
    values: Vec<Complex64>,
}

impl ComplexField {
    pub fn new(shape: Shape, values: Vec<Complex64>) -> Result<Self> {
        shape.validate()?;
        if values.len() != shape.len() {
            return Err(Error::dims(shape.len(), values.len()));
        }
        Ok(Self { shape, values })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn norm_l1(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Pointwise modulus as a real signal.
    pub fn modulus(&self) -> PeriodicSignal {
        PeriodicSignal::from_raw(self.shape, self.values.iter().map(|z| z.norm()).collect())
    }
}

/// Anything that lives on a grid and can be lifted to complex samples.
pub trait GridField {
    fn shape(&self) -> Shape;
    fn to_complex(&self) -> Vec<Complex64>;
}

impl GridField for PeriodicSignal {
    fn shape(&self) -> Shape {
        self.shape
    }

    fn to_complex(&self) -> Vec<Complex64> {
        self.values.iter().map(|&v| Complex64::new(v, 0.0)).collect()
    }
}

impl GridField for ComplexField {
    fn shape(&self) -> Shape {
        self.shape
    }

    fn to_complex(&self) -> Vec<Complex64> {
        self.values.clone()
    }
}

/// A filter stored by its discrete Fourier transform on a given grid.
#[derive(Clone, Debug, PartialEq)]
pub struct FreqFilter {
    shape: Shape,
    values: Vec<Complex64>,
}

impl FreqFilter {
    pub fn new(shape: Shape, values: Vec<Complex64>) -> Result<Self> {
        shape.validate()?;
        if values.len() != shape.len() {
            return Err(Error::dims(shape.len(), values.len()));
        }
        Ok(Self { shape, values })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    /// Value at ω = 0, i.e. the sum of the spatial taps.
    pub fn dc(&self) -> Complex64 {
        self.values[0]
    }

    /// Spatial taps `h_d(u)` recovered by an inverse transform.
    pub fn spatial(&self, fourier: &Fourier) -> ComplexField {
        let mut buf = self.values.clone();
        fourier.inverse(&mut buf);
        ComplexField {
            shape: self.shape,
            values: buf,
        }
    }
}

/// Forward/inverse DFT plans for one grid shape. Plans are immutable and
/// shareable between threads; scratch space is allocated per call.
#[derive(Clone)]
pub struct Fourier {
    shape: Shape,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Fourier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Fourier").field("shape", &self.shape).finish()
    }
}

impl Fourier {
    pub fn new(shape: Shape) -> Self {
        let mut planner = FftPlanner::new();
        let n = shape.side();
        Self {
            shape,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    /// In-place unnormalised forward transform.
    pub fn forward(&self, buf: &mut [Complex64]) {
        self.run(&self.forward, buf);
    }

    /// In-place inverse transform including the `1/d` factor.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.run(&self.inverse, buf);
        let scale = 1.0 / buf.len() as f64;
        for z in buf.iter_mut() {
            *z *= scale;
        }
    }

    pub fn forward_real(&self, x: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut buf);
        buf
    }

    fn run(&self, plan: &Arc<dyn Fft<f64>>, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.shape.len(), "buffer does not match grid");
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        match self.shape {
            Shape::Line(_) => plan.process_with_scratch(buf, &mut scratch),
            Shape::Square(n) => {
                // rows, transpose, rows (= columns), transpose back
                plan.process_with_scratch(buf, &mut scratch);
                transpose_square(buf, n);
                plan.process_with_scratch(buf, &mut scratch);
                transpose_square(buf, n);
            }
        }
    }
}

fn transpose_square(buf: &mut [Complex64], n: usize) {
    for r in 0..n {
        for c in (r + 1)..n {
            buf.swap(r * n + c, c * n + r);
        }
    }
}

/// Circular convolution `(x ⋆ h_d)(n) = Σ_m x(m) h_d(n − m)` computed as the
/// inverse transform of `x̂ · ĥ`.
pub fn circular_convolve<X: GridField>(
    x: &X,
    filter: &FreqFilter,
    fourier: &Fourier,
) -> Result<ComplexField> {
    if x.shape() != filter.shape() {
        return Err(Error::dims(filter.shape(), x.shape()));
    }
    if fourier.shape() != filter.shape() {
        return Err(Error::dims(filter.shape(), fourier.shape()));
    }
    let mut buf = x.to_complex();
    fourier.forward(&mut buf);
    for (z, h) in buf.iter_mut().zip(filter.values()) {
        *z *= h;
    }
    fourier.inverse(&mut buf);
    Ok(ComplexField {
        shape: filter.shape(),
        values: buf,
    })
}

/// Periodic shift `T_τ x(u) = x(u − τ)`. `offset` has one entry per axis.
pub fn translate(x: &PeriodicSignal, offset: &[isize]) -> PeriodicSignal {
    let shape = x.shape();
    let tau = [
        offset.first().copied().unwrap_or(0),
        if shape.ndim() == 2 {
            offset.get(1).copied().unwrap_or(0)
        } else {
            0
        },
    ];
    let mut out = vec![0.0; x.len()];
    for (i, &v) in x.values().iter().enumerate() {
        let c = shape.coords(i);
        let j = shape.wrap_index([c[0] as isize + tau[0], c[1] as isize + tau[1]]);
        out[j] = v;
    }
    PeriodicSignal::from_raw(shape, out)
}

/// Compactly supported real filter taps on `Z^ℓ`, keyed by integer offsets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterTaps {
    ndim: usize,
    taps: Vec<([isize; 2], f64)>,
}

impl FilterTaps {
    pub fn new(ndim: usize, taps: Vec<([isize; 2], f64)>) -> Result<Self> {
        if !(1..=2).contains(&ndim) {
            return Err(Error::InvalidGrid(format!("unsupported dimension {ndim}")));
        }
        if ndim == 1 && taps.iter().any(|(p, _)| p[1] != 0) {
            return Err(Error::InvalidGrid("1-D taps must have a zero second offset".into()));
        }
        Ok(Self { ndim, taps })
    }

    /// Unit impulse at the origin.
    pub fn delta(ndim: usize) -> Self {
        Self {
            ndim,
            taps: vec![([0, 0], 1.0)],
        }
    }

    pub fn ndim(&self) -> usize {
        self.ndim
    }

    pub fn taps(&self) -> &[([isize; 2], f64)] {
        &self.taps
    }

    pub fn sum(&self) -> f64 {
        self.taps.iter().map(|(_, v)| v).sum()
    }

    /// Width of the bounding box along the widest axis.
    pub fn support(&self) -> usize {
        (0..self.ndim)
            .map(|axis| {
                let lo = self.taps.iter().map(|(p, _)| p[axis]).min().unwrap_or(0);
                let hi = self.taps.iter().map(|(p, _)| p[axis]).max().unwrap_or(0);
                (hi - lo + 1) as usize
            })
            .max()
            .unwrap_or(0)
    }
}

/// Periodise `h` onto the grid, `h_d(n) = Σ_m h(n − m·d^{1/ℓ})`, and return
/// its transform. Supports wider than the grid are rejected since the
/// replicas would overlap.
pub fn periodize_filter(taps: &FilterTaps, shape: Shape, fourier: &Fourier) -> Result<FreqFilter> {
    if taps.ndim() != shape.ndim() {
        return Err(Error::dims(shape.ndim(), taps.ndim()));
    }
    let support = taps.support();
    if support > shape.side() {
        return Err(Error::FilterSupport {
            support,
            side: shape.side(),
        });
    }
    let mut buf = vec![Complex64::new(0.0, 0.0); shape.len()];
    for &(offset, value) in taps.taps() {
        buf[shape.wrap_index(offset)] += value;
    }
    fourier.forward(&mut buf);
    FreqFilter::new(shape, buf)
}
