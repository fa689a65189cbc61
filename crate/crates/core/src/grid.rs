//! Pixel grids, masks and the finite-difference machinery shared by every
//! other module.
//!
//! Rasters are stored column by column: pixel `(x, y)` lives at index
//! `x * height + y`. The grid spacing is 1 in both directions and all
//! stencils use reflecting (homogeneous Neumann) boundaries.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{DbiError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Raster {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(DbiError::invalid("raster dimensions must be positive"));
        }
        if data.len() != width * height {
            return Err(DbiError::invalid(format!(
                "raster data has length {}, expected {}",
                data.len(),
                width * height
            )));
        }
        Ok(Raster { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "raster dimensions must be positive");
        Raster { width, height, data: vec![value; width * height] }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn zeros_like(other: &Raster) -> Self {
        Self::zeros(other.width, other.height)
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut r = Self::zeros(width, height);
        for x in 0..width {
            for y in 0..height {
                r.data[x * height + y] = f(x, y);
            }
        }
        r
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        x * self.height + y
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[x * self.height + y]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[x * self.height + y] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Raster {
        Raster { width: self.width, height: self.height, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Extracts row `y` as a `width x 1` raster.
    pub fn row(&self, y: usize) -> Raster {
        Raster::from_fn(self.width, 1, |x, _| self.get(x, y))
    }

    /// Box-filter downsampling by an integer factor; trailing pixels that do
    /// not fill a whole block are dropped.
    pub fn downsample(&self, factor: usize) -> Result<Raster> {
        if factor == 0 || factor > self.width || factor > self.height {
            return Err(DbiError::invalid(format!("invalid downsampling factor {factor}")));
        }
        let (w, h) = (self.width / factor, self.height / factor);
        let norm = (factor * factor) as f64;
        Ok(Raster::from_fn(w, h, |x, y| {
            let mut acc = 0.0;
            for dx in 0..factor {
                for dy in 0..factor {
                    acc += self.get(x * factor + dx, y * factor + dy);
                }
            }
            acc / norm
        }))
    }

    pub(crate) fn check_same_dims(&self, other_dims: (usize, usize)) -> Result<()> {
        if self.dims() != other_dims {
            return Err(DbiError::DimensionMismatch { expected: self.dims(), actual: other_dims });
        }
        Ok(())
    }
}

/// Binary inpainting mask; a set bit marks a known pixel.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn empty(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "mask dimensions must be positive");
        Mask { width, height, bits: vec![false; width * height] }
    }

    pub fn full(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "mask dimensions must be positive");
        Mask { width, height, bits: vec![true; width * height] }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 || bits.len() != width * height {
            return Err(DbiError::invalid("mask bits do not match dimensions"));
        }
        Ok(Mask { width, height, bits })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = Self::empty(width, height);
        for x in 0..width {
            for y in 0..height {
                m.bits[x * height + y] = f(x, y);
            }
        }
        m
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    #[inline]
    pub fn is_set(&self, i: usize) -> bool {
        self.bits[i]
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[x * self.height + y]
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        self.bits[i] = value;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn is_full(&self) -> bool {
        self.bits.iter().all(|&b| b)
    }

    pub fn density(&self) -> f64 {
        self.count() as f64 / self.bits.len() as f64
    }

    /// Indices of set pixels in ascending order.
    pub fn known(&self) -> Vec<usize> {
        self.bits.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect()
    }

    /// Indices of unset pixels in ascending order.
    pub fn unknown(&self) -> Vec<usize> {
        self.bits.iter().enumerate().filter(|(_, &b)| !b).map(|(i, _)| i).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub sigma_n: f64,
    pub seed: u64,
}

/// Calls `visit` for each existing 4-neighbour of pixel `i`.
#[inline]
pub(crate) fn for_each_neighbor(i: usize, width: usize, height: usize, mut visit: impl FnMut(usize)) {
    let y = i % height;
    let x = i / height;
    if y > 0 {
        visit(i - 1);
    }
    if y + 1 < height {
        visit(i + 1);
    }
    if x > 0 {
        visit(i - height);
    }
    if x + 1 < width {
        visit(i + height);
    }
}

#[inline]
pub(crate) fn neighbor_count(i: usize, width: usize, height: usize) -> usize {
    let y = i % height;
    let x = i / height;
    (y > 0) as usize + (y + 1 < height) as usize + (x > 0) as usize + (x + 1 < width) as usize
}

/// Value of `(L v)_i` for the negated five-point Laplacian with reflecting
/// boundaries.
#[inline]
pub(crate) fn neg_laplacian_at(v: &[f64], i: usize, width: usize, height: usize) -> f64 {
    let c = v[i];
    let mut acc = 0.0;
    for_each_neighbor(i, width, height, |j| acc += c - v[j]);
    acc
}

pub(crate) fn neg_laplacian_slice(v: &[f64], out: &mut [f64], width: usize, height: usize) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = neg_laplacian_at(v, i, width, height);
    }
}

/// `L f`: the five-point stencil of the negated Laplacian. Missing
/// neighbours at the border contribute nothing, which is the mirrored
/// (homogeneous Neumann) discretisation.
pub fn apply_neg_laplacian(f: &Raster) -> Raster {
    let mut out = Raster::zeros_like(f);
    neg_laplacian_slice(&f.data, &mut out.data, f.width, f.height);
    out
}

/// `L (L f)`, the discrete bilaplacian with both reflecting conditions.
pub fn apply_bilaplacian(f: &Raster) -> Raster {
    apply_neg_laplacian(&apply_neg_laplacian(f))
}

/// Reflects an out-of-range index back into `0..n` (half-sample symmetric).
#[inline]
fn mirror(mut i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    i = i.rem_euclid(period);
    if i >= n {
        i = period - 1 - i;
    }
    i as usize
}

/// Normalised sampled Gaussian truncated at `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as usize;
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|j| {
            let t = j as f64 - radius as f64;
            (-t * t / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|w| *w /= s);
    k
}

/// Separable Gaussian convolution with mirrored boundaries.
pub fn gaussian_convolve(f: &Raster, sigma: f64) -> Result<Raster> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(DbiError::invalid(format!("gaussian sigma must be non-negative, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(f.clone());
    }
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as isize;
    let (w, h) = f.dims();

    // along y (contiguous columns)
    let mut tmp = Raster::zeros(w, h);
    for x in 0..w {
        let col = &f.data[x * h..(x + 1) * h];
        for y in 0..h {
            let mut acc = 0.0;
            for (k, wk) in kernel.iter().enumerate() {
                acc += wk * col[mirror(y as isize + k as isize - radius, h)];
            }
            tmp.data[x * h + y] = acc;
        }
    }
    // along x
    let mut out = Raster::zeros(w, h);
    for x in 0..w {
        for y in 0..h {
            let mut acc = 0.0;
            for (k, wk) in kernel.iter().enumerate() {
                acc += wk * tmp.data[mirror(x as isize + k as isize - radius, w) * h + y];
            }
            out.data[x * h + y] = acc;
        }
    }
    Ok(out)
}

/// Adds i.i.d. N(0, sigma_n^2) noise drawn from ChaCha20 seeded with
/// `spec.seed`, one draw per pixel in storage order. Values are not clipped.
pub fn add_gaussian_noise(f: &Raster, spec: NoiseSpec) -> Result<Raster> {
    if !(spec.sigma_n >= 0.0) || !spec.sigma_n.is_finite() {
        return Err(DbiError::invalid("noise standard deviation must be non-negative"));
    }
    if spec.sigma_n == 0.0 {
        return Ok(f.clone());
    }
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let mut out = f.clone();
    for v in out.data.iter_mut() {
        let n: f64 = StandardNormal.sample(&mut rng);
        *v += spec.sigma_n * n;
    }
    Ok(out)
}

pub fn mse(a: &Raster, b: &Raster) -> Result<f64> {
    a.check_same_dims(b.dims())?;
    let s: f64 = a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(s / a.len() as f64)
}

pub fn mse_on_mask(a: &Raster, b: &Raster, m: &Mask) -> Result<f64> {
    a.check_same_dims(b.dims())?;
    a.check_same_dims(m.dims())?;
    let mut s = 0.0;
    let mut n = 0usize;
    for i in 0..a.len() {
        if m.is_set(i) {
            let d = a.data[i] - b.data[i];
            s += d * d;
            n += 1;
        }
    }
    if n == 0 {
        return Err(DbiError::EmptyMask);
    }
    Ok(s / n as f64)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
