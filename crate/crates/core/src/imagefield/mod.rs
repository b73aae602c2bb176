//! Grey-level data `g` on a box: pixel rasters with multilinear
//! interpolation between pixel centres, or closed-form test functions.

pub mod pgm;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::DomainBox;
use crate::Real;

/// Lattice size per axis used to sample analytic fields.
pub const ANALYTIC_LATTICE: usize = 512;

/// Closed-form test images.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Analytic<T> {
    /// `0.5(1 + tanh(s(x_0 − 0.5)))`.
    Tanh1d { steepness: T },
    /// `a[2 + tanh(s(r − r0)) − tanh(s(r + r0))]`, `r = |x − (0.5, …)|`.
    Circle2d { steepness: T, radius: T, amplitude: T },
    Constant(T),
}

impl<T: Real> Analytic<T> {
    pub fn tanh1d(steepness: T) -> Self {
        Analytic::Tanh1d { steepness }
    }

    /// The dark-disc image with `s = 50`, `r0 = 0.05`, `a = 0.49`.
    pub fn circle2d() -> Self {
        Analytic::Circle2d {
            steepness: T::lit(50.0),
            radius: T::lit(0.05),
            amplitude: T::lit(0.49),
        }
    }

    fn eval<const D: usize>(&self, x: &[T; D]) -> T {
        let half = T::lit(0.5);
        match *self {
            Analytic::Tanh1d { steepness } => half * (T::one() + (steepness * (x[0] - half)).tanh()),
            Analytic::Circle2d {
                steepness,
                radius,
                amplitude,
            } => {
                let r = radius_from_center(x);
                amplitude * (T::lit(2.0) + (steepness * (r - radius)).tanh() - (steepness * (r + radius)).tanh())
            }
            Analytic::Constant(c) => c,
        }
    }

    fn grad<const D: usize>(&self, x: &[T; D]) -> [T; D] {
        let half = T::lit(0.5);
        let mut g = [T::zero(); D];
        match *self {
            Analytic::Tanh1d { steepness } => {
                let t = (steepness * (x[0] - half)).tanh();
                g[0] = half * steepness * (T::one() - t * t);
            }
            Analytic::Circle2d {
                steepness,
                radius,
                amplitude,
            } => {
                let r = radius_from_center(x);
                if r > T::zero() {
                    let a = (steepness * (r - radius)).tanh();
                    let b = (steepness * (r + radius)).tanh();
                    let dr = amplitude * steepness * ((T::one() - a * a) - (T::one() - b * b));
                    for k in 0..D {
                        g[k] = dr * (x[k] - half) / r;
                    }
                }
            }
            Analytic::Constant(_) => {}
        }
        g
    }
}

fn radius_from_center<T: Real, const D: usize>(x: &[T; D]) -> T {
    x.iter()
        .map(|&v| (v - T::lit(0.5)) * (v - T::lit(0.5)))
        .sum::<T>()
        .sqrt()
}

/// Pixel values on a regular grid of cells over the domain, sample `i`
/// located at the centre of cell `i`. Storage is axis-0 fastest with axis 1
/// running from the bottom of the domain upwards.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster<T, const D: usize> {
    pub dims: [usize; D],
    pub values: Vec<T>,
}

impl<T: Real, const D: usize> Raster<T, D> {
    fn index(&self, idx: &[usize; D]) -> usize {
        let mut flat = 0;
        for k in (0..D).rev() {
            flat = flat * self.dims[k] + idx[k];
        }
        flat
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Source<T, const D: usize> {
    Raster(Raster<T, D>),
    Analytic(Analytic<T>),
}

/// Continuous grey-level field `g` (optionally multiplied by a scale `L`).
#[derive(Debug, Clone, PartialEq)]
pub struct ImageField<T, const D: usize> {
    source: Source<T, D>,
    domain: DomainBox<T, D>,
    scale: T,
    noise_amplitude: T,
    noise_seed: Option<u64>,
}

/// Extremes of `|∇g|` over a sampling lattice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradStats<T> {
    pub grad_max: T,
    pub grad_min: T,
    /// Sampling points per axis.
    pub resolution: usize,
}

impl<T: Real, const D: usize> ImageField<T, D> {
    pub fn analytic(kind: Analytic<T>, domain: DomainBox<T, D>) -> Self {
        ImageField {
            source: Source::Analytic(kind),
            domain,
            scale: T::one(),
            noise_amplitude: T::zero(),
            noise_seed: None,
        }
    }

    pub fn from_raster(raster: Raster<T, D>, domain: DomainBox<T, D>) -> Result<Self> {
        let n: usize = raster.dims.iter().product();
        if n == 0 || n != raster.values.len() {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: raster.values.len(),
            });
        }
        Ok(ImageField {
            source: Source::Raster(raster),
            domain,
            scale: T::one(),
            noise_amplitude: T::zero(),
            noise_seed: None,
        })
    }

    pub fn source(&self) -> &Source<T, D> {
        &self.source
    }

    pub fn domain(&self) -> &DomainBox<T, D> {
        &self.domain
    }

    pub fn scale(&self) -> T {
        self.scale
    }

    pub fn noise(&self) -> (T, Option<u64>) {
        (self.noise_amplitude, self.noise_seed)
    }

    /// Same data multiplied by `l` (accumulates with any existing scale).
    pub fn scaled(&self, l: T) -> Self {
        let mut out = self.clone();
        out.scale = self.scale * l;
        out
    }

    /// `g(x)`; points outside the box are clamped to it.
    pub fn eval(&self, x: &[T; D]) -> T {
        let x = self.clamp_debug(x);
        self.scale
            * match &self.source {
                Source::Analytic(a) => a.eval(&x),
                Source::Raster(r) => self.raster_eval(r, &x, false).0,
            }
    }

    /// `∇g(x)`; on raster cell interfaces the lower-index cell is used.
    pub fn eval_grad(&self, x: &[T; D]) -> [T; D] {
        let x = self.clamp_debug(x);
        let g = match &self.source {
            Source::Analytic(a) => a.grad(&x),
            Source::Raster(r) => self.raster_eval(r, &x, true).1,
        };
        g.map(|v| v * self.scale)
    }

    fn clamp_debug(&self, x: &[T; D]) -> [T; D] {
        debug_assert!(
            self.domain.distance(x) <= T::lit(1e-6) * self.domain.diameter(),
            "image evaluated well outside its domain"
        );
        self.domain.clamp(x)
    }

    fn raster_eval(&self, r: &Raster<T, D>, x: &[T; D], want_grad: bool) -> (T, [T; D]) {
        // Per-axis cell index `i0`, local coordinate `t`, and whether the
        // point lies in the constant-extrapolated margin.
        let mut i0 = [0usize; D];
        let mut t = [T::zero(); D];
        let mut inv_h = [T::zero(); D];
        let mut live = [false; D];
        for k in 0..D {
            let n = r.dims[k];
            let h = self.domain.extent(k) / T::from_usize_lossy(n);
            inv_h[k] = T::one() / h;
            if n == 1 {
                continue;
            }
            let s = (x[k] - self.domain.lo[k]) / h - T::lit(0.5);
            let top = T::from_usize_lossy(n - 1);
            if s <= T::zero() {
                i0[k] = 0;
                t[k] = T::zero();
            } else if s >= top {
                i0[k] = n - 2;
                t[k] = T::one();
            } else {
                live[k] = true;
                let c = s.ceil().to_usize().unwrap_or(1).max(1) - 1;
                i0[k] = c.min(n - 2);
                t[k] = s - T::from_usize_lossy(i0[k]);
            }
        }
        let mut value = T::zero();
        let mut grad = [T::zero(); D];
        for corner in 0..(1usize << D) {
            let mut idx = [0usize; D];
            let mut w = T::one();
            let mut dw = [T::one(); D];
            for k in 0..D {
                let bit = (corner >> k) & 1;
                let n = r.dims[k];
                idx[k] = if n == 1 { 0 } else { i0[k] + bit };
                let (wk, dk) = if n == 1 {
                    (if bit == 0 { T::one() } else { T::zero() }, T::zero())
                } else if bit == 1 {
                    (t[k], T::one())
                } else {
                    (T::one() - t[k], -T::one())
                };
                w *= wk;
                for (j, d) in dw.iter_mut().enumerate() {
                    *d *= if j == k { dk } else { wk };
                }
            }
            if w == T::zero() && !want_grad {
                continue;
            }
            let v = r.values[r.index(&idx)];
            value += w * v;
            if want_grad {
                for k in 0..D {
                    grad[k] += dw[k] * v;
                }
            }
        }
        for k in 0..D {
            grad[k] = if live[k] { grad[k] * inv_h[k] } else { T::zero() };
        }
        (value, grad)
    }

    /// Max and min of `|∇g|` at the centres of a sampling lattice:
    /// `samples_per_cell` points per axis in each interpolation cell of a
    /// raster, or the fixed 512-per-axis lattice for analytic fields.
    pub fn grad_stats(&self, samples_per_cell: usize) -> GradStats<T> {
        let spc = samples_per_cell.max(1);
        let mut dims = [ANALYTIC_LATTICE; D];
        let mut offsets = [T::zero(); D];
        let mut steps = [T::zero(); D];
        match &self.source {
            Source::Analytic(_) => {
                for k in 0..D {
                    steps[k] = self.domain.extent(k) / T::from_usize_lossy(dims[k]);
                    offsets[k] = self.domain.lo[k] + T::lit(0.5) * steps[k];
                }
            }
            Source::Raster(r) => {
                for k in 0..D {
                    let n = r.dims[k];
                    let h = self.domain.extent(k) / T::from_usize_lossy(n);
                    if n == 1 {
                        dims[k] = 1;
                        steps[k] = h;
                        offsets[k] = self.domain.lo[k] + T::lit(0.5) * h;
                    } else {
                        dims[k] = (n - 1) * spc;
                        steps[k] = h / T::from_usize_lossy(spc);
                        offsets[k] = self.domain.lo[k] + T::lit(0.5) * h + T::lit(0.5) * steps[k];
                    }
                }
            }
        }
        let mut gmax = T::zero();
        let mut gmin = T::infinity();
        for_each_lattice_point(&dims, |idx| {
            let mut x = [T::zero(); D];
            for k in 0..D {
                x[k] = offsets[k] + T::from_usize_lossy(idx[k]) * steps[k];
            }
            let g = self.eval_grad(&x);
            let norm = g.iter().map(|&v| v * v).sum::<T>().sqrt();
            gmax = gmax.max(norm);
            gmin = gmin.min(norm);
        });
        GradStats {
            grad_max: gmax,
            grad_min: gmin,
            resolution: dims.iter().copied().max().unwrap_or(0),
        }
    }

    /// Values at the centres of an `dims` cell grid (axis-0 fastest).
    pub fn sample(&self, dims: [usize; D]) -> Raster<T, D> {
        let mut values = Vec::with_capacity(dims.iter().product());
        for_each_lattice_point(&dims, |idx| {
            let mut x = [T::zero(); D];
            for k in 0..D {
                let h = self.domain.extent(k) / T::from_usize_lossy(dims[k]);
                x[k] = self.domain.lo[k] + (T::from_usize_lossy(idx[k]) + T::lit(0.5)) * h;
            }
            values.push(self.eval(&x));
        });
        Raster { dims, values }
    }

    /// Adds i.i.d. uniform `(−a, a)` noise per pixel. Analytic fields are
    /// first sampled onto the 512-per-axis lattice. Deterministic in `seed`.
    pub fn add_noise(&self, amplitude: T, seed: u64) -> Result<Self> {
        if !(amplitude >= T::zero()) {
            return Err(Error::InvalidParameter(format!("noise amplitude {amplitude} < 0")));
        }
        if amplitude == T::zero() {
            return Ok(self.clone());
        }
        let mut raster = match &self.source {
            Source::Raster(r) => r.clone(),
            Source::Analytic(_) => self.scaled(T::one() / self.scale).sample([ANALYTIC_LATTICE; D]),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = amplitude.as_f64();
        for v in raster.values.iter_mut() {
            *v += T::lit(rng.gen_range(-a..a));
        }
        Ok(ImageField {
            source: Source::Raster(raster),
            domain: self.domain,
            scale: self.scale,
            noise_amplitude: amplitude,
            noise_seed: Some(seed),
        })
    }
}

impl<T: Real> ImageField<T, 2> {
    /// Loads an 8-bit grey-scale PGM; values are divided by `maxval` and
    /// image row 0 maps to the top of `domain`.
    pub fn load_pgm(path: impl AsRef<Path>, domain: DomainBox<T, 2>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_pgm(&pgm::parse(&bytes)?, domain)
    }

    pub fn from_pgm(img: &pgm::Pgm, domain: DomainBox<T, 2>) -> Result<Self> {
        let max = T::from_usize_lossy(img.maxval as usize);
        let mut values = Vec::with_capacity(img.width * img.height);
        for row in (0..img.height).rev() {
            for col in 0..img.width {
                values.push(T::from_usize_lossy(img.pixels[row * img.width + col] as usize) / max);
            }
        }
        Self::from_raster(
            Raster {
                dims: [img.width, img.height],
                values,
            },
            domain,
        )
    }
}

impl<T: Real> ImageField<T, 1> {
    /// Loads a single-row PGM as a 1D profile.
    pub fn load_pgm(path: impl AsRef<Path>, domain: DomainBox<T, 1>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let img = pgm::parse(&bytes)?;
        if img.height != 1 {
            return Err(Error::InvalidParameter(format!(
                "a 1D image must have exactly one row, found {}",
                img.height
            )));
        }
        let max = T::from_usize_lossy(img.maxval as usize);
        let values = img.pixels.iter().map(|&p| T::from_usize_lossy(p as usize) / max).collect();
        Self::from_raster(
            Raster {
                dims: [img.width],
                values,
            },
            domain,
        )
    }
}

fn for_each_lattice_point<const D: usize>(dims: &[usize; D], mut f: impl FnMut(&[usize; D])) {
    if dims.contains(&0) {
        return;
    }
    let mut idx = [0usize; D];
    loop {
        f(&idx);
        let mut k = 0;
        loop {
            if k == D {
                return;
            }
            idx[k] += 1;
            if idx[k] < dims[k] {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit2() -> DomainBox<f64, 2> {
        DomainBox::unit()
    }

    #[test]
    fn pgm_normalization_and_orientation() {
        let img = pgm::parse(b"P2\n2 2\n255\n0 255\n255 0\n").unwrap();
        let f = ImageField::<f64, 2>::from_pgm(&img, unit2()).unwrap();
        // Top-left pixel centre is (0.25, 0.75).
        assert_eq!(f.eval(&[0.25, 0.75]), 0.0);
        assert_eq!(f.eval(&[0.75, 0.75]), 1.0);
        assert_eq!(f.eval(&[0.25, 0.25]), 1.0);
        assert_eq!(f.eval(&[0.75, 0.25]), 0.0);
        // Constant extrapolation to the corner.
        assert_eq!(f.eval(&[0.0, 1.0]), 0.0);
    }

    #[test]
    fn constant_image() {
        let img = pgm::Pgm {
            width: 3,
            height: 4,
            maxval: 255,
            pixels: vec![128; 12],
        };
        let f = ImageField::<f64, 2>::from_pgm(&img, unit2()).unwrap();
        for x in [[0.1, 0.9], [0.5, 0.5], [1.0, 0.0]] {
            assert_eq!(f.eval(&x), 128.0 / 255.0);
            assert_eq!(f.eval_grad(&x), [0.0, 0.0]);
        }
        let s = f.grad_stats(2);
        assert_eq!((s.grad_max, s.grad_min), (0.0, 0.0));
    }

    #[test]
    fn bilinear_gradient() {
        let r = Raster {
            dims: [2, 2],
            values: vec![0.0, 1.0, 0.0, 1.0],
        };
        let f = ImageField::from_raster(r, unit2()).unwrap();
        let g = f.eval_grad(&[0.5, 0.5]);
        assert!((g[0] - 2.0).abs() < 1e-14);
        assert_eq!(g[1], 0.0);
    }

    #[test]
    fn tanh_values() {
        let f = ImageField::<f64, 1>::analytic(Analytic::tanh1d(100.0), DomainBox::unit());
        assert_eq!(f.eval(&[0.5]), 0.5);
        assert!((f.eval(&[1.0]) - 0.5 * (1.0 + 50f64.tanh())).abs() < 1e-15);
        assert_eq!(f.eval_grad(&[0.5])[0], 50.0);
        let s = f.grad_stats(1);
        assert!((s.grad_max - 50.0).abs() < 0.5);
        let f20 = ImageField::<f64, 1>::analytic(Analytic::tanh1d(20.0), DomainBox::unit());
        assert!((f20.grad_stats(1).grad_max - 10.0).abs() < 0.1);
    }

    #[test]
    fn circle_profile() {
        let f = ImageField::<f64, 2>::analytic(Analytic::circle2d(), unit2());
        let centre = f.eval(&[0.5, 0.5]);
        assert!(centre < 0.02);
        let edge = f.eval(&[0.55, 0.5]);
        assert!((edge - 0.49 * (2.0 - 5f64.tanh())).abs() < 1e-12);
        assert!(f.eval(&[0.0, 0.0]) > 0.97);
    }

    #[test]
    fn noise_is_bounded_and_seeded() {
        let f = ImageField::<f64, 1>::analytic(Analytic::Constant(0.5), DomainBox::unit());
        assert_eq!(f.add_noise(0.0, 1).unwrap(), f);
        let a = f.add_noise(0.25, 42).unwrap();
        let b = f.add_noise(0.25, 42).unwrap();
        assert_eq!(a, b);
        let Source::Raster(r) = a.source() else { panic!() };
        assert!(r.values.iter().all(|v| (v - 0.5).abs() < 0.25));
        assert!(r.values.iter().any(|v| (v - 0.5).abs() > 0.2));
    }

    #[test]
    fn scaling_multiplies_gradients() {
        let f = ImageField::<f64, 1>::analytic(Analytic::tanh1d(20.0), DomainBox::unit());
        let s1 = f.grad_stats(1);
        let s2 = f.scaled(4.0).grad_stats(1);
        assert_eq!(s2.grad_max, 4.0 * s1.grad_max);
        assert_eq!(s2.grad_min, 4.0 * s1.grad_min);
    }
}
