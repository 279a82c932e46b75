//! Geometric image augmentation: flips and random perspective warps.

mod image;

pub use image::Image;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FlipAxis {
    /// Mirror across the vertical axis (left and right swap).
    Horizontal,
    /// Mirror across the horizontal axis (top and bottom swap).
    Vertical,
}

pub fn flip(img: &Image, axis: FlipAxis) -> Image {
    let (h, w) = (img.height(), img.width());
    let mut out = img.clone();
    for r in 0..h {
        for c in 0..w {
            let (sr, sc) = match axis {
                FlipAxis::Horizontal => (r, w - 1 - c),
                FlipAxis::Vertical => (h - 1 - r, c),
            };
            out.pixel_mut(r, c).copy_from_slice(img.pixel(sr, sc));
        }
    }
    out
}

/// Planar projective map in homogeneous coordinates, normalized so that
/// `h[2][2] == 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Homography {
    h: [[f64; 3]; 3],
}

type Point = (f64, f64);

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

impl Homography {
    pub fn new(h: [[f64; 3]; 3]) -> Result<Self> {
        if !h.iter().flatten().all(|v| v.is_finite()) || h[2][2].abs() < 1e-12 {
            return Err(Error::DegenerateGeometry(
                "homography must be finite with nonzero h[2][2]".into(),
            ));
        }
        let s = h[2][2];
        let h = h.map(|row| row.map(|v| v / s));
        if det3(&h).abs() < 1e-12 {
            return Err(Error::DegenerateGeometry("homography is singular".into()));
        }
        Ok(Homography { h })
    }

    pub fn identity() -> Self {
        Homography {
            h: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    pub fn translation(dx: f64, dy: f64) -> Self {
        Homography {
            h: [[1.0, 0.0, dx], [0.0, 1.0, dy], [0.0, 0.0, 1.0]],
        }
    }

    pub fn matrix(&self) -> &[[f64; 3]; 3] {
        &self.h
    }

    pub fn determinant(&self) -> f64 {
        det3(&self.h)
    }

    /// Maps `(x, y)` and divides by the homogeneous coordinate. `None` when
    /// the point maps to infinity.
    pub fn project(&self, (x, y): Point) -> Option<Point> {
        project_raw(&self.h, (x, y))
    }

    pub fn inverse(&self) -> Result<Homography> {
        Homography::new(invert3(&self.h)?)
    }
}

fn project_raw(h: &[[f64; 3]; 3], (x, y): Point) -> Option<Point> {
    let w = h[2][0] * x + h[2][1] * y + h[2][2];
    if w.abs() < 1e-12 {
        return None;
    }
    Some((
        (h[0][0] * x + h[0][1] * y + h[0][2]) / w,
        (h[1][0] * x + h[1][1] * y + h[1][2]) / w,
    ))
}

fn invert3(m: &[[f64; 3]; 3]) -> Result<[[f64; 3]; 3]> {
    let det = det3(m);
    if det.abs() < 1e-12 {
        return Err(Error::DegenerateGeometry("homography is not invertible".into()));
    }
    let cof = |r0: usize, c0: usize, r1: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    let adj = [
        [cof(1, 1, 2, 2), -cof(0, 1, 2, 2), cof(0, 1, 1, 2)],
        [-cof(1, 0, 2, 2), cof(0, 0, 2, 2), -cof(0, 0, 1, 2)],
        [cof(1, 0, 2, 1), -cof(0, 0, 2, 1), cof(0, 0, 1, 1)],
    ];
    Ok(adj.map(|row| row.map(|v| v / det)))
}

fn collinear(a: Point, b: Point, c: Point) -> bool {
    let cross = (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
    let scale = [a, b, c]
        .iter()
        .flat_map(|p| [p.0.abs(), p.1.abs()])
        .fold(1.0f64, f64::max);
    cross.abs() <= 1e-10 * scale * scale
}

fn has_collinear_triple(p: &[Point; 4]) -> bool {
    [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)]
        .iter()
        .any(|&(i, j, k)| collinear(p[i], p[j], p[k]))
}

/// Solves the 8×8 linear system mapping each `src[i]` to `dst[i]`.
pub fn solve_homography(src: &[Point; 4], dst: &[Point; 4]) -> Result<Homography> {
    if has_collinear_triple(src) || has_collinear_triple(dst) {
        return Err(Error::DegenerateGeometry(
            "three of the four correspondence points are collinear".into(),
        ));
    }
    let mut a = [[0.0f64; 9]; 8];
    for (i, (&(x, y), &(u, v))) in src.iter().zip(dst).enumerate() {
        a[2 * i] = [x, y, 1.0, 0.0, 0.0, 0.0, -x * u, -y * u, u];
        a[2 * i + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -x * v, -y * v, v];
    }
    let sol = gauss_solve(a)?;
    Homography::new([
        [sol[0], sol[1], sol[2]],
        [sol[3], sol[4], sol[5]],
        [sol[6], sol[7], 1.0],
    ])
}

/// Gaussian elimination with partial pivoting on an augmented 8×9 system.
fn gauss_solve(mut a: [[f64; 9]; 8]) -> Result<[f64; 8]> {
    const N: usize = 8;
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    for col in 0..N {
        let pivot = (col..N)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("non-empty range");
        if a[pivot][col].abs() <= 1e-12 * scale {
            return Err(Error::DegenerateGeometry(
                "correspondence system is singular".into(),
            ));
        }
        a.swap(col, pivot);
        for row in col + 1..N {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..=N {
                    a[row][k] -= f * a[col][k];
                }
            }
        }
    }
    let mut x = [0.0f64; N];
    for row in (0..N).rev() {
        let tail: f64 = (row + 1..N).map(|k| a[row][k] * x[k]).sum();
        x[row] = (a[row][N] - tail) / a[row][row];
    }
    Ok(x)
}

/// Inverse-maps every output pixel through `H⁻¹` and samples the source
/// bilinearly. Sources outside the image take `fill`.
pub fn warp_perspective(img: &Image, h: &Homography, fill: u8) -> Result<Image> {
    let inv = invert3(h.matrix())?;
    let (height, width, channels) = (img.height(), img.width(), img.channels());
    let mut out = Image::filled(height, width, channels, fill)?;
    const EDGE: f64 = 1e-6;
    let (max_x, max_y) = ((width - 1) as f64, (height - 1) as f64);
    for r in 0..height {
        for c in 0..width {
            let Some((sx, sy)) = project_raw(&inv, (c as f64, r as f64)) else {
                continue;
            };
            if !(-EDGE..=max_x + EDGE).contains(&sx) || !(-EDGE..=max_y + EDGE).contains(&sy) {
                continue;
            }
            let (sx, sy) = (sx.clamp(0.0, max_x), sy.clamp(0.0, max_y));
            let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(width - 1), (y0 + 1).min(height - 1));
            let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
            let dst = out.pixel_mut(r, c);
            for (ch, d) in dst.iter_mut().enumerate() {
                let p = |yy: usize, xx: usize| img.pixel(yy, xx)[ch] as f64;
                let top = (1.0 - fx) * p(y0, x0) + fx * p(y0, x1);
                let bottom = (1.0 - fx) * p(y1, x0) + fx * p(y1, x1);
                *d = ((1.0 - fy) * top + fy * bottom).round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    Ok(out)
}

/// Corners in `(x, y)` order: top-left, top-right, bottom-right, bottom-left.
pub fn image_corners(img: &Image) -> [Point; 4] {
    let (w, h) = ((img.width() - 1) as f64, (img.height() - 1) as f64);
    [(0.0, 0.0), (w, 0.0), (w, h), (0.0, h)]
}

/// A sampled perspective distortion.
#[derive(Clone, Debug)]
pub struct Perspective {
    pub image: Image,
    pub homography: Homography,
    /// Where the image corners were sent.
    pub corners: [Point; 4],
}

/// Moves every corner inward by an independent uniform amount of at most
/// `distortion·(min(H, W) − 1)/2` per axis, so no corner passes the centre
/// of the pixel-centre box and the quad stays convex, then warps the image
/// onto that quad.
pub fn random_perspective_detailed<R: Rng + ?Sized>(
    img: &Image,
    distortion: f64,
    rng: &mut R,
) -> Result<Perspective> {
    if !(0.0..1.0).contains(&distortion) {
        return Err(Error::Domain(format!(
            "distortion must lie in [0, 1), got {distortion}"
        )));
    }
    let src = image_corners(img);
    let reach = distortion * (img.height().min(img.width()) - 1) as f64 / 2.0;
    let inward = [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)];
    let mut dst = src;
    for (p, (sx, sy)) in dst.iter_mut().zip(inward) {
        let dx: f64 = rng.gen_range(0.0..=1.0) * reach;
        let dy: f64 = rng.gen_range(0.0..=1.0) * reach;
        *p = (p.0 + sx * dx, p.1 + sy * dy);
    }
    if reach == 0.0 {
        return Ok(Perspective {
            image: img.clone(),
            homography: Homography::identity(),
            corners: src,
        });
    }
    let homography = solve_homography(&src, &dst)?;
    let image = warp_perspective(img, &homography, 0)?;
    Ok(Perspective {
        image,
        homography,
        corners: dst,
    })
}

pub fn random_perspective<R: Rng + ?Sized>(img: &Image, distortion: f64, rng: &mut R) -> Result<Image> {
    random_perspective_detailed(img, distortion, rng).map(|p| p.image)
}

/// Independent application probabilities for each transform.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentConfig {
    pub hflip_prob: f64,
    pub vflip_prob: f64,
    pub perspective_prob: f64,
    pub distortion: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            hflip_prob: 0.5,
            vflip_prob: 0.0,
            perspective_prob: 0.5,
            distortion: 0.3,
        }
    }
}

impl AugmentConfig {
    pub fn disabled() -> Self {
        AugmentConfig {
            hflip_prob: 0.0,
            vflip_prob: 0.0,
            perspective_prob: 0.0,
            distortion: 0.0,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.hflip_prob <= 0.0 && self.vflip_prob <= 0.0 && self.perspective_prob <= 0.0
    }
}

/// Horizontal flip, vertical flip, then perspective, each gated by its own
/// draw. Three gate draws are consumed on every call.
pub fn augment_pipeline<R: Rng + ?Sized>(img: &Image, cfg: &AugmentConfig, rng: &mut R) -> Result<Image> {
    let gates: [f64; 3] = [rng.gen(), rng.gen(), rng.gen()];
    let mut out = img.clone();
    if gates[0] < cfg.hflip_prob {
        out = flip(&out, FlipAxis::Horizontal);
    }
    if gates[1] < cfg.vflip_prob {
        out = flip(&out, FlipAxis::Vertical);
    }
    if gates[2] < cfg.perspective_prob {
        out = random_perspective(&out, cfg.distortion, rng)?;
    }
    Ok(out)
}

/// Per-image random stream derived from `(seed, epoch, index)`.
pub fn image_rng(seed: u64, epoch: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((epoch as u64) << 32) ^ index as u64);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient_image(h: usize, w: usize) -> Image {
        let mut px = Vec::with_capacity(h * w * 3);
        for r in 0..h {
            for c in 0..w {
                px.extend([(r * 17 + c * 5) as u8, (c * 31) as u8, ((r * 7) ^ c) as u8]);
            }
        }
        Image::new(h, w, 3, px).unwrap()
    }

    #[test]
    fn flip_examples() {
        let img = Image::new(1, 2, 1, vec![10, 20]).unwrap();
        assert_eq!(flip(&img, FlipAxis::Horizontal).pixels(), &[20, 10]);
        let img = Image::new(2, 1, 1, vec![10, 20]).unwrap();
        assert_eq!(flip(&img, FlipAxis::Vertical).pixels(), &[20, 10]);
        let img = gradient_image(5, 7);
        for axis in [FlipAxis::Horizontal, FlipAxis::Vertical] {
            assert_eq!(flip(&flip(&img, axis), axis), img);
        }
    }

    #[test]
    fn homography_identity_and_translation() {
        let sq = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
        let h = solve_homography(&sq, &sq).unwrap();
        for (i, row) in h.matrix().iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((v - e).abs() < 1e-9);
            }
        }
        let shifted = sq.map(|(x, y)| (x + 5.0, y));
        let t = solve_homography(&sq, &shifted).unwrap();
        assert!((t.matrix()[0][2] - 5.0).abs() < 1e-9);
        assert!(t.matrix()[1][2].abs() < 1e-9);
    }

    #[test]
    fn homography_rejects_collinear_points() {
        let line = [(0.0, 0.0), (1.0, 1.0), (2.0, 2.0), (0.0, 5.0)];
        let sq = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
        assert!(matches!(
            solve_homography(&line, &sq),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn homography_inverse_composes_to_identity() {
        let src = [(0.0, 0.0), (10.0, 0.0), (10.0, 8.0), (0.0, 8.0)];
        let dst = [(1.0, 0.5), (9.0, 1.0), (9.5, 7.0), (0.5, 7.5)];
        let h = solve_homography(&src, &dst).unwrap();
        let inv = h.inverse().unwrap();
        for p in src {
            let q = inv.project(h.project(p).unwrap()).unwrap();
            assert!((q.0 - p.0).abs() < 1e-9 && (q.1 - p.1).abs() < 1e-9);
        }
    }

    #[test]
    fn warp_identity_is_exact() {
        let img = gradient_image(9, 6);
        assert_eq!(warp_perspective(&img, &Homography::identity(), 0).unwrap(), img);
    }

    #[test]
    fn warp_integer_translation_shifts_columns() {
        let img = Image::new(2, 2, 1, vec![1, 2, 3, 4]).unwrap();
        let out = warp_perspective(&img, &Homography::translation(1.0, 0.0), 99).unwrap();
        assert_eq!(out.pixels(), &[99, 1, 99, 3]);
    }

    #[test]
    fn singular_homography_is_rejected() {
        assert!(Homography::new([[1.0, 2.0, 0.0], [2.0, 4.0, 0.0], [0.0, 0.0, 1.0]]).is_err());
    }

    #[test]
    fn zero_distortion_is_identity() {
        let img = gradient_image(12, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert_eq!(random_perspective(&img, 0.0, &mut rng).unwrap(), img);
        assert!(random_perspective(&img, 1.0, &mut rng).is_err());
    }

    #[test]
    fn perspective_is_seeded() {
        let img = gradient_image(16, 16);
        let a = random_perspective(&img, 0.3, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let b = random_perspective(&img, 0.3, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, img);
    }

    #[test]
    fn perspective_corners_reproject() {
        let img = gradient_image(20, 30);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = random_perspective_detailed(&img, 0.3, &mut rng).unwrap();
        let resolved = solve_homography(&image_corners(&img), &p.corners).unwrap();
        for (src, dst) in image_corners(&img).iter().zip(&p.corners) {
            for h in [&p.homography, &resolved] {
                let q = h.project(*src).unwrap();
                assert!((q.0 - dst.0).abs() < 1e-6 && (q.1 - dst.1).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn pipeline_gates() {
        let img = gradient_image(8, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(augment_pipeline(&img, &AugmentConfig::disabled(), &mut rng).unwrap(), img);
        let only_h = AugmentConfig {
            hflip_prob: 1.0,
            ..AugmentConfig::disabled()
        };
        assert_eq!(
            augment_pipeline(&img, &only_h, &mut rng).unwrap(),
            flip(&img, FlipAxis::Horizontal)
        );
        let cfg = AugmentConfig::default();
        let a = augment_pipeline(&img, &cfg, &mut image_rng(5, 2, 3)).unwrap();
        let b = augment_pipeline(&img, &cfg, &mut image_rng(5, 2, 3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn image_streams_differ() {
        let mut a = image_rng(1, 0, 0);
        let mut b = image_rng(1, 0, 1);
        let mut c = image_rng(1, 1, 0);
        let (x, y, z): (u64, u64, u64) = (a.gen(), b.gen(), c.gen());
        assert!(x != y && x != z && y != z);
    }
}
