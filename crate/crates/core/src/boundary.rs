//! Sobel boundary extraction and exact boundary-to-boundary distances.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::raster::BinaryMask;

/// Pixel coordinates `(row, col)` of a mask boundary, sorted row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundarySet {
    height: usize,
    width: usize,
    points: Vec<(usize, usize)>,
}

impl BoundarySet {
    pub fn new(height: usize, width: usize, points: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let set: BTreeSet<(usize, usize)> = points.into_iter().collect();
        if let Some(&(r, c)) = set.iter().find(|(r, c)| *r >= height || *c >= width) {
            return Err(Error::InvalidArgument(format!(
                "boundary point ({r}, {c}) outside {height}x{width}"
            )));
        }
        Ok(Self {
            height,
            width,
            points: set.into_iter().collect(),
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn points(&self) -> &[(usize, usize)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn contains(&self, point: (usize, usize)) -> bool {
        self.points.binary_search(&point).is_ok()
    }

    fn occupancy(&self) -> Vec<bool> {
        let mut grid = vec![false; self.height * self.width];
        for &(r, c) in &self.points {
            grid[r * self.width + c] = true;
        }
        grid
    }
}

/// Pixels where the 3x3 Sobel response of the mask is nonzero, using
/// replicate padding at the image border.
pub fn sobel_boundary(mask: &BinaryMask) -> BoundarySet {
    let (h, w) = mask.shape();
    let px = |r: isize, c: isize| -> i32 {
        let r = r.clamp(0, h as isize - 1) as usize;
        let c = c.clamp(0, w as isize - 1) as usize;
        i32::from(mask.get(r, c))
    };
    let mut points = Vec::new();
    for r in 0..h as isize {
        for c in 0..w as isize {
            let gx = (px(r - 1, c + 1) + 2 * px(r, c + 1) + px(r + 1, c + 1))
                - (px(r - 1, c - 1) + 2 * px(r, c - 1) + px(r + 1, c - 1));
            let gy = (px(r + 1, c - 1) + 2 * px(r + 1, c) + px(r + 1, c + 1))
                - (px(r - 1, c - 1) + 2 * px(r - 1, c) + px(r - 1, c + 1));
            if gx != 0 || gy != 0 {
                points.push((r as usize, c as usize));
            }
        }
    }
    BoundarySet {
        height: h,
        width: w,
        points,
    }
}

const FAR: i64 = i64::MAX / 4;

/// Exact squared Euclidean distance from every pixel to the nearest site.
///
/// Separable lower-envelope transform with integer arithmetic throughout, so
/// results are exact. Returns `None` when there are no sites.
pub fn squared_distance_transform(height: usize, width: usize, sites: &[bool]) -> Option<Vec<i64>> {
    assert_eq!(sites.len(), height * width);
    if !sites.iter().any(|&s| s) {
        return None;
    }

    // vertical pass: distance along the column to the nearest site
    let mut col = vec![FAR; height * width];
    for x in 0..width {
        let mut last: Option<usize> = None;
        for y in 0..height {
            if sites[y * width + x] {
                last = Some(y);
            }
            if let Some(l) = last {
                col[y * width + x] = (y - l) as i64;
            }
        }
        last = None;
        for y in (0..height).rev() {
            if sites[y * width + x] {
                last = Some(y);
            }
            if let Some(l) = last {
                let d = (l - y) as i64;
                if d < col[y * width + x] {
                    col[y * width + x] = d;
                }
            }
        }
    }

    // horizontal pass: lower envelope of parabolas f(q) + (x - q)^2
    let mut out = vec![0i64; height * width];
    let mut hull: Vec<i64> = Vec::with_capacity(width);
    // breakpoints between consecutive hull parabolas as fractions num/den, den > 0
    let mut breaks: Vec<(i64, i64)> = Vec::with_capacity(width);
    let mut f = vec![FAR; width];
    for y in 0..height {
        for x in 0..width {
            let d = col[y * width + x];
            f[x] = if d >= FAR { FAR } else { d * d };
        }
        hull.clear();
        breaks.clear();
        let intersect = |f: &[i64], p: i64, q: i64| -> (i64, i64) {
            let num = (f[q as usize] + q * q) - (f[p as usize] + p * p);
            (num, 2 * (q - p))
        };
        for q in 0..width as i64 {
            if f[q as usize] >= FAR {
                continue;
            }
            loop {
                let Some(&p) = hull.last() else {
                    hull.push(q);
                    break;
                };
                let s = intersect(&f, p, q);
                if let Some(&z) = breaks.last() {
                    // s <= z: parabola p never attains the minimum
                    if s.0 * z.1 <= z.0 * s.1 {
                        hull.pop();
                        breaks.pop();
                        continue;
                    }
                }
                breaks.push(s);
                hull.push(q);
                break;
            }
        }
        let mut k = 0;
        for x in 0..width as i64 {
            while k < breaks.len() && breaks[k].0 < x * breaks[k].1 {
                k += 1;
            }
            let q = hull[k];
            out[y * width + x as usize] = f[q as usize] + (x - q) * (x - q);
        }
    }
    Some(out)
}

/// For each pixel of `from`, the Euclidean distance (in pixels) to the
/// nearest pixel of `to`. `None` if `to` is empty.
pub fn min_distances(from: &BoundarySet, to: &BoundarySet) -> Result<Option<Vec<f64>>> {
    if (from.height, from.width) != (to.height, to.width) {
        return Err(Error::ShapeMismatch {
            left: (1, from.height, from.width),
            right: (1, to.height, to.width),
        });
    }
    let Some(sq) = squared_distance_transform(to.height, to.width, &to.occupancy()) else {
        return Ok(None);
    };
    Ok(Some(
        from.points
            .iter()
            .map(|&(r, c)| (sq[r * to.width + c] as f64).sqrt())
            .collect(),
    ))
}
