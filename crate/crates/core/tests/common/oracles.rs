//! Brute-force reference implementations written straight from the
//! definitions, sharing no code with the library.

#![allow(dead_code)]

use floodbench_core::{BinaryMask, LabelClass, TernaryLabelMap};
use rand::Rng;

pub fn random_label(rng: &mut impl Rng, h: usize, w: usize) -> TernaryLabelMap {
    // a few overlapping discs of MUST on a CANNOT background, MAY rings
    // around them, plus sprinkled noise
    let discs: Vec<(f64, f64, f64)> = (0..rng.random_range(1..4))
        .map(|_| {
            (
                rng.random_range(0.0..h as f64),
                rng.random_range(0.0..w as f64),
                rng.random_range(1.5..h as f64 / 2.0),
            )
        })
        .collect();
    let noise: f64 = rng.random_range(0.0..0.1);
    let mut codes = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            let d = discs
                .iter()
                .map(|(y, x, rad)| ((r as f64 - y).powi(2) + (c as f64 - x).powi(2)).sqrt() - rad)
                .fold(f64::INFINITY, f64::min);
            let mut code = if d < 0.0 {
                2
            } else if d < 1.5 {
                1
            } else {
                0
            };
            if rng.random_bool(noise) {
                code = rng.random_range(0..3);
            }
            codes.push(code);
        }
    }
    TernaryLabelMap::from_codes(h, w, &codes).unwrap()
}

pub fn random_pred(rng: &mut impl Rng, label: &TernaryLabelMap) -> BinaryMask {
    let (h, w) = label.shape();
    match rng.random_range(0..4) {
        // independent noise
        0 => BinaryMask::from_fn(h, w, |_, _| rng.random_bool(0.5)).unwrap(),
        // label with flips
        1 => {
            let p = rng.random_range(0.0..0.3);
            BinaryMask::from_fn(h, w, |r, c| (label.get(r, c) == LabelClass::Must) ^ rng.random_bool(p)).unwrap()
        }
        // a random rectangle
        2 => {
            let (r0, r1) = ordered(rng.random_range(0..=h), rng.random_range(0..=h));
            let (c0, c1) = ordered(rng.random_range(0..=w), rng.random_range(0..=w));
            BinaryMask::from_fn(h, w, |r, c| (r0..r1).contains(&r) && (c0..c1).contains(&c)).unwrap()
        }
        // a shifted copy of the MUST region
        _ => {
            let dr = rng.random_range(-3i64..=3);
            let dc = rng.random_range(-3i64..=3);
            BinaryMask::from_fn(h, w, |r, c| {
                let (sr, sc) = (r as i64 - dr, c as i64 - dc);
                sr >= 0
                    && sc >= 0
                    && (sr as usize) < h
                    && (sc as usize) < w
                    && label.get(sr as usize, sc as usize) == LabelClass::Must
            })
            .unwrap()
        }
    }
}

fn ordered(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

/// (TP, FP, FN, TN) by direct enumeration.
pub fn counts(pred: &BinaryMask, label: &TernaryLabelMap) -> (u64, u64, u64, u64) {
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    let (h, w) = label.shape();
    for r in 0..h {
        for c in 0..w {
            match (pred.get(r, c), label.get(r, c)) {
                (true, LabelClass::Must) => tp += 1,
                (true, LabelClass::Cannot) => fp += 1,
                (false, LabelClass::Must) => fn_ += 1,
                (false, LabelClass::Cannot) => tn += 1,
                (_, LabelClass::May) => {}
            }
        }
    }
    (tp, fp, fn_, tn)
}

pub fn error(pred: &BinaryMask, label: &TernaryLabelMap) -> f64 {
    let (_, fp, fn_, _) = counts(pred, label);
    let (h, w) = label.shape();
    (fp + fn_) as f64 / (h * w) as f64
}

pub fn f05(pred: &BinaryMask, label: &TernaryLabelMap) -> Option<f64> {
    let (tp, fp, fn_, _) = counts(pred, label);
    if tp + fp == 0 || tp + fn_ == 0 {
        return None;
    }
    let p = tp as f64 / (tp + fp) as f64;
    let r = tp as f64 / (tp + fn_) as f64;
    if p + r == 0.0 {
        return Some(0.0);
    }
    // F_beta with beta = 0.5
    let b2 = 0.25;
    Some((1.0 + b2) * p * r / (b2 * p + r))
}

/// Pixels with a nonzero 3x3 Sobel response under replicate padding.
pub fn sobel(mask: &BinaryMask) -> Vec<(usize, usize)> {
    let (h, w) = mask.shape();
    let at = |r: i64, c: i64| -> i64 {
        let r = r.clamp(0, h as i64 - 1) as usize;
        let c = c.clamp(0, w as i64 - 1) as usize;
        i64::from(mask.get(r, c))
    };
    let kx = [[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]];
    let ky = [[-1, -2, -1], [0, 0, 0], [1, 2, 1]];
    let mut out = Vec::new();
    for r in 0..h as i64 {
        for c in 0..w as i64 {
            let (mut gx, mut gy) = (0, 0);
            for i in 0..3 {
                for j in 0..3 {
                    let v = at(r + i as i64 - 1, c + j as i64 - 1);
                    gx += kx[i][j] * v;
                    gy += ky[i][j] * v;
                }
            }
            if gx * gx + gy * gy > 0 {
                out.push((r as usize, c as usize));
            }
        }
    }
    out
}

/// 1 - population sd of all-pairs minimum distances over H.
pub fn edge_coherence(pred: &BinaryMask, label: &TernaryLabelMap) -> Option<f64> {
    let (h, _) = label.shape();
    let must = BinaryMask::from_fn(label.height(), label.width(), |r, c| {
        label.get(r, c) == LabelClass::Must
    })
    .unwrap();
    let bp = sobel(pred);
    let bl = sobel(&must);
    if bp.is_empty() || bl.is_empty() {
        return None;
    }
    let deltas: Vec<f64> = bp
        .iter()
        .map(|&(r, c)| {
            bl.iter()
                .map(|&(s, t)| {
                    let dr = r as f64 - s as f64;
                    let dc = c as f64 - t as f64;
                    (dr * dr + dc * dc).sqrt()
                })
                .fold(f64::INFINITY, f64::min)
                / h as f64
        })
        .collect();
    let n = deltas.len() as f64;
    let mean = deltas.iter().sum::<f64>() / n;
    let var = deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
    Some(1.0 - var.sqrt())
}

pub fn median(xs: &[f64]) -> f64 {
    let mut s = xs.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

pub fn align(d: &[f64]) -> Vec<f64> {
    let t = median(d);
    let s = d.iter().map(|v| (v - t).abs()).sum::<f64>() / d.len() as f64;
    d.iter().map(|v| (v - t) / s).collect()
}

pub fn ssimse(d: &[f64], target: &[f64]) -> f64 {
    let a = align(d);
    let b = align(target);
    0.5 * a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / d.len() as f64
}

fn pool(x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (h, w) = (x.len() / 2, x[0].len() / 2);
    (0..h)
        .map(|r| {
            (0..w)
                .map(|c| (x[2 * r][2 * c] + x[2 * r + 1][2 * c] + x[2 * r][2 * c + 1] + x[2 * r + 1][2 * c + 1]) / 4.0)
                .collect()
        })
        .collect()
}

fn grid(v: &[f64], h: usize, w: usize) -> Vec<Vec<f64>> {
    (0..h).map(|r| v[r * w..(r + 1) * w].to_vec()).collect()
}

/// Pools the two aligned maps separately, then sums absolute forward
/// differences of their residual on each of four levels.
pub fn gradient_matching(d: &[f64], target: &[f64], h: usize, w: usize) -> f64 {
    let mut a = grid(&align(d), h, w);
    let mut b = grid(&align(target), h, w);
    let mut total = 0.0;
    for level in 0..4 {
        if level > 0 {
            a = pool(&a);
            b = pool(&b);
        }
        let (lh, lw) = (a.len(), a[0].len());
        let r = |i: usize, j: usize| a[i][j] - b[i][j];
        for i in 0..lh {
            for j in 0..lw {
                if j + 1 < lw {
                    total += (r(i, j + 1) - r(i, j)).abs();
                }
                if i + 1 < lh {
                    total += (r(i + 1, j) - r(i, j)).abs();
                }
            }
        }
    }
    total
}

/// Direct 3x3 zero-padded convolution, `w[o][i][ky][kx]` weighting input
/// pixel `(y + ky - 1, x + kx - 1)`.
pub fn conv3x3(u: &[f64], cin: usize, h: usize, w: usize, weights: &[f64], bias: &[f64]) -> Vec<f64> {
    let cout = bias.len();
    let mut out = vec![0.0; cout * h * w];
    for o in 0..cout {
        for y in 0..h {
            for x in 0..w {
                let mut acc = bias[o];
                for i in 0..cin {
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let sy = y as i64 + ky as i64 - 1;
                            let sx = x as i64 + kx as i64 - 1;
                            if sy < 0 || sx < 0 || sy >= h as i64 || sx >= w as i64 {
                                continue;
                            }
                            acc +=
                                weights[((o * cin + i) * 3 + ky) * 3 + kx] * u[(i * h + sy as usize) * w + sx as usize];
                        }
                    }
                }
                out[(o * h + y) * w + x] = acc;
            }
        }
    }
    out
}

/// Per-channel standardization followed by `gamma * xhat + beta`.
pub fn spade(a: &[f64], c: usize, h: usize, w: usize, gamma: &[f64], beta: &[f64]) -> Vec<f64> {
    let plane = h * w;
    let mut out = vec![0.0; a.len()];
    for ch in 0..c {
        let v = &a[ch * plane..(ch + 1) * plane];
        let mu = v.iter().sum::<f64>() / plane as f64;
        let sd = (v.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / plane as f64).sqrt();
        for p in 0..plane {
            let k = ch * plane + p;
            out[k] = gamma[k] * (a[k] - mu) / sd + beta[k];
        }
    }
    out
}

pub fn trimmed_mean(xs: &[f64], trim: f64) -> f64 {
    let mut s = xs.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let g = (trim * s.len() as f64).floor() as usize;
    let kept = &s[g..s.len() - g];
    kept.iter().sum::<f64>() / kept.len() as f64
}

pub fn neg_x_ln_x(q: f64) -> f64 {
    if q == 0.0 {
        0.0
    } else {
        -q * q.ln()
    }
}
