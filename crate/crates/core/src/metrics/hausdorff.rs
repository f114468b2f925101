use super::Mask;
use crate::error::{Error, Result};

/// Foreground pixels with a 4-neighbour outside the mask (the image border
/// counts as outside).
pub fn surface(m: &Mask) -> Mask {
    let (h, w) = (m.height(), m.width());
    let mut out = vec![false; h * w];
    for y in 0..h {
        for x in 0..w {
            if !m.get(y, x) {
                continue;
            }
            let interior = y > 0
                && x > 0
                && y + 1 < h
                && x + 1 < w
                && m.get(y - 1, x)
                && m.get(y + 1, x)
                && m.get(y, x - 1)
                && m.get(y, x + 1);
            out[y * w + x] = !interior;
        }
    }
    Mask::new(h, w, out).expect("same shape")
}

/// Squared distance transform of a 1-D sampled function (lower envelope of
/// parabolas). Infinite entries are not sites.
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let sites: Vec<usize> = (0..n).filter(|&q| f[q].is_finite()).collect();
    if sites.is_empty() {
        out.fill(f64::INFINITY);
        return;
    }
    let mut k = 0;
    v[0] = sites[0];
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    let sq = |q: usize| (q * q) as f64;
    for &q in &sites[1..] {
        loop {
            let p = v[k];
            let s = ((f[q] + sq(q)) - (f[p] + sq(p))) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] {
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Exact squared Euclidean distance from every pixel to the nearest set pixel.
fn squared_edt(m: &Mask) -> Vec<f64> {
    let (h, w) = (m.height(), m.width());
    let n = h.max(w);
    let (mut v, mut z) = (vec![0usize; n], vec![0.0; n + 1]);
    let mut col_in = vec![0.0; h];
    let mut col_out = vec![0.0; h];
    let mut grid = vec![f64::INFINITY; h * w];
    for x in 0..w {
        for y in 0..h {
            col_in[y] = if m.get(y, x) { 0.0 } else { f64::INFINITY };
        }
        edt_1d(&col_in, &mut col_out, &mut v, &mut z);
        for y in 0..h {
            grid[y * w + x] = col_out[y];
        }
    }
    let mut row_out = vec![0.0; w];
    for y in 0..h {
        edt_1d(&grid[y * w..(y + 1) * w], &mut row_out, &mut v, &mut z);
        grid[y * w..(y + 1) * w].copy_from_slice(&row_out);
    }
    grid
}

/// Linear-interpolation percentile of sorted values, `q` in `[0, 1]`.
pub(crate) fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// 95th percentile of the pooled surface-to-surface distances in both
/// directions, in pixels.
pub fn hausdorff95(pred: &Mask, gt: &Mask) -> Result<f64> {
    pred.check_same(gt)?;
    if pred.is_empty() || gt.is_empty() {
        return Err(Error::Undefined(format!(
            "hd95 needs two non-empty masks (pred {} px, gt {} px)",
            pred.count(),
            gt.count()
        )));
    }
    let (sp, sg) = (surface(pred), surface(gt));
    let (dp, dg) = (squared_edt(&sp), squared_edt(&sg));
    let mut d: Vec<f64> = Vec::with_capacity(sp.count() + sg.count());
    for (i, (&a, &b)) in sp.data().iter().zip(sg.data()).enumerate() {
        if a {
            d.push(dg[i].sqrt());
        }
        if b {
            d.push(dp[i].sqrt());
        }
    }
    d.sort_by(f64::total_cmp);
    Ok(percentile(&d, 0.95))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dots(h: usize, w: usize, pts: &[(usize, usize)]) -> Mask {
        let mut m = vec![false; h * w];
        for &(y, x) in pts {
            m[y * w + x] = true;
        }
        Mask::new(h, w, m).unwrap()
    }

    #[test]
    fn single_pixels_at_pythagorean_offset() {
        let a = dots(5, 5, &[(0, 0)]);
        let b = dots(5, 5, &[(3, 4)]);
        assert_eq!(hausdorff95(&a, &b).unwrap(), 5.0);
        assert_eq!(hausdorff95(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn empty_mask_is_undefined() {
        let a = dots(4, 4, &[(1, 1)]);
        assert!(matches!(hausdorff95(&a, &Mask::empty(4, 4)), Err(Error::Undefined(_))));
    }

    #[test]
    fn surface_of_filled_square_is_its_ring() {
        let full = Mask::new(4, 4, vec![true; 16]).unwrap();
        assert_eq!(surface(&full).count(), 12);
        let mut inner = vec![true; 25];
        inner[0] = false;
        let m = Mask::new(5, 5, inner).unwrap();
        assert!(!surface(&m).get(2, 2));
        assert!(surface(&m).get(1, 0));
    }

    #[test]
    fn percentile_interpolates() {
        assert_eq!(percentile(&[0.0, 10.0], 0.95), 9.5);
        assert_eq!(percentile(&[3.0], 0.95), 3.0);
    }
}
