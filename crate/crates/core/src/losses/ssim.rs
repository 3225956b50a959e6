//! Structural similarity on 3x3 windows.

use crate::imaging::Image;

const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

/// SSIM at `(u, v)` averaged over RGB, using the pixels of the 3x3 window that
/// are in bounds and accepted by `valid`. `None` if the window is empty.
pub fn ssim_at(a: &Image, b: &Image, valid: impl Fn(usize) -> bool, u: usize, v: usize) -> Option<f64> {
    let (w, h) = (a.width, a.height);
    let mut idx = [0usize; 9];
    let mut n = 0;
    for dv in -1isize..=1 {
        for du in -1isize..=1 {
            let (uu, vv) = (u as isize + du, v as isize + dv);
            if uu < 0 || vv < 0 || uu >= w as isize || vv >= h as isize {
                continue;
            }
            let i = vv as usize * w + uu as usize;
            if valid(i) {
                idx[n] = i;
                n += 1;
            }
        }
    }
    if n == 0 {
        return None;
    }
    let inv = 1.0 / n as f64;
    let mut total = 0.0;
    for c in 0..3 {
        let (mut ma, mut mb) = (0.0, 0.0);
        for &i in &idx[..n] {
            ma += a.data[i][c];
            mb += b.data[i][c];
        }
        ma *= inv;
        mb *= inv;
        let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
        for &i in &idx[..n] {
            let da = a.data[i][c] - ma;
            let db = b.data[i][c] - mb;
            va += da * da;
            vb += db * db;
            cov += da * db;
        }
        va *= inv;
        vb *= inv;
        cov *= inv;
        total += ((2.0 * ma * mb + C1) * (2.0 * cov + C2)) / ((ma * ma + mb * mb + C1) * (va + vb + C2));
    }
    Some(total / 3.0)
}

/// Mean SSIM over all pixels of two equally sized images.
pub fn mean_ssim(a: &Image, b: &Image) -> f64 {
    assert_eq!((a.width, a.height), (b.width, b.height), "images differ in size");
    let vals: Vec<f64> = (0..a.data.len())
        .map(|i| ssim_at(a, b, |_| true, i % a.width, i / a.width).unwrap_or(0.0))
        .collect();
    super::pairwise_sum(&vals) / vals.len() as f64
}
