//! Deterministic 2-D projection onto the top two principal axes, used as a
//! glyph position when no thumbnail exists.

use alca::FeatureTable;

const POWER_ITERS: usize = 60;

pub fn project_2d(features: &FeatureTable) -> Vec<[f32; 2]> {
    let (n, d) = (features.len(), features.dim());
    let mut mean = vec![0.0f64; d];
    for row in features.rows() {
        mean.iter_mut().zip(row).for_each(|(m, &x)| *m += x as f64);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut axes: Vec<Vec<f64>> = Vec::with_capacity(2);
    for k in 0..2.min(d) {
        let mut v: Vec<f64> = (0..d).map(|j| if (j + k) % 2 == 0 { 1.0 } else { -0.5 } / (j + 1) as f64).collect();
        orthonormalize(&mut v, &axes);
        for _ in 0..POWER_ITERS {
            let mut w = vec![0.0; d];
            for row in features.rows() {
                let s: f64 = row.iter().zip(&mean).zip(&v).map(|((&x, m), v)| (x as f64 - m) * v).sum();
                w.iter_mut().zip(row).zip(&mean).for_each(|((w, &x), m)| *w += s * (x as f64 - m));
            }
            if !orthonormalize(&mut w, &axes) {
                break;
            }
            let delta: f64 = w.iter().zip(&v).map(|(a, b)| (a - b).abs()).sum();
            v = w;
            if delta < 1e-9 {
                break;
            }
        }
        axes.push(v);
    }
    features
        .rows()
        .map(|row| {
            let mut p = [0.0f32; 2];
            for (k, axis) in axes.iter().enumerate() {
                p[k] = row.iter().zip(&mean).zip(axis).map(|((&x, m), a)| (x as f64 - m) * a).sum::<f64>() as f32;
            }
            p
        })
        .collect()
}

/// Removes components along `basis` and scales to unit length; false when nothing is left.
fn orthonormalize(v: &mut [f64], basis: &[Vec<f64>]) -> bool {
    for b in basis {
        let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
        v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < 1e-12 {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    true
}
