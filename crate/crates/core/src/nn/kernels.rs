//! Inner loops shared by the layer implementations.
//!
//! Reductions use a fixed 8-lane accumulator pattern: the compiler can map
//! the lanes onto SIMD registers, while the summation order stays identical
//! on every run and every machine, which keeps training bit-reproducible.

/// y[i] += a * x[i]
pub(crate) fn axpy(y: &mut [f32], a: f32, x: &[f32]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Dot product with a fixed lane layout and a fixed final reduction tree.
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f32; 8];
    let head = a.len() - a.len() % 8;
    let (a8, a_rest) = a.split_at(head);
    let (b8, b_rest) = b.split_at(head);
    for (ca, cb) in a8.chunks_exact(8).zip(b8.chunks_exact(8)) {
        for l in 0..8 {
            acc[l] += ca[l] * cb[l];
        }
    }
    for (l, (x, y)) in a_rest.iter().zip(b_rest).enumerate() {
        acc[l] += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]))
}

/// Sum with the same lane discipline as `dot`.
pub(crate) fn sum(a: &[f32]) -> f32 {
    let mut acc = [0.0f32; 8];
    let head = a.len() - a.len() % 8;
    let (a8, a_rest) = a.split_at(head);
    for ca in a8.chunks_exact(8) {
        for l in 0..8 {
            acc[l] += ca[l];
        }
    }
    for (l, x) in a_rest.iter().enumerate() {
        acc[l] += x;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axpy_matches_reference() {
        let x: Vec<f32> = (0..19).map(|i| i as f32 * 0.25).collect();
        let mut y = vec![1.0f32; 19];
        axpy(&mut y, -2.0, &x);
        for (i, v) in y.iter().enumerate() {
            assert_eq!(*v, 1.0 - 2.0 * (i as f32 * 0.25));
        }
    }

    #[test]
    fn dot_matches_f64_reference_closely() {
        let a: Vec<f32> = (0..103).map(|i| ((i * 7 % 13) as f32 - 6.0) * 0.37).collect();
        let b: Vec<f32> = (0..103).map(|i| ((i * 5 % 11) as f32 - 5.0) * 0.21).collect();
        let got = dot(&a, &b);
        let want: f64 = a.iter().zip(&b).map(|(x, y)| *x as f64 * *y as f64).sum();
        assert!((got as f64 - want).abs() < 1e-4, "got {got}, want {want}");
    }

    #[test]
    fn sum_handles_short_and_ragged_lengths() {
        for n in [0usize, 1, 7, 8, 9, 16, 23] {
            let a: Vec<f32> = (0..n).map(|i| i as f32).collect();
            let want = (n * n.saturating_sub(1) / 2) as f32;
            assert_eq!(sum(&a), want, "n={n}");
        }
    }
}
