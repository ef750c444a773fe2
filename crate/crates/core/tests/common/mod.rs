//! Shared independent oracles for the integration tests. These deliberately
//! avoid the library's own numeric paths: eigenvalues come from dense Jacobi
//! rotations, not the production power iteration.

#![allow(dead_code)]
#![allow(clippy::needless_range_loop)]

/// All eigenvalues of a symmetric matrix via cyclic Jacobi rotations.
pub fn symmetric_eigenvalues(matrix: &[Vec<f64>]) -> Vec<f64> {
    let n = matrix.len();
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    for _ in 0..200 {
        let off: f64 = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-26 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (theta * theta + 1.0).sqrt())
                } else {
                    -1.0 / (-theta + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i][i]).collect()
}

/// Second-largest eigenvalue magnitude from the Jacobi spectrum.
pub fn second_eigenvalue_by_jacobi(matrix: &[Vec<f64>]) -> f64 {
    let mut magnitudes: Vec<f64> = symmetric_eigenvalues(matrix)
        .into_iter()
        .map(f64::abs)
        .collect();
    magnitudes.sort_by(|a, b| b.partial_cmp(a).unwrap());
    if magnitudes.len() < 2 {
        0.0
    } else {
        magnitudes[1]
    }
}

/// Two-sample Kolmogorov-Smirnov statistic: the largest gap between the two
/// empirical CDFs.
pub fn ks_statistic(sample_a: &[f64], sample_b: &[f64]) -> f64 {
    let mut a = sample_a.to_vec();
    let mut b = sample_b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j) = (0usize, 0usize);
    let mut max_gap: f64 = 0.0;
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        let fa = i as f64 / a.len() as f64;
        let fb = j as f64 / b.len() as f64;
        max_gap = max_gap.max((fa - fb).abs());
    }
    max_gap
}
