//! Brute-force references shared by the integration tests.

use fsnet_core::tensor::Tensor;

pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    (0u32..1 << n)
        .filter(|m| m.count_ones() as usize == k)
        .map(|m| (0..n).filter(|i| m >> i & 1 == 1).collect())
        .collect()
}

/// Enumerates every k-subset and keeps the one with the largest total
/// softmax mass.
pub fn oracle_read(m: &Tensor, u: &[f64], k: usize) -> (Vec<f64>, Vec<usize>, Vec<f64>) {
    let n = m.dim(0);
    let d = m.dim(1);
    let scores: Vec<f64> = (0..n).map(|i| (0..d).map(|j| m.row(i)[j] * u[j]).sum()).collect();
    let z: f64 = scores.iter().map(|s| s.exp()).sum();
    let p: Vec<f64> = scores.iter().map(|s| s.exp() / z).collect();
    let best = subsets(n, k)
        .into_iter()
        .max_by(|a, b| {
            let sa: f64 = a.iter().map(|&i| p[i]).sum();
            let sb: f64 = b.iter().map(|&i| p[i]).sum();
            sa.total_cmp(&sb)
        })
        .unwrap();
    let mut read = vec![0.0; d];
    for &i in &best {
        for (r, v) in read.iter_mut().zip(m.row(i)) {
            *r += p[i] * v;
        }
    }
    let weights = best.iter().map(|&i| p[i]).collect();
    (read, best, weights)
}

pub fn oracle_write(m: &Tensor, u: &[f64], rows: &[usize], weights: &[f64], tau: f64) -> Vec<Vec<f64>> {
    (0..m.dim(0))
        .map(|i| {
            let w = rows.iter().position(|&r| r == i).map_or(0.0, |p| weights[p]);
            let row: Vec<f64> = (0..m.dim(1)).map(|j| tau * m.row(i)[j] + (1.0 - tau) * w * u[j]).collect();
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            row.iter().map(|v| v / norm.max(1.0)).collect()
        })
        .collect()
}
