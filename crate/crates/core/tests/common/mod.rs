//! Brute-force reference implementations and random instance generators
//! shared by the oracle tests and the acceptance runner.
#![allow(dead_code)]

use clustcov::assembly::StructuredCovariance;
use clustcov::{ClusterPartition, SymmetricMatrix};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Residual panel with a few shared latent columns so sCOD values spread out.
pub fn residual_panel(rng: &mut ChaCha8Rng, t: usize, p: usize) -> DMatrix<f64> {
    let k = rng.random_range(1..=p.min(4));
    let z = normal_matrix(rng, t, k);
    let labels: Vec<usize> = (0..p).map(|_| rng.random_range(0..k)).collect();
    let noise = normal_matrix(rng, t, p);
    let scale: Vec<f64> = (0..p).map(|_| rng.random_range(0.2..3.0)).collect();
    DMatrix::from_fn(t, p, |r, i| scale[i] * (z[(r, labels[i])] + 0.7 * noise[(r, i)]))
}

pub fn random_labels(rng: &mut ChaCha8Rng, p: usize, k: usize) -> ClusterPartition {
    let labels: Vec<usize> = (0..p).map(|_| rng.random_range(0..k)).collect();
    ClusterPartition::from_labels(&labels).unwrap()
}

pub fn random_spd(rng: &mut ChaCha8Rng, p: usize) -> SymmetricMatrix {
    let x = normal_matrix(rng, p + 2, p);
    let m = x.transpose() * &x / (p + 2) as f64 + DMatrix::identity(p, p) * 0.05;
    SymmetricMatrix::from_upper(m)
}

pub fn random_structured(rng: &mut ChaCha8Rng, p: usize, k: usize, r: usize) -> StructuredCovariance {
    let part = random_labels(rng, p, k);
    let k = part.num_clusters();
    let b = normal_matrix(rng, p, r);
    let idio: Vec<f64> = (0..p).map(|_| rng.random_range(0.2..2.0)).collect();
    StructuredCovariance::new(b, random_spd(rng, r), part, random_spd(rng, k), idio).unwrap()
}

/// (1/T) Σ_t u_ti u_tj by explicit loops.
pub fn residual_cov(u: &DMatrix<f64>) -> DMatrix<f64> {
    let (t, p) = u.shape();
    let mut s = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            let mut acc = 0.0;
            for r in 0..t {
                acc += u[(r, i)] * u[(r, j)];
            }
            s[(i, j)] = acc / t as f64;
        }
    }
    s
}

/// sCOD straight from the series: the largest |cor(u_i − u_j, u_l)| with
/// uncentered moments, built from the difference series itself.
pub fn scod(u: &DMatrix<f64>) -> DMatrix<f64> {
    let (t, p) = u.shape();
    let mut d = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            if i == j {
                continue;
            }
            let diff: Vec<f64> = (0..t).map(|r| u[(r, i)] - u[(r, j)]).collect();
            let vd = diff.iter().map(|x| x * x).sum::<f64>() / t as f64;
            let mut best = 0.0f64;
            for l in 0..p {
                if l == i || l == j {
                    continue;
                }
                let cov = (0..t).map(|r| diff[r] * u[(r, l)]).sum::<f64>() / t as f64;
                let vl = (0..t).map(|r| u[(r, l)] * u[(r, l)]).sum::<f64>() / t as f64;
                best = best.max((cov / (vd * vl).sqrt()).abs());
            }
            d[(i, j)] = best;
        }
    }
    d
}

/// Σ̂_z = (AᵀA)⁻¹AᵀΣ̌_uA(AᵀA)⁻¹ with a dense inverse.
pub fn cluster_cov(u: &DMatrix<f64>, part: &ClusterPartition) -> DMatrix<f64> {
    let a = part.membership();
    let g = (a.transpose() * &a).try_inverse().unwrap();
    let proj = &g * a.transpose();
    &proj * residual_cov(u) * proj.transpose()
}

pub fn m_p(s: &DMatrix<f64>, kappa: f64) -> f64 {
    let p = s.nrows();
    let mut best = 0.0f64;
    for i in 0..p {
        let mut row = 0.0;
        for j in 0..p {
            let x = s[(i, j)];
            row += if kappa == 0.0 {
                (x != 0.0) as u8 as f64
            } else {
                x.abs().powf(kappa)
            };
        }
        best = best.max(row);
    }
    best
}

/// ARI from pair counts: a = together in both, b/c = together in one only,
/// d = apart in both.
pub fn ari(x: &[usize], y: &[usize]) -> f64 {
    let n = x.len();
    let (mut a, mut b, mut c, mut d) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            match (x[i] == x[j], y[i] == y[j]) {
                (true, true) => a += 1.0,
                (true, false) => b += 1.0,
                (false, true) => c += 1.0,
                (false, false) => d += 1.0,
            }
        }
    }
    let den = (a + b) * (b + d) + (a + c) * (c + d);
    if den == 0.0 {
        return if x_eq_partition(x, y) { 1.0 } else { 0.0 };
    }
    2.0 * (a * d - b * c) / den
}

fn x_eq_partition(x: &[usize], y: &[usize]) -> bool {
    (0..x.len()).all(|i| (0..x.len()).all(|j| (x[i] == x[j]) == (y[i] == y[j])))
}

/// Single linkage by repeated full scans over group pairs: merge the closest
/// pair of groups while their minimum distance is below `gamma`.
pub fn single_linkage(d: &DMatrix<f64>, gamma: f64) -> Vec<Vec<usize>> {
    let p = d.nrows();
    let mut groups: Vec<Vec<usize>> = (0..p).map(|i| vec![i]).collect();
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..groups.len() {
            for b in a + 1..groups.len() {
                let mut m = f64::INFINITY;
                for &i in &groups[a] {
                    for &j in &groups[b] {
                        m = m.min(d[(i, j)]);
                    }
                }
                if best.is_none_or(|(v, _, _)| m < v) {
                    best = Some((m, a, b));
                }
            }
        }
        match best {
            Some((v, a, b)) if v < gamma => {
                let moved = groups.remove(b);
                groups[a].extend(moved);
            }
            _ => break,
        }
    }
    let mut out: Vec<Vec<usize>> = groups
        .into_iter()
        .map(|mut g| {
            g.sort_unstable();
            g
        })
        .collect();
    out.sort();
    out
}

pub fn canonical_groups(part: &ClusterPartition) -> Vec<Vec<usize>> {
    let mut g = part.groups().to_vec();
    g.sort();
    g
}

/// Minimum of wᵀΣw over the simplex by enumerating every support set.
pub fn long_only_min(sigma: &DMatrix<f64>) -> f64 {
    let p = sigma.nrows();
    let mut best = f64::INFINITY;
    for mask in 1u32..(1 << p) {
        let idx: Vec<usize> = (0..p).filter(|&i| mask & (1 << i) != 0).collect();
        let n = idx.len();
        let sub = DMatrix::from_fn(n, n, |i, j| sigma[(idx[i], idx[j])]);
        let Some(inv) = sub.clone().try_inverse() else { continue };
        let x = inv * DVector::from_element(n, 1.0);
        let s = x.sum();
        if s <= 0.0 || x.iter().any(|&v| v < 0.0) {
            continue;
        }
        let w = x / s;
        best = best.min(w.dot(&(&sub * &w)));
    }
    best
}

pub fn objective(sigma: &DMatrix<f64>, w: &[f64]) -> f64 {
    let w = DVector::from_column_slice(w);
    w.dot(&(sigma * &w))
}

/// Largest deviation of each library routine from its oracle over `n` random
/// instances with p ≤ 10, in the order sCOD, residual covariance, cluster
/// covariance, m_p, ARI.
pub fn oracle_errors(n: usize, seed: u64) -> [(&'static str, f64); 5] {
    let mut r = rng(seed);
    let mut err = [0.0f64; 5];
    for _ in 0..n {
        let p = r.random_range(3..=10);
        let t = r.random_range(15..=60);
        let u = residual_panel(&mut r, t, p);

        let s = clustcov::scod::residual_cov(&u).unwrap();
        err[1] = err[1].max((s.as_matrix() - residual_cov(&u)).amax());

        let d = clustcov::scod::scod_matrix(&s).unwrap();
        err[0] = err[0].max((d.as_matrix() - scod(&u)).amax());

        let k = r.random_range(1..=p);
        let part = random_labels(&mut r, p, k);
        let z = clustcov::assembly::estimate_cluster_series(&u, &part).unwrap();
        let sz = clustcov::assembly::cluster_cov(&z).unwrap();
        err[2] = err[2].max((sz.as_matrix() - cluster_cov(&u, &part)).amax());

        let kappa = if r.random_bool(0.1) { 0.0 } else { r.random_range(0.0..1.0) };
        let lib = clustcov::diagnostics::m_p(&s, kappa).unwrap();
        err[3] = err[3].max((lib - m_p(s.as_matrix(), kappa)).abs());

        let k = r.random_range(1..=p);
        let other = random_labels(&mut r, p, k);
        let lib = clustcov::adjusted_rand_index(&part, &other).unwrap();
        err[4] = err[4].max((lib - ari(part.labels(), other.labels())).abs());
    }
    [
        ("scod_matrix", err[0]),
        ("residual_cov", err[1]),
        ("cluster_cov", err[2]),
        ("m_p", err[3]),
        ("adjusted_rand_index", err[4]),
    ]
}

/// Random symmetric distance matrix; every other instance uses a coarse grid
/// so ties and values equal to the cut height occur.
pub fn random_distances(r: &mut ChaCha8Rng, p: usize, coarse: bool) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in i + 1..p {
            let v = if coarse {
                r.random_range(1..=10) as f64 / 10.0
            } else {
                r.random_range(0.0..1.0)
            };
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    d
}

/// Number of instances (out of `n`, p ≤ 30) where the library clustering
/// differs from the naive single-linkage cut.
pub fn linkage_mismatches(n: usize, seed: u64) -> usize {
    let mut r = rng(seed);
    let mut bad = 0;
    for case in 0..n {
        let p = r.random_range(2..=30);
        let coarse = case % 2 == 0;
        let d = random_distances(&mut r, p, coarse);
        let gamma = if coarse {
            r.random_range(1..=10) as f64 / 10.0
        } else {
            r.random_range(0.01..0.5)
        };
        let lib = clustcov::scod::cluster(&clustcov::ScodMatrix::from_dense(d.clone()).unwrap(), gamma).unwrap();
        if canonical_groups(&lib) != single_linkage(&d, gamma) {
            bad += 1;
        }
    }
    bad
}

/// Worst ‖ΣΣ⁻¹ − I‖_max and worst max-norm gap to a dense inverse over `n`
/// random structured covariances (p ≤ 50, K ≤ 8, r ≤ 5).
pub fn smw_errors(n: usize, seed: u64) -> (f64, f64) {
    let mut r = rng(seed);
    let (mut product, mut dense) = (0.0f64, 0.0f64);
    for _ in 0..n {
        let p = r.random_range(2..=50);
        let k = r.random_range(1..=8.min(p));
        let f = r.random_range(1..=5);
        let est = clustcov::assemble(random_structured(&mut r, p, k, f)).unwrap();
        let s = est.sigma.as_matrix();
        let inv = est.precision.as_matrix();
        product = product.max((s * inv - DMatrix::identity(p, p)).amax());
        dense = dense.max((inv - s.clone().try_inverse().unwrap()).amax());
    }
    (product, dense)
}

/// Worst objective gap between the long-only solver and exhaustive support
/// enumeration over `n` random PD matrices with p ≤ 6.
pub fn long_only_gap(n: usize, seed: u64) -> f64 {
    use clustcov::portfolio::optimize::{min_var_long_only, DEFAULT_MAX_ITER, DEFAULT_TOL};
    let mut r = rng(seed);
    let mut gap = 0.0f64;
    for _ in 0..n {
        let p = r.random_range(1..=6);
        let s = random_spd(&mut r, p);
        let w = min_var_long_only(&s, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        assert!(w.iter().all(|&v| v >= 0.0) && (w.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        gap = gap.max((objective(s.as_matrix(), &w) - long_only_min(s.as_matrix())).abs());
    }
    gap
}
