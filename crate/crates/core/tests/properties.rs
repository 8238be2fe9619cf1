use clustcov::assembly::{assemble, StructuredCovariance};
use clustcov::diagnostics::m_p;
use clustcov::factor::regress;
use clustcov::norms::{max_norm, operator_norm, weighted_quadratic_norm};
use clustcov::panel::{Panel, PanelKind};
use clustcov::portfolio::optimize::{min_var_long_only, min_var_unconstrained, project_simplex};
use clustcov::portfolio::{backtest, BacktestConfig, Estimator, Scheme};
use clustcov::scod::{cluster, residual_cov, scod_matrix, ScodMatrix};
use clustcov::simulation::dgp::{balanced_sizes, imbalanced_sizes};
use clustcov::rng::{stream_rng, Stream};
use clustcov::{adjusted_rand_index, ClusterPartition, SymmetricMatrix};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-3.0f64..3.0, rows * cols)
        .prop_map(move |v| DMatrix::from_row_slice(rows, cols, &v))
}

/// Random SPD matrix XᵀX/n + εI.
fn spd(p: usize) -> impl Strategy<Value = SymmetricMatrix> {
    matrix(p + 3, p).prop_map(move |x| {
        let m = x.transpose() * &x / (p + 3) as f64 + DMatrix::identity(p, p) * 0.05;
        SymmetricMatrix::from_upper(m)
    })
}

fn labels(p: usize, k: usize) -> impl Strategy<Value = ClusterPartition> {
    prop::collection::vec(0..k, p).prop_map(|l| ClusterPartition::from_labels(&l).unwrap())
}

fn structured(p: usize, r: usize) -> impl Strategy<Value = StructuredCovariance> {
    (
        matrix(p, r),
        spd(r),
        labels(p, 4),
        prop::collection::vec(0.2f64..2.0, p),
        matrix(8, 4),
    )
        .prop_map(move |(b, sf, part, idio, zx)| {
            let k = part.num_clusters();
            let zx = zx.columns(0, k).into_owned();
            let sz = SymmetricMatrix::from_upper(
                zx.transpose() * &zx / 8.0 + DMatrix::identity(k, k) * 0.1,
            );
            StructuredCovariance::new(b, sf, part, sz, idio).unwrap()
        })
}

/// Random panel plus a fixed well-conditioned pattern, so no column or
/// column difference is degenerate.
fn residual_panel(t: usize, p: usize) -> impl Strategy<Value = DMatrix<f64>> {
    matrix(t, p).prop_map(move |m| m + DMatrix::from_fn(t, p, |i, j| if i % p == j { 4.0 } else { 0.0 }))
}

fn permute_cols(m: &DMatrix<f64>, perm: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, perm[j])])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn panel_csv_round_trip(v in matrix(6, 3)) {
        let dir = tempfile::tempdir().unwrap();
        let panel = Panel::with_generated_labels("s", v).unwrap();
        let path = dir.path().join("p.csv");
        panel.save_csv(&path).unwrap();
        let back = Panel::load_csv(&path, PanelKind::Returns).unwrap();
        prop_assert_eq!(&back, &panel);
        back.save_csv(&path).unwrap();
        prop_assert_eq!(Panel::load_csv(&path, PanelKind::Returns).unwrap(), back);
    }

    #[test]
    fn membership_gram_is_diagonal(part in labels(12, 5)) {
        let a = part.membership();
        let g = a.transpose() * &a;
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                if i == j { prop_assert!(g[(i, j)] > 0.0) } else { prop_assert_eq!(g[(i, j)], 0.0) }
            }
        }
        prop_assert_eq!(g.trace(), 12.0);
    }

    #[test]
    fn residuals_orthogonal_to_factors(y in matrix(30, 4), f in matrix(30, 2)) {
        prop_assume!((f.transpose() * &f).determinant().abs() > 1e-3);
        let (_, u) = regress(&y, &f, &["a".into(), "b".into()]).unwrap();
        let g = f.transpose() * &u;
        let scale = f.norm() * y.norm();
        prop_assert!(g.amax() <= 1e-8 * scale.max(1.0));
    }

    #[test]
    fn loadings_scale_equivariant(y in matrix(30, 3), f in matrix(30, 2), c in 0.1f64..10.0) {
        prop_assume!((f.transpose() * &f).determinant().abs() > 1e-3);
        let names = ["a".to_string(), "b".to_string()];
        let (b, u) = regress(&y, &f, &names).unwrap();
        let mut y2 = y.clone();
        y2.column_mut(1).scale_mut(c);
        let (b2, u2) = regress(&y2, &f, &names).unwrap();
        for j in 0..2 {
            prop_assert!((b2[(1, j)] - c * b[(1, j)]).abs() <= 1e-12 * (c * b[(1, j)]).abs().max(1.0));
        }
        for t in 0..30 {
            prop_assert!((u2[(t, 1)] - c * u[(t, 1)]).abs() <= 1e-12 * (c * y.amax()).max(1.0));
        }
    }

    #[test]
    fn refit_on_residuals_has_zero_loadings(y in matrix(30, 3), f in matrix(30, 2)) {
        prop_assume!((f.transpose() * &f).determinant().abs() > 1e-3);
        let names = ["a".to_string(), "b".to_string()];
        let (_, u) = regress(&y, &f, &names).unwrap();
        let (b, _) = regress(&u, &f, &names).unwrap();
        prop_assert!(b.amax() <= 1e-10);
    }

    #[test]
    fn scod_scale_invariant(u in residual_panel(40, 6), c in 0.05f64..20.0, col in 0usize..6) {
        let d = scod_matrix(&residual_cov(&u).unwrap()).unwrap();
        let mut u2 = u.clone();
        u2.column_mut(col).scale_mut(c);
        let d2 = scod_matrix(&residual_cov(&u2).unwrap()).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                if i != col && j != col {
                    prop_assert!((d.as_matrix()[(i, j)] - d2.as_matrix()[(i, j)]).abs() <= 1e-10);
                }
            }
        }
        let d3 = scod_matrix(&residual_cov(&(&u * c)).unwrap()).unwrap();
        prop_assert!((d.as_matrix() - d3.as_matrix()).amax() <= 1e-10);
        prop_assert!(d.as_matrix().iter().all(|&x| (0.0..=1.0 + 1e-12).contains(&x)));
    }

    #[test]
    fn scod_permutation_equivariant(u in residual_panel(40, 6), perm in Just((0..6).collect::<Vec<usize>>()).prop_shuffle()) {
        let d = scod_matrix(&residual_cov(&u).unwrap()).unwrap();
        let dp = scod_matrix(&residual_cov(&permute_cols(&u, &perm)).unwrap()).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                prop_assert!((dp.get(i, j) - d.get(perm[i], perm[j])).abs() <= 1e-12);
            }
        }
        let gamma = d.pair_values().iter().cloned().fold(0.0, f64::max) * 0.6;
        prop_assume!(gamma > 0.0);
        let a = cluster(&d, gamma).unwrap();
        let b = cluster(&dp, gamma).unwrap();
        prop_assert_eq!(b, a.permuted(&perm));
    }

    #[test]
    fn cluster_count_nonincreasing_in_gamma(v in prop::collection::vec(0.01f64..1.0, 45), g1 in 0.01f64..1.0, g2 in 0.01f64..1.0) {
        let mut m = DMatrix::zeros(10, 10);
        let mut n = 0;
        for i in 0..10 {
            for j in i + 1..10 {
                m[(i, j)] = v[n];
                m[(j, i)] = v[n];
                n += 1;
            }
        }
        let d = ScodMatrix::from_dense(m).unwrap();
        let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
        prop_assert!(cluster(&d, hi).unwrap().num_clusters() <= cluster(&d, lo).unwrap().num_clusters());
    }

    #[test]
    fn ari_symmetric_and_relabel_invariant(a in labels(15, 4), b in labels(15, 3), shift in 1usize..4) {
        let ab = adjusted_rand_index(&a, &b).unwrap();
        let ba = adjusted_rand_index(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-12);
        let relabeled: Vec<usize> = a.labels().iter().map(|l| (l + shift) % 4).collect();
        let a2 = ClusterPartition::from_labels(&relabeled).unwrap();
        prop_assert!((adjusted_rand_index(&a2, &b).unwrap() - ab).abs() <= 1e-12);
        prop_assert_eq!(adjusted_rand_index(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn smw_consistency_and_positive_definiteness(s in structured(12, 3)) {
        let min_idio = s.idio_var.iter().cloned().fold(f64::INFINITY, f64::min);
        let est = assemble(s).unwrap();
        let eye = DMatrix::<f64>::identity(12, 12);
        prop_assert!((est.sigma.as_matrix() * est.precision.as_matrix() - &eye).amax() <= 1e-8);
        prop_assert!((est.sigma_u.as_matrix() * est.precision_u.as_matrix() - &eye).amax() <= 1e-8);
        prop_assert!(est.sigma.min_eigenvalue() >= min_idio - 1e-10);
    }

    #[test]
    fn norm_axioms(a in spd(5), b in spd(5), c in -4.0f64..4.0, r in spd(5)) {
        let sum = a.add(&b);
        let sa = a.scaled(c);
        for norm in [max_norm as fn(&SymmetricMatrix) -> f64, operator_norm] {
            prop_assert!(norm(&sum) <= norm(&a) + norm(&b) + 1e-10);
            prop_assert!((norm(&sa) - c.abs() * norm(&a)).abs() <= 1e-10 * norm(&a).max(1.0));
        }
        let w = |m: &SymmetricMatrix| weighted_quadratic_norm(m, &r).unwrap();
        prop_assert!(w(&sum) <= w(&a) + w(&b) + 1e-10 * (w(&a) + w(&b)).max(1.0));
        prop_assert!((w(&sa) - c.abs() * w(&a)).abs() <= 1e-10 * w(&a).max(1.0));
        prop_assert!((w(&r) - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn m_p_homogeneity(s in spd(6), c in prop_oneof![-5.0f64..-0.1, 0.1f64..5.0], kappa in 0.05f64..0.95) {
        let lhs = m_p(&s.scaled(c), kappa).unwrap();
        let rhs = c.abs().powf(kappa) * m_p(&s, kappa).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * rhs.max(1.0));
    }

    #[test]
    fn unconstrained_beats_feasible_points(s in spd(5), pts in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 5), 50)) {
        let w = min_var_unconstrained(&s.spd_inverse("sigma").unwrap()).unwrap();
        let var = |w: &[f64]| { let v = DVector::from_column_slice(w); v.dot(&(s.as_matrix() * &v)) };
        let best = var(&w);
        for mut x in pts {
            let sum: f64 = x.iter().sum();
            prop_assume!(sum.abs() > 1e-3);
            x.iter_mut().for_each(|v| *v /= sum);
            prop_assert!(best <= var(&x) * (1.0 + 1e-10) + 1e-14);
        }
    }

    #[test]
    fn long_only_bounds(s in spd(6)) {
        let w = min_var_long_only(&s, 1e-9, 100_000).unwrap();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
        prop_assert!(w.iter().all(|&x| x >= 0.0));
        let v = DVector::from_column_slice(&w);
        let obj = v.dot(&(s.as_matrix() * &v));
        let best_single = (0..6).map(|i| s[(i, i)]).fold(f64::INFINITY, f64::min);
        prop_assert!(obj <= best_single + 1e-9);
        let u = min_var_unconstrained(&s.spd_inverse("sigma").unwrap()).unwrap();
        if u.iter().all(|&x| x >= 0.0) {
            for (a, b) in w.iter().zip(&u) {
                prop_assert!((a - b).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn simplex_projection_is_feasible(v in prop::collection::vec(-5.0f64..5.0, 1..10)) {
        let p = project_simplex(&v);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(p.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn balanced_sizes_shape(p in 1usize..300, k in 1usize..20) {
        if let Ok(s) = balanced_sizes(p, k) {
            prop_assert_eq!(s.iter().sum::<usize>(), p);
            let head = p.div_ceil(k);
            prop_assert!(s[..k - 1].iter().all(|&x| x == head));
            prop_assert!(s[k - 1] >= 1 && s[k - 1] <= head);
        }
    }

    #[test]
    fn imbalanced_sizes_nonempty(p in 20usize..200, k in 3usize..12, seed in any::<u64>()) {
        let s = imbalanced_sizes(p, k, &mut stream_rng(seed, 0, Stream::Sizes)).unwrap();
        prop_assert_eq!(s.iter().sum::<usize>(), p);
        prop_assert!(s.iter().all(|&x| x >= 1));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn backtest_scale_consistency(y in matrix(40, 4), c in 0.1f64..10.0) {
        let f = DMatrix::from_fn(40, 1, |t, _| ((t * 7919) % 13) as f64 - 6.0);
        let rp = Panel::with_generated_labels("y", y.clone()).unwrap();
        let fp = Panel::with_generated_labels("f", f).unwrap();
        let rc = Panel::with_generated_labels("y", y * c).unwrap();
        let config = BacktestConfig {
            train_window: 20,
            rebalance_every: 5,
            estimator: Estimator::Sample,
            scheme: Scheme::LongOnly,
            ..BacktestConfig::default()
        };
        let a = backtest(&rp, &fp, 20..40, &config).unwrap();
        let b = backtest(&rc, &fp, 20..40, &config).unwrap();
        let rel = |x: f64, y: f64| (x - y).abs() <= 1e-8 * y.abs().max(1e-12);
        prop_assert!(rel(b.performance.av, c * a.performance.av) || (b.performance.av - c * a.performance.av).abs() < 1e-10);
        prop_assert!(rel(b.performance.sd, c * a.performance.sd));
        prop_assert!(rel(b.performance.ir.unwrap(), a.performance.ir.unwrap()) || (b.performance.ir.unwrap() - a.performance.ir.unwrap()).abs() < 1e-8);
        prop_assert_eq!(backtest(&rp, &fp, 20..40, &config).unwrap(), a);
    }
}
