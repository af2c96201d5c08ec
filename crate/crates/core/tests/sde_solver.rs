use levylab::levy::JumpLaw;
use levylab::paths::{
    assemble_matrix_driver, make_grid, sample_driver, sample_driver_shaped, sample_ensemble, ContinuousKind,
    DriverSpec, PathSkeleton, SkeletonParts, TimeGrid,
};
use levylab::rng::RngStream;
use levylab::sde::{
    integration_by_parts_residual, ito_jump_residual, realized_covariation, recover_driver, solve_sde,
    stochastic_exponential, stochastic_integral, SdeError, Side, SigmaMap, Substeps,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn cp(rate: f64, drift: f64) -> DriverSpec {
    DriverSpec::CompoundPoisson {
        rate,
        law: JumpLaw::Uniform {
            low: -1.0,
            high: 1.0,
        },
        drift: vec![drift],
    }
}

fn normal_cp(rate: f64, sd: f64) -> DriverSpec {
    DriverSpec::CompoundPoisson {
        rate,
        law: JumpLaw::Normal { mean: 0.0, sd },
        drift: vec![0.0],
    }
}

fn unit_poisson(rate: f64) -> DriverSpec {
    DriverSpec::CompoundPoisson {
        rate,
        law: JumpLaw::Dirac { at: vec![1.0] },
        drift: vec![0.0],
    }
}

fn brownian(var: f64) -> DriverSpec {
    DriverSpec::Brownian {
        covariance: DMatrix::from_element(1, 1, var),
        drift: vec![0.0],
    }
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

/// Component `c` of a vector path as a scalar path.
fn component(p: &PathSkeleton, c: usize) -> PathSkeleton {
    map_components(p, |v| v[c])
}

fn map_components(p: &PathSkeleton, f: impl Fn(&[f64]) -> f64) -> PathSkeleton {
    PathSkeleton::from_parts(SkeletonParts {
        times: p.times().to_vec(),
        shape: (1, 1),
        origin: vec![f(p.origin())],
        values: (0..p.len()).map(|i| f(p.value(i))).collect(),
        grid_indices: p.grid_indices().to_vec(),
        jump_indices: p.jump_indices().to_vec(),
        pre_jump: (0..p.jump_count()).map(|j| f(p.pre_jump(j))).collect(),
        seed_id: p.seed_id(),
        continuous: p.continuous(),
    })
    .unwrap()
}

#[test]
fn constant_sigma_is_affine_in_driver() {
    let g = make_grid(1.0, 0.5, 12).unwrap();
    let spec = DriverSpec::Sum {
        parts: vec![
            DriverSpec::Brownian {
                covariance: DMatrix::identity(2, 2),
                drift: vec![0.1, -0.2],
            },
            DriverSpec::Stack {
                parts: vec![normal_cp(4.0, 1.0), normal_cp(4.0, 2.0)],
            },
        ],
    };
    let c = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -0.5, 3.0]);
    let sigma = SigmaMap::constant(c.clone()).unwrap();
    for k in 0..20 {
        let l = sample_driver(&spec, &g, RngStream::new(5, k)).unwrap();
        let sol = solve_sde(&sigma, &[1.0, -1.0], &l, Substeps::Auto).unwrap();
        for i in 0..l.len() {
            let expect = &c * nalgebra::DVector::from_column_slice(l.value(i));
            for r in 0..2 {
                let x = sol.path.value(i)[r] - [1.0, -1.0][r];
                assert!(close(x, expect[r], 1e-12), "{x} vs {}", expect[r]);
            }
        }
    }
}

#[test]
fn linear_sigma_pure_jump_is_product() {
    let g = make_grid(1.0, 0.5, 10).unwrap();
    let sigma = SigmaMap::linear_scalar().unwrap();
    for k in 0..50 {
        let l = sample_driver(&cp(6.0, 0.0), &g, RngStream::new(7, k)).unwrap();
        let sol = solve_sde(&sigma, &[1.5], &l, Substeps::Auto).unwrap();
        for (gi, &i) in l.grid_indices().iter().enumerate() {
            let t = l.times()[i];
            let prod: f64 = (0..l.jump_count())
                .filter(|&j| l.jump_time(j) <= t)
                .map(|j| 1.0 + l.jump(j)[0])
                .product();
            assert!(close(sol.path.grid_value(gi)[0], 1.5 * prod, 1e-13));
        }
    }
}

#[test]
fn linear_sigma_deterministic_driver_reaches_e() {
    let g = TimeGrid::uniform(1.0, 1).unwrap();
    let l = sample_driver(&DriverSpec::Deterministic { drift: vec![1.0] }, &g, RngStream::new(0, 0)).unwrap();
    let sigma = SigmaMap::linear_scalar().unwrap();
    let x1 = solve_sde(&sigma, &[2.0], &l, Substeps::Fixed(10_000)).unwrap().path.value(0)[0];
    assert!(((x1 - 2.0 * std::f64::consts::E) / (2.0 * std::f64::consts::E)).abs() <= 1e-3, "{x1}");
    // default refinement keeps substeps at 10⁻³·t_max
    let auto = solve_sde(&sigma, &[2.0], &l, Substeps::Auto).unwrap().path.value(0)[0];
    assert!(((auto - 2.0 * std::f64::consts::E) / (2.0 * std::f64::consts::E)).abs() <= 1e-3, "{auto}");
}

#[test]
fn random_continuous_part_is_not_subdivided() {
    let g = make_grid(1.0, 0.5, 4).unwrap();
    let l = sample_driver(&brownian(1.0), &g, RngStream::new(0, 0)).unwrap();
    let sigma = SigmaMap::sin_shift(2.0, 1.0).unwrap();
    assert!(matches!(
        solve_sde(&sigma, &[0.0], &l, Substeps::Fixed(4)),
        Err(SdeError::InvalidParameter(_))
    ));
    assert!(solve_sde(&sigma, &[0.0], &l, Substeps::Fixed(1)).is_ok());
}

#[test]
fn overflow_reports_first_bad_time() {
    let g = TimeGrid::uniform(1.0, 10).unwrap();
    let l = sample_driver(&DriverSpec::Deterministic { drift: vec![1000.0] }, &g, RngStream::new(0, 0)).unwrap();
    let sigma = SigmaMap::linear_scalar().unwrap();
    match solve_sde(&sigma, &[1.0], &l, Substeps::Fixed(1000)) {
        Err(SdeError::NonFinite { time }) => {
            // 1.1^m overflows after about 7450 substeps, i.e. in the eighth interval
            assert!((time - 0.8).abs() < 1e-12, "{time}");
        }
        other => panic!("expected overflow, got {other:?}"),
    }
}

#[test]
fn dimension_mismatch() {
    let g = make_grid(1.0, 0.5, 3).unwrap();
    let l = sample_driver(&brownian(1.0), &g, RngStream::new(0, 0)).unwrap();
    let sigma = SigmaMap::identity(2).unwrap();
    assert!(matches!(
        solve_sde(&sigma, &[0.0, 0.0], &l, Substeps::Auto),
        Err(SdeError::DimensionMismatch(_))
    ));
}

fn jump_consistent(sigma: &SigmaMap, sol: &levylab::sde::SolutionPath) -> bool {
    let p = &sol.path;
    (0..p.jump_count()).all(|j| {
        let i = p.jump_indices()[j];
        let pre = p.pre_jump(j);
        let expect = sigma.apply(pre, sol.driver.jump(j));
        p.value(i).iter().zip(pre).zip(&expect).all(|((post, pre), e)| {
            let scale = post.abs().max(pre.abs());
            ((post - pre) - e).abs() <= f64::EPSILON * scale
        })
    })
}

#[test]
fn exponential_of_zero_is_identity() {
    let g = make_grid(1.0, 0.5, 6).unwrap();
    let zero = DriverSpec::Deterministic { drift: vec![0.0; 4] };
    let l = sample_driver_shaped(&zero, (2, 2), &g, RngStream::new(0, 0)).unwrap();
    for side in [Side::Left, Side::Right] {
        let e = stochastic_exponential(&l, side).unwrap();
        for i in 0..e.path.len() {
            assert_eq!(e.path.matrix(i), DMatrix::identity(2, 2));
        }
        assert!(e.invertible());
    }
}

#[test]
fn scalar_exponential_is_product_and_flags_minus_one() {
    let g = make_grid(1.0, 0.5, 8).unwrap();
    for k in 0..30 {
        let l = sample_driver(&cp(5.0, 0.0), &g, RngStream::new(11, k)).unwrap();
        let e = stochastic_exponential(&l, Side::Left).unwrap();
        let t_end = l.len() - 1;
        let prod: f64 = (0..l.jump_count()).map(|j| 1.0 + l.jump(j)[0]).product();
        assert!(close(e.path.value(t_end)[0], prod, 1e-13));
        assert!(e.invertible());
    }
    let hit = PathSkeleton::from_parts(SkeletonParts {
        times: vec![0.25, 0.5, 1.0],
        shape: (1, 1),
        origin: vec![0.0],
        values: vec![0.0, -1.0, -1.0],
        grid_indices: vec![0, 2],
        jump_indices: vec![1],
        pre_jump: vec![0.0],
        seed_id: 0,
        continuous: ContinuousKind::None,
    })
    .unwrap();
    let e = stochastic_exponential(&hit, Side::Left).unwrap();
    assert_eq!(e.path.value(2)[0], 0.0);
    assert!(!e.invertible());
    assert_eq!(e.singular_at(), Some(0.5));
}

#[test]
fn right_exponential_of_transpose_is_transpose() {
    let g = make_grid(1.0, 0.5, 10).unwrap();
    let spec = DriverSpec::Sum {
        parts: vec![
            DriverSpec::Stack {
                parts: vec![normal_cp(0.4, 0.5); 9],
            },
            DriverSpec::Deterministic {
                drift: vec![0.2, -0.1, 0.0, 0.3, 0.1, 0.0, -0.2, 0.0, 0.4],
            },
        ],
    };
    for k in 0..10 {
        let l = sample_driver_shaped(&spec, (3, 3), &g, RngStream::new(3, k)).unwrap();
        let left = stochastic_exponential(&l, Side::Left).unwrap();
        let right = stochastic_exponential(&l.transpose(), Side::Right).unwrap();
        assert_eq!(right.path.values(), left.path.transpose().values());
        assert!(jump_consistent(&right.sigma, &right));
    }
}

#[test]
fn identity_integrand_returns_driver() {
    let g = make_grid(1.0, 0.5, 10).unwrap();
    let l = sample_driver_shaped(&DriverSpec::Brownian { covariance: DMatrix::identity(4, 4), drift: vec![0.0; 4] }, (2, 2), &g, RngStream::new(1, 1)).unwrap();
    let id = PathSkeleton::from_grid_values(
        l.times().to_vec(),
        (2, 2),
        vec![1.0, 0.0, 0.0, 1.0],
        DMatrix::<f64>::identity(2, 2).as_slice().repeat(l.len()),
        ContinuousKind::None,
    )
    .unwrap();
    let y = stochastic_integral(&id, &l, Side::Left).unwrap();
    for i in 0..l.len() {
        for (a, b) in y.value(i).iter().zip(l.value(i)) {
            assert!(close(*a, *b, 1e-13));
        }
    }
}

#[test]
fn integral_of_path_against_itself() {
    let g = make_grid(1.0, 0.5, 14).unwrap();
    for spec in [cp(5.0, 0.3), brownian(1.0), DriverSpec::Deterministic { drift: vec![0.7] }] {
        for k in 0..10 {
            let l = sample_driver(&spec, &g, RngStream::new(13, k)).unwrap();
            let int = stochastic_integral(&l, &l, Side::Left).unwrap();
            let qv = realized_covariation(&l, &l).unwrap();
            for i in 0..l.len() {
                let lt = l.value(i)[0];
                let expect = 0.5 * (lt * lt - qv.value(i)[0]);
                assert!(close(int.value(i)[0], expect, 1e-12), "{} vs {expect}", int.value(i)[0]);
            }
        }
    }
}

#[test]
fn transposed_integral() {
    let g = make_grid(1.0, 0.5, 8).unwrap();
    let h = sample_driver_shaped(
        &DriverSpec::Brownian {
            covariance: DMatrix::identity(6, 6),
            drift: vec![0.0; 6],
        },
        (3, 2),
        &g,
        RngStream::new(2, 0),
    )
    .unwrap();
    let x = sample_driver_shaped(
        &DriverSpec::Brownian {
            covariance: DMatrix::identity(8, 8),
            drift: vec![0.0; 8],
        },
        (2, 4),
        &g,
        RngStream::new(2, 1),
    )
    .unwrap();
    let left = stochastic_integral(&h, &x, Side::Left).unwrap();
    let right = stochastic_integral(&h.transpose(), &x.transpose(), Side::Right).unwrap();
    assert_eq!(right.shape(), (4, 3));
    assert_eq!(right.values(), left.transpose().values());
}

#[test]
fn poisson_bracket_counts_jumps() {
    let g = make_grid(1.0, 0.5, 10).unwrap();
    for k in 0..20 {
        let l = sample_driver(&unit_poisson(8.0), &g, RngStream::new(17, k)).unwrap();
        let qv = realized_covariation(&l, &l).unwrap();
        for i in 0..l.len() {
            let count = l.jump_indices().iter().filter(|&&j| j <= i).count();
            assert_eq!(qv.value(i)[0], count as f64);
        }
    }
}

#[test]
fn brownian_realized_variance() {
    let g = TimeGrid::uniform(1.0, 1 << 14).unwrap();
    let paths = sample_ensemble(&brownian(1.0), &g, 19, 1000).unwrap();
    let qv: Vec<f64> = paths
        .iter()
        .map(|l| {
            let q = realized_covariation(l, l).unwrap();
            q.value(q.len() - 1)[0]
        })
        .collect();
    let mean = qv.iter().sum::<f64>() / qv.len() as f64;
    assert!((mean - 1.0).abs() <= 0.05, "{mean}");
    let outside = qv.iter().filter(|q| (*q - 1.0).abs() > 0.05).count();
    assert!(outside <= 10, "{outside} paths outside 1 ± 0.05");
}

#[test]
fn bracket_is_bilinear() {
    let g = make_grid(1.0, 0.5, 10).unwrap();
    let spec = DriverSpec::Stack {
        parts: vec![cp(4.0, 0.1), cp(3.0, 0.0), brownian(1.0)],
    };
    let (a, b) = (1.75, -0.5);
    for k in 0..10 {
        let l = sample_driver(&spec, &g, RngStream::new(23, k)).unwrap();
        let (x, z, y) = (component(&l, 0), component(&l, 1), component(&l, 2));
        let combo = map_components(&l, |v| a * v[0] + b * v[1]);
        let lhs = realized_covariation(&combo, &y).unwrap();
        let xy = realized_covariation(&x, &y).unwrap();
        let zy = realized_covariation(&z, &y).unwrap();
        for i in 0..l.len() {
            let rhs = a * xy.value(i)[0] + b * zy.value(i)[0];
            assert!(close(lhs.value(i)[0], rhs, 1e-12));
        }
    }
}

#[test]
fn integration_by_parts_examples() {
    let g = make_grid(1.0, 0.5, 12).unwrap();
    for k in 0..10 {
        let x = sample_driver(&cp(5.0, 0.2), &g, RngStream::new(29, 2 * k)).unwrap();
        let y = sample_driver(&cp(3.0, -0.1), &g, RngStream::new(29, 2 * k + 1)).unwrap();
        assert!(integration_by_parts_residual(&x, &y).unwrap() <= 1e-12);
    }
    let det = sample_driver(&DriverSpec::Deterministic { drift: vec![0.6] }, &g, RngStream::new(0, 0)).unwrap();
    assert_eq!(integration_by_parts_residual(&det, &det).unwrap(), 0.0);
    let qv = realized_covariation(&det, &det).unwrap();
    assert!(qv.values().iter().all(|v| *v == 0.0));

    let entries: Vec<PathSkeleton> =
        (0..4).map(|c| sample_driver(&unit_poisson(2.0 + c as f64), &g, RngStream::new(31, c)).unwrap()).collect();
    let m = assemble_matrix_driver(&entries, 2, 2).unwrap();
    let entries2: Vec<PathSkeleton> =
        (0..4).map(|c| sample_driver(&cp(4.0, 0.0), &g, RngStream::new(37, c)).unwrap()).collect();
    let n = assemble_matrix_driver(&entries2, 2, 2).unwrap();
    assert!(integration_by_parts_residual(&m, &n).unwrap() <= 1e-12);
}

#[test]
fn recover_with_identity_sigma() {
    let g = make_grid(1.0, 0.5, 10).unwrap();
    let l = sample_driver(&brownian(1.0), &g, RngStream::new(41, 0)).unwrap();
    let sigma = SigmaMap::identity(1).unwrap();
    let sol = solve_sde(&sigma, &[3.0], &l, Substeps::Auto).unwrap();
    let r = recover_driver(&sigma, &sol).unwrap();
    for i in 0..l.len() {
        assert!(close(r.value(i)[0], l.value(i)[0], 1e-13));
    }
}

#[test]
fn recover_pure_jump_round_trip() {
    let g = make_grid(1.0, 0.5, 16).unwrap();
    let sigma = SigmaMap::sin_shift(2.0, 1.0).unwrap();
    for k in 0..50 {
        let l = sample_driver(&cp(5.0, 0.0), &g, RngStream::new(43, k)).unwrap();
        let sol = solve_sde(&sigma, &[0.0], &l, Substeps::Auto).unwrap();
        let r = recover_driver(&sigma, &sol).unwrap();
        for gi in 0..l.grid_indices().len() {
            let (a, b) = (r.grid_value(gi)[0], l.grid_value(gi)[0]);
            assert!((a - b).abs() <= 1e-10, "{a} vs {b}");
        }
    }
}

#[test]
fn recover_through_zero_is_singular() {
    let hit = PathSkeleton::from_parts(SkeletonParts {
        times: vec![0.25, 0.5, 1.0],
        shape: (1, 1),
        origin: vec![0.0],
        values: vec![0.0, -1.0, -1.0],
        grid_indices: vec![0, 2],
        jump_indices: vec![1],
        pre_jump: vec![0.0],
        seed_id: 0,
        continuous: ContinuousKind::None,
    })
    .unwrap();
    let sigma = SigmaMap::linear_scalar().unwrap();
    let sol = solve_sde(&sigma, &[2.0], &hit, Substeps::Auto).unwrap();
    assert_eq!(sol.path.value(2)[0], 0.0);
    match recover_driver(&sigma, &sol) {
        Err(SdeError::IllConditioned { time, .. }) => assert_eq!(time, 1.0),
        other => panic!("expected singularity, got {other:?}"),
    }
}

#[test]
fn recover_with_drift_converges_at_first_order() {
    let sigma = SigmaMap::sin_shift(2.0, 1.0).unwrap();
    let err = |n: usize| -> f64 {
        let g = TimeGrid::uniform(1.0, n).unwrap();
        let mut total = 0.0;
        for k in 0..20 {
            let l = sample_driver(&cp(5.0, 0.3), &g, RngStream::new(47, k)).unwrap();
            let sol = solve_sde(&sigma, &[0.0], &l, Substeps::Fixed(4000)).unwrap();
            let r = recover_driver(&sigma, &sol).unwrap();
            total += (0..l.len()).map(|i| (r.value(i)[0] - l.value(i)[0]).abs()).fold(0.0, f64::max);
        }
        total / 20.0
    };
    let (coarse, fine) = (err(25), err(50));
    let order = (coarse / fine).log2();
    assert!(order >= 0.9, "errors {coarse:e} → {fine:e}, order {order}");
}

#[test]
fn ito_residuals() {
    let g = make_grid(1.0, 0.5, 10).unwrap();
    let affine = SigmaMap::affine(DMatrix::from_element(1, 1, 0.5), vec![DMatrix::from_element(1, 1, 2.0)]).unwrap();
    let sin = SigmaMap::sin_shift(2.0, 1.0).unwrap();
    let mut seen = 0;
    for k in 0..30 {
        let l = sample_driver(&cp(6.0, 0.1), &g, RngStream::new(53, k)).unwrap();
        let sol = solve_sde(&affine, &[0.1], &l, Substeps::Auto).unwrap();
        for r in ito_jump_residual(&affine, &sol).unwrap() {
            assert!(r.residual.amax() <= 1e-12 * sol.path.values().iter().fold(1.0f64, |m, v| m.max(v.abs())));
        }
        let sol = solve_sde(&sin, &[0.0], &l, Substeps::Auto).unwrap();
        for r in ito_jump_residual(&sin, &sol).unwrap() {
            assert_eq!(r.bound, 0.5);
            assert!(r.ratio <= r.bound + 1e-12, "{} > {}", r.ratio, r.bound);
            seen += 1;
        }
    }
    assert!(seen > 20);
    let quiet = sample_driver(&DriverSpec::Deterministic { drift: vec![1.0] }, &g, RngStream::new(0, 0)).unwrap();
    let sol = solve_sde(&sin, &[0.0], &quiet, Substeps::Auto).unwrap();
    assert!(ito_jump_residual(&sin, &sol).unwrap().is_empty());
    let no_hessian = SigmaMap::from_fns(
        1,
        1,
        "cos",
        |x| DMatrix::from_element(1, 1, x[0].cos()),
        |x| vec![DMatrix::from_element(1, 1, -x[0].sin())],
    )
    .unwrap();
    let sol = solve_sde(&no_hessian, &[0.0], &quiet, Substeps::Auto).unwrap();
    assert!(matches!(ito_jump_residual(&no_hessian, &sol), Err(SdeError::MissingHessian(_))));
}

fn mixed_driver() -> impl Strategy<Value = (DriverSpec, u64)> {
    (0.0f64..10.0, -1.0f64..1.0, 0.0f64..2.0, any::<u64>()).prop_map(|(rate, drift, var, seed)| {
        (
            DriverSpec::Sum {
                parts: vec![cp(rate, drift), brownian(var)],
            },
            seed,
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn solver_applies_jumps_exactly((spec, seed) in mixed_driver(), x0 in -3.0f64..3.0) {
        let g = make_grid(1.0, 0.5, 8).unwrap();
        let l = sample_driver(&spec, &g, RngStream::new(seed, 0)).unwrap();
        let sigma = SigmaMap::sin_shift(2.0, 1.0).unwrap();
        let sol = solve_sde(&sigma, &[x0], &l, Substeps::Auto).unwrap();
        prop_assert!(jump_consistent(&sigma, &sol));
        let diag = SigmaMap::diag_sin(vec![1.0, 2.0], vec![0.5, -1.0]).unwrap();
        let l2 = sample_driver(&DriverSpec::Stack { parts: vec![spec.clone(), spec] }, &g, RngStream::new(seed, 1)).unwrap();
        let sol2 = solve_sde(&diag, &[x0, -x0], &l2, Substeps::Auto).unwrap();
        prop_assert!(jump_consistent(&diag, &sol2));
    }

    #[test]
    fn realized_kunita_watanabe((a, s1) in mixed_driver(), (b, s2) in mixed_driver()) {
        let g = make_grid(1.0, 0.5, 10).unwrap();
        let l = sample_driver(&DriverSpec::Stack { parts: vec![a, b] }, &g, RngStream::new(s1, s2)).unwrap();
        let (x, y) = (component(&l, 0), component(&l, 1));
        let xy = realized_covariation(&x, &y).unwrap();
        let xx = realized_covariation(&x, &x).unwrap();
        let yy = realized_covariation(&y, &y).unwrap();
        for i in 0..xy.len() {
            let bound = (xx.value(i)[0] * yy.value(i)[0]).sqrt();
            prop_assert!(xy.value(i)[0].abs() <= bound * (1.0 + 1e-12) + 1e-300);
        }
    }

    #[test]
    fn integration_by_parts_is_exact((a, s1) in mixed_driver(), (b, s2) in mixed_driver()) {
        let g = make_grid(1.0, 0.5, 10).unwrap();
        let l = sample_driver(&DriverSpec::Stack { parts: vec![a, b] }, &g, RngStream::new(s1, s2)).unwrap();
        let (x, y) = (component(&l, 0), component(&l, 1));
        prop_assert!(integration_by_parts_residual(&x, &y).unwrap() <= 1e-10);
        let sigma = SigmaMap::sin_shift(2.0, 1.0).unwrap();
        let sol = solve_sde(&sigma, &[0.5], &x, Substeps::Auto).unwrap();
        prop_assert!(integration_by_parts_residual(&sol.path, &y).unwrap() <= 1e-10);
    }
}
