//! End-to-end acceptance checks: solver correctness against an
//! independent oracle, the documented constraint layout, reproduction of
//! the reference Monte-Carlo results at desk scale, and the structural
//! guarantees of the transformation and permutation machinery.
//!
//! Each test prints one `ACCEPTANCE <n> ... PASS` line for the checklist.

use ndarray::{array, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use scls_core::inference::{fast_sl_replicates, test_independence, Model};
use scls_core::qp::solve_qp;
use scls_core::scls::{
    assemble_qp, assemble_qp_with_upper_bounds, fit_alpha_scls, fit_scls, interpret_delta,
    scls_loss, CoefficientMatrix,
};
use scls_core::simplex::{
    alpha_transform, alr, alr_inverse, dirichlet_sample, helmert_submatrix, ilr, ilr_inverse,
    power_transform, power_transform_inverse, Composition, CompositionMatrix,
};
use scls_core::simulation::{
    gen_linked_data_with, ground_truth_coefficients, run_discrepancy, run_power, run_type1,
    SimConfig,
};
use scls_core::tflr::{fit_tflr, fit_tflr_from, tflr_divergence};

fn pass(number: usize, name: &str) {
    println!("ACCEPTANCE {number} ({name}): PASS");
}

/// Euclidean projection of a vector onto the probability simplex.
fn project_to_simplex(v: &mut [f64]) {
    let mut sorted: Vec<f64> = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumsum = 0.0;
    let mut rho = 0;
    for (i, &s) in sorted.iter().enumerate() {
        cumsum += s;
        if s - (cumsum - 1.0) / (i + 1) as f64 > 0.0 {
            rho = i + 1;
        }
    }
    let theta: f64 = (sorted[..rho].iter().sum::<f64>() - 1.0) / rho as f64;
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
    let sum: f64 = v.iter().sum();
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// Independent oracle: projected-gradient descent on the squared loss with
/// per-row simplex projection.
fn projected_gradient_oracle(
    y: &CompositionMatrix,
    x: &CompositionMatrix,
    iterations: usize,
) -> Array2<f64> {
    let xa = x.as_array();
    let ya = y.as_array();
    let (d_p, d_r) = (x.ncols(), y.ncols());
    let xtx = xa.t().dot(xa);
    let xty = xa.t().dot(ya);
    // Lipschitz constant of the gradient: 2 * lambda_max(X'X) <= 2 tr(X'X)
    let step = 1.0 / (2.0 * xtx.diag().sum());
    let mut b = Array2::from_elem((d_p, d_r), 1.0 / d_r as f64);
    for _ in 0..iterations {
        let grad = 2.0 * (&xtx.dot(&b) - &xty);
        b = &b - &(grad * step);
        for mut row in b.rows_mut() {
            project_to_simplex(row.as_slice_mut().expect("contiguous row"));
        }
    }
    b
}

#[test]
fn criterion_01_qp_matches_projected_gradient_oracle() {
    let start = std::time::Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    for instance in 0..50 {
        let d_p = rng.random_range(2..=4usize);
        let d_r = rng.random_range(2..=4usize);
        let seed_x: u64 = rng.random();
        let seed_y: u64 = rng.random();
        let x = dirichlet_sample(&vec![1.0; d_p], 30, seed_x).unwrap();
        let y = dirichlet_sample(&vec![1.0; d_r], 30, seed_y).unwrap();
        let fit = fit_scls(&y, &x).unwrap();
        let oracle = projected_gradient_oracle(&y, &x, 1_000_000);
        let oracle_loss = scls_loss(&y.as_array().view(), &x.as_array().view(), &oracle);
        assert!(
            (fit.loss - oracle_loss).abs() < 1e-6,
            "instance {instance}: loss {} vs oracle {}",
            fit.loss,
            oracle_loss
        );
        for (a, b) in fit
            .coefficient_matrix()
            .as_array()
            .iter()
            .zip(oracle.iter())
        {
            assert!(
                (a - b).abs() < 1e-4,
                "instance {instance}: coefficient {a} vs oracle {b}"
            );
        }
    }
    assert!(
        start.elapsed().as_secs() < 60,
        "oracle comparison exceeded a minute"
    );
    pass(1, "QP matches projected-gradient oracle on 50 instances");
}

#[test]
fn criterion_02_constraint_layout() {
    let x = dirichlet_sample(&[1.0, 1.0, 1.0], 20, 2001).unwrap();
    let y = dirichlet_sample(&[1.0, 1.0, 1.0], 20, 2002).unwrap();
    let qp = assemble_qp(&y, &x).unwrap();

    // row-sum equality block: row j has ones at positions j, j+3, j+6
    assert_eq!(qp.n_equalities, 3);
    for j in 0..3 {
        for c in 0..9 {
            let expect = if c % 3 == j { 1.0 } else { 0.0 };
            assert_eq!(qp.amat_t[[j, c]], expect, "equality row {j} col {c}");
        }
        assert_eq!(qp.b0[j], 1.0);
    }
    // non-negativity block: identity with zero bounds
    for i in 0..9 {
        for c in 0..9 {
            let expect = if i == c { 1.0 } else { 0.0 };
            assert_eq!(qp.amat_t[[3 + i, c]], expect);
        }
        assert_eq!(qp.b0[3 + i], 0.0);
    }
    assert_eq!(qp.amat_t.nrows(), 12);

    // the redundant upper-bound block (-identity, bounds of -1) changes
    // nothing: same optimum with and without it
    let full = assemble_qp_with_upper_bounds(&y, &x).unwrap();
    assert_eq!(full.amat_t.nrows(), 21);
    for i in 0..9 {
        assert_eq!(full.amat_t[[12 + i, i]], -1.0);
        assert_eq!(full.b0[12 + i], -1.0);
    }
    let lean_sol = solve_qp(&qp).unwrap();
    let full_sol = solve_qp(&full).unwrap();
    for (a, b) in lean_sol.b.iter().zip(full_sol.b.iter()) {
        assert!((a - b).abs() < 1e-8);
    }
    pass(2, "constraint layout and redundant upper-bound equivalence");
}

#[test]
fn criterion_03_interpretation_arithmetic() {
    let b = CoefficientMatrix::new(array![
        [0.20, 0.40, 0.40],
        [0.10, 0.30, 0.60],
        [0.30, 0.35, 0.35],
        [0.50, 0.30, 0.20]
    ])
    .unwrap();
    let change = interpret_delta(&b, 0, 1, 0.1).unwrap();
    assert!((change[0] - 0.01).abs() < 1e-15);
    assert!((change[1] - 0.01).abs() < 1e-15);
    assert!((change[2] + 0.02).abs() < 1e-15);
    pass(3, "interpretation arithmetic exact");
}

#[test]
fn criterion_04_type1_error_desk_scale() {
    let start = std::time::Instant::now();
    let cfg = SimConfig::new(100, 3, 500, 199, 40_001);
    let rate = run_type1(&cfg, Model::Scls).unwrap();
    assert!(
        (0.025..=0.075).contains(&rate),
        "type-I rate {rate} outside [0.025, 0.075]"
    );
    assert!(start.elapsed().as_secs() < 600);
    pass(4, "type-I error within binomial band at nominal 5%");
}

#[test]
fn criterion_05_power_desk_scale() {
    let start = std::time::Instant::now();
    let b = ground_truth_coefficients(3).unwrap();
    let cfg = SimConfig::new(100, 3, 200, 199, 50_001);
    let scls_power = run_power(&cfg, &b, Model::Scls).unwrap();
    assert!(scls_power >= 0.99, "SCLS power {scls_power}");
    let tflr_power = run_power(&cfg, &b, Model::Tflr).unwrap();
    assert!(tflr_power >= 0.99, "TFLR power {tflr_power}");
    assert!(start.elapsed().as_secs() < 600);
    pass(
        5,
        "power at n=100 is 1 within Monte-Carlo error for both models",
    );
}

#[test]
fn criterion_06_discrepancy_desk_scale() {
    let start = std::time::Instant::now();
    let b = ground_truth_coefficients(3).unwrap();
    let cfg = SimConfig::new(500, 3, 200, 1, 60_001);
    let d = run_discrepancy(&cfg, &b).unwrap();
    assert!(
        (0.010..=0.026).contains(&d.scls_l1),
        "SCLS L1 {} outside [0.010, 0.026]",
        d.scls_l1
    );
    assert!(d.scls_kld <= 0.002, "SCLS KLD {}", d.scls_kld);
    assert!(
        d.tflr_l1 <= d.scls_l1 * 1.15,
        "TFLR L1 {} vs SCLS {}",
        d.tflr_l1,
        d.scls_l1
    );
    assert!(
        d.tflr_kld <= d.scls_kld * 1.15,
        "TFLR KLD {} vs SCLS {}",
        d.tflr_kld,
        d.scls_kld
    );
    assert!(start.elapsed().as_secs() < 300);
    pass(
        6,
        "coefficient discrepancy at n=500 matches reference scale",
    );
}

#[test]
fn criterion_07_discrepancy_decreases_in_n() {
    for d_r in [3, 5] {
        let b = ground_truth_coefficients(d_r).unwrap();
        let small = run_discrepancy(&SimConfig::new(50, d_r, 100, 1, 70_001), &b).unwrap();
        let large = run_discrepancy(&SimConfig::new(500, d_r, 100, 1, 70_001), &b).unwrap();
        assert!(
            large.scls_l1 < small.scls_l1,
            "D_r={d_r}: L1 {} at n=500 not below {} at n=50",
            large.scls_l1,
            small.scls_l1
        );
    }
    pass(7, "mean L1 discrepancy decreases from n=50 to n=500");
}

#[test]
fn criterion_08_education_shaped_recovery() {
    // the published 31-country table cannot be vendored, so the agreed
    // substitute applies: regenerate data from the published 3x3 estimate
    // and require both estimators to recover it
    let rows = array![
        [0.9014, 0.0559, 0.0428],
        [0.0000, 0.9409, 0.0591],
        [0.0000, 0.0737, 0.9263]
    ];
    let mut normalized = rows.clone();
    for mut r in normalized.rows_mut() {
        let s = r.sum();
        r.mapv_inplace(|v| v / s);
    }
    let truth = CoefficientMatrix::new(normalized).unwrap();
    let cfg = SimConfig {
        n: 500,
        d_r: 3,
        d_p: 3,
        replicates: 1,
        permutations: 1,
        seed: 80_001,
        concentration: 50.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (y, x) = gen_linked_data_with(&cfg, &truth, &mut rng).unwrap();
    let scls = fit_scls(&y, &x).unwrap();
    let tflr = fit_tflr(&y, &x).unwrap();
    for (est, name) in [
        (scls.coefficient_matrix(), "scls"),
        (&tflr.coefficients, "tflr"),
    ] {
        for (a, b) in est.as_array().iter().zip(truth.as_array().iter()) {
            assert!((a - b).abs() < 0.03, "{name}: estimate {a} vs truth {b}");
        }
    }
    pass(
        8,
        "both estimators recover the published-shape matrix at n=500",
    );
}

#[test]
fn criterion_09_em_properties() {
    // monotone objective on 100 random fits: the update asserts it
    // internally in debug builds, verified externally here against the
    // initializer and against random restarts
    let mut rng = ChaCha8Rng::seed_from_u64(90_001);
    for _ in 0..100 {
        let d_r = [3usize, 5, 7][rng.random_range(0..3)];
        let sx: u64 = rng.random();
        let sy: u64 = rng.random();
        let x = dirichlet_sample(&[1.0, 1.0, 1.0], 60, sx).unwrap();
        let y = dirichlet_sample(&vec![1.0; d_r], 60, sy).unwrap();
        let init = fit_scls(&y, &x).unwrap().coefficient_matrix().clone();
        let init_div = tflr_divergence(&y, &x, &init);
        let fit = fit_tflr_from(&y, &x, init).unwrap();
        assert!(
            fit.divergence <= init_div + 1e-12,
            "objective rose above start"
        );
        assert!(
            fit.converged,
            "no convergence in {} iterations",
            fit.iterations
        );
    }
    // reference-scale instances converge within the iteration budget
    for d_r in [3, 5, 7, 10] {
        let b = ground_truth_coefficients(d_r).unwrap();
        let cfg = SimConfig::new(200, d_r, 1, 1, 90_100 + d_r as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let (y, x) = gen_linked_data_with(&cfg, &b, &mut rng).unwrap();
        let fit = fit_tflr(&y, &x).unwrap();
        assert!(fit.converged && fit.iterations <= 5000);
    }
    pass(9, "EM objective monotone and convergent within budget");
}

#[test]
fn criterion_10_transformation_suite() {
    let mut rng = ChaCha8Rng::seed_from_u64(100_001);
    for _ in 0..50 {
        let d = rng.random_range(3..=8usize);
        let seed: u64 = rng.random();
        let sample = dirichlet_sample(&vec![2.0; d], 1, seed).unwrap();
        let y = sample.row(0);

        let v = alr(&y, d - 1).unwrap();
        let back = alr_inverse(&v, d - 1);
        for (a, b) in back.values().iter().zip(y.values().iter()) {
            assert!((a - b).abs() < 1e-10, "alr round trip");
        }
        let z = ilr(&y).unwrap();
        let back = ilr_inverse(&z).unwrap();
        for (a, b) in back.values().iter().zip(y.values().iter()) {
            assert!((a - b).abs() < 1e-10, "ilr round trip");
        }
        for alpha in [0.25, 0.5, 1.0, 1.7] {
            let w = power_transform(&y, alpha).unwrap();
            let back = power_transform_inverse(&w, alpha).unwrap();
            for (a, b) in back.values().iter().zip(y.values().iter()) {
                assert!((a - b).abs() < 1e-10, "power round trip at alpha={alpha}");
            }
        }
        // the alpha-transformation tends to the isometric log-ratio
        let za = alpha_transform(&y, 1e-6).unwrap();
        for (a, b) in za.iter().zip(z.iter()) {
            assert!((a - b).abs() < 1e-4, "alpha->0 limit");
        }
    }
    for d in [3, 5, 10, 25] {
        let h = helmert_submatrix(d).unwrap();
        let hht = h.entries().dot(&h.entries().t());
        for i in 0..d - 1 {
            for j in 0..d - 1 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((hht[[i, j]] - expect).abs() < 1e-12, "orthonormality");
            }
        }
    }
    // alpha = 1 fitting is the plain fit, bit for bit
    let x = dirichlet_sample(&[1.0, 1.0, 1.0], 40, 100_002).unwrap();
    let y = dirichlet_sample(&[2.0, 1.0, 2.0], 40, 100_003).unwrap();
    let plain = fit_scls(&y, &x).unwrap();
    let unit = fit_alpha_scls(&y, &x, 1.0).unwrap();
    for (a, b) in plain
        .coefficient_matrix()
        .as_array()
        .iter()
        .zip(unit.coefficient_matrix().as_array().iter())
    {
        assert_eq!(a.to_bits(), b.to_bits(), "alpha=1 bitwise identity");
    }
    pass(
        10,
        "transformation suite round trips, limits and identities",
    );
}

#[test]
fn criterion_11_fast_permutation_path() {
    // exactness on 10 random permutations
    let y = dirichlet_sample(&[2.0, 1.0, 3.0], 200, 110_001).unwrap();
    let x = dirichlet_sample(&[1.0, 1.0, 1.0], 200, 110_002).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(110_003);
    let perms: Vec<Vec<usize>> = (0..10)
        .map(|_| {
            use rand::seq::SliceRandom;
            let mut order: Vec<usize> = (0..200).collect();
            order.shuffle(&mut rng);
            order
        })
        .collect();
    let tr: f64 = y.as_array().iter().map(|v| v * v).sum();
    let fast = fast_sl_replicates(&y, &x, &perms).unwrap();
    for (perm, value) in perms.iter().zip(&fast) {
        let xp = x.select_rows(perm);
        let naive = fit_scls(&y, &xp).unwrap().loss;
        assert!(
            (value + tr - naive).abs() < 1e-8,
            "fast {value} + {tr} vs naive {naive}"
        );
    }

    // speedup at n = 1000, R = 200
    let y = dirichlet_sample(&[2.0, 1.0, 3.0], 1000, 110_004).unwrap();
    let x = dirichlet_sample(&[1.0, 1.0, 1.0], 1000, 110_005).unwrap();
    let perms: Vec<Vec<usize>> = (0..200)
        .map(|_| {
            use rand::seq::SliceRandom;
            let mut order: Vec<usize> = (0..1000).collect();
            order.shuffle(&mut rng);
            order
        })
        .collect();
    let start = std::time::Instant::now();
    let _ = fast_sl_replicates(&y, &x, &perms).unwrap();
    let fast_time = start.elapsed();
    let start = std::time::Instant::now();
    for perm in &perms {
        let xp = x.select_rows(perm);
        let _ = fit_scls(&y, &xp).unwrap();
    }
    let naive_time = start.elapsed();
    assert!(
        naive_time.as_secs_f64() >= 2.0 * fast_time.as_secs_f64(),
        "fast {fast_time:?} vs naive {naive_time:?}"
    );
    pass(11, "fast permutation path exact and at least twice as fast");
}

/// Sanity companion to the determinism criterion checked at the binary
/// level: the library-side permutation test is invariant to worker count
/// by construction (fixed replicate-to-stream mapping).
#[test]
fn replicate_results_do_not_depend_on_statistic_order() {
    let y = dirichlet_sample(&[1.0, 2.0, 1.0], 50, 120_001).unwrap();
    let x = dirichlet_sample(&[1.0, 1.0, 1.0], 50, 120_002).unwrap();
    let a = test_independence(&y, &x, 49, 9, Model::Scls).unwrap();
    let b = test_independence(&y, &x, 49, 9, Model::Scls).unwrap();
    assert_eq!(a.replicates, b.replicates);
    assert_eq!(a.p_value.to_bits(), b.p_value.to_bits());
}

/// The simplex projection helper used by the oracle is itself validated.
#[test]
fn oracle_projection_is_correct() {
    let mut v = vec![0.2, 0.8];
    project_to_simplex(&mut v);
    assert!((v[0] - 0.2).abs() < 1e-12 && (v[1] - 0.8).abs() < 1e-12);
    let mut v = vec![1.5, 0.5];
    project_to_simplex(&mut v);
    assert!((v[0] - 1.0).abs() < 1e-12 && v[1].abs() < 1e-12);
    let mut v = vec![-1.0, 0.4, 0.6];
    project_to_simplex(&mut v);
    assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(v.iter().all(|&x| x >= 0.0));
    let mut w = vec![5.0, 5.0, 5.0];
    project_to_simplex(&mut w);
    for x in w {
        assert!((x - 1.0 / 3.0).abs() < 1e-12);
    }
}

/// Barycentre rows are the uninformative fixed point: a composition left
/// unchanged by the model stays at the barycentre of the triangle.
#[test]
fn barycentre_row_predicts_barycentre() {
    let b = CoefficientMatrix::new(Array2::from_elem((3, 3), 1.0 / 3.0)).unwrap();
    let x = Composition::uniform(3);
    let pred = x.values().dot(b.as_array());
    for v in pred {
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }
}
