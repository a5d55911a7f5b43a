use cascade_risk::graph::{build_complete, build_path, build_pcycle, Spectrum, WeightedGraph};
use cascade_risk::risk::{
    conditional_expectation, dr_cascading_risk, single_agent_risk, sup_over_scale, AmbiguitySpec,
    Convention, FailureEvent,
};
use cascade_risk::statistics::{f_curve_minimizer, steady_state_covariance};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

/// Random spanning tree plus random extra edges.
fn connected_graph(max_n: usize) -> impl Strategy<Value = WeightedGraph> {
    (2..=max_n)
        .prop_flat_map(|n| {
            (
                Just(n),
                prop::collection::vec((0.0f64..1.0, 0.1f64..3.0), n - 1),
                prop::collection::vec((0..n, 0..n, 0.1f64..3.0), 0..(2 * n)),
            )
        })
        .prop_map(|(n, tree, extra)| {
            let mut w = DMatrix::zeros(n, n);
            for (k, (u, wt)) in tree.into_iter().enumerate() {
                let child = k + 1;
                let parent = ((u * child as f64) as usize).min(child - 1);
                w[(child, parent)] = wt;
                w[(parent, child)] = wt;
            }
            for (a, b, wt) in extra {
                if a != b {
                    w[(a, b)] = wt;
                    w[(b, a)] = wt;
                }
            }
            WeightedGraph::from_weights(w).unwrap()
        })
}

fn frob_rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn generated_graphs_are_valid(n in 3usize..30, half in 1usize..14, w in 0.1f64..5.0) {
        let p = 2 * half.min((n - 1) / 2);
        for g in [build_complete(n, w).unwrap(), build_path(n, w).unwrap(), build_pcycle(n, p, w).unwrap()] {
            let m = g.weights();
            prop_assert_eq!(m, &m.transpose());
            prop_assert!(m.diagonal().iter().all(|&d| d == 0.0));
            prop_assert_eq!(g.components(), 1);
        }
    }

    #[test]
    fn spectrum_reconstructs_laplacian(g in connected_graph(50)) {
        let l = g.laplacian();
        let s = l.spectrum().unwrap();
        let n = g.n();
        prop_assert!(frob_rel(&s.reconstruct(), l.matrix()) <= 1e-9);
        let q = s.eigenvectors();
        prop_assert!((q.transpose() * q - DMatrix::identity(n, n)).amax() <= 1e-10);
        prop_assert_eq!(s.eigenvalues()[0], 0.0);
        prop_assert!(s.lambda_2() > 0.0);
        let ones = DVector::from_element(n, 1.0 / (n as f64).sqrt());
        prop_assert_eq!(q.column(0).into_owned(), ones);
        // L·𝟙 = 0
        prop_assert!((l.matrix() * DVector::from_element(n, 1.0)).amax() < 1e-12);
    }

    #[test]
    fn spectrum_scales_linearly(g in connected_graph(30)) {
        let l = g.laplacian();
        let base = l.spectrum().unwrap();
        for kappa in [0.5, 2.0] {
            let scaled = l.scaled(kappa).spectrum().unwrap();
            for k in 0..g.n() {
                let want = kappa * base.eigenvalues()[k];
                prop_assert!((scaled.eigenvalues()[k] - want).abs() <= 1e-9 * want.abs().max(1.0));
            }
        }
    }

    #[test]
    fn covariance_is_centered_psd_and_b_squared(g in connected_graph(20), b in 0.1f64..5.0, kappa in 0.2f64..3.0) {
        let s = g.laplacian().spectrum().unwrap();
        let tau = 0.5 * std::f64::consts::FRAC_PI_2 / s.lambda_max();
        let cov = steady_state_covariance(&s, b, tau).unwrap();
        let n = g.n();
        prop_assert!((cov.sigma() * DVector::from_element(n, 1.0)).amax() <= 1e-9);
        let eig = cov.sigma().clone().symmetric_eigenvalues();
        prop_assert!(eig.min() >= -1e-10 * cov.sigma().amax());
        prop_assert!(cov.correlations().iter().all(|r| (-1.0..=1.0).contains(r)));
        let big = steady_state_covariance(&s, kappa * b, tau).unwrap();
        prop_assert!((cov.sigma() * (kappa * kappa) - big.sigma()).amax() <= 1e-12 * big.sigma().amax().max(1.0));
    }

    #[test]
    fn risk_grows_with_ambiguity_radius(
        si in 0.2f64..3.0, sj in 0.2f64..3.0, rho in -0.95f64..0.95, delta in 0.0f64..2.0,
        e1 in 0.0f64..0.95, de in 0.0f64..0.5,
    ) {
        let e2 = (e1 + de).min(0.99);
        let fe = FailureEvent::new(0, delta, 0.1).unwrap();
        for conv in [Convention::StdScale, Convention::VarScale] {
            let a = sup_over_scale(si, sj, rho, fe.delta_bar(), &AmbiguitySpec::new(e1, conv).unwrap()).unwrap().0;
            let b = sup_over_scale(si, sj, rho, fe.delta_bar(), &AmbiguitySpec::new(e2, conv).unwrap()).unwrap().0;
            prop_assert!(b >= a - 1e-12, "{conv}: eps {e1} -> {a}, eps {e2} -> {b}");
        }
    }

    #[test]
    fn uncorrelated_risk_ignores_threshold(sj in 0.05f64..3.0, d1 in 0.0f64..4.0, d2 in 0.0f64..4.0, eps in 0.0f64..0.9) {
        let amb = AmbiguitySpec::new(eps, Convention::StdScale).unwrap();
        let a = sup_over_scale(1.0, sj, 0.0, d1, &amb).unwrap().0;
        let b = sup_over_scale(1.0, sj, 0.0, d2, &amb).unwrap().0;
        prop_assert!((a - b).abs() <= 1e-12 * a);
        let single = single_agent_risk(sj, &amb, 0.1).unwrap();
        prop_assert!(((a - 0.1).max(0.0) - single).abs() <= 1e-12);
    }

    #[test]
    fn conditional_expectation_is_nonnegative(si in 0.01f64..10.0, sj in 0.01f64..10.0, rho in -1.0f64..=1.0, d in 0.0f64..20.0) {
        let v = conditional_expectation(si, sj, rho, d).unwrap();
        prop_assert!(v.is_finite() && v >= 0.0);
    }
}

#[test]
fn covariance_does_not_depend_on_eigenbasis_choice() {
    // complete graph: the nontrivial eigenspace is fully degenerate
    let n = 9;
    let s = build_complete(n, 1.0)
        .unwrap()
        .laplacian()
        .spectrum()
        .unwrap();
    // Householder reflection acting inside span(q2..qn)
    let q = s.eigenvectors().clone();
    let mut v = DVector::from_fn(n - 1, |k, _| (k as f64 + 1.0).sin());
    v /= v.norm();
    let h = DMatrix::identity(n - 1, n - 1) - 2.0 * &v * v.transpose();
    let mut rotated = q.clone();
    let tail = q.columns(1, n - 1) * h;
    rotated.columns_mut(1, n - 1).copy_from(&tail);
    let alt = Spectrum::from_parts(s.eigenvalues().clone(), rotated).unwrap();
    let a = steady_state_covariance(&s, 2.0, 0.03).unwrap();
    let b = steady_state_covariance(&alt, 2.0, 0.03).unwrap();
    assert!((a.sigma() - b.sigma()).amax() <= 1e-10);
}

fn psd_gap(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).symmetric_eigenvalues().min()
}

fn unit_spectrum(topo: &str, n: usize) -> (cascade_risk::Topology, f64, f64) {
    let topo: cascade_risk::Topology = topo.parse().unwrap();
    let s = topo.build(n, 1.0).unwrap().laplacian().spectrum().unwrap();
    (topo, s.lambda_2(), s.lambda_max())
}

fn cov_at(topo: cascade_risk::Topology, n: usize, w: f64, tau: f64) -> DMatrix<f64> {
    let s = topo.build(n, w).unwrap().laplacian().spectrum().unwrap();
    steady_state_covariance(&s, 1.0, tau)
        .unwrap()
        .sigma()
        .clone()
}

#[test]
fn weight_scaling_below_minimizer_shrinks_covariance() {
    let tau = 0.05;
    let xbar = f_curve_minimizer();
    for (topo, n) in [
        ("path", 8usize),
        ("cycle:4", 11),
        ("cycle:8", 11),
        ("complete", 6),
    ] {
        let (topo, _, lmax) = unit_spectrum(topo, n);
        let w_hi = 0.9 * xbar / (lmax * tau);
        let w_lo = 0.5 * w_hi;
        assert!(
            psd_gap(&cov_at(topo, n, w_lo, tau), &cov_at(topo, n, w_hi, tau)) >= -1e-9,
            "{topo}"
        );
    }
}

#[test]
fn weight_scaling_above_minimizer_grows_covariance() {
    // every nontrivial mode must sit above x̄, i.e. λ2 τ >= x̄ for the lighter graph
    let tau = 0.05;
    let xbar = f_curve_minimizer();
    let edge = std::f64::consts::FRAC_PI_2;
    for (topo, n) in [("complete", 6usize), ("complete", 21), ("cycle:8", 11)] {
        let (topo, l2, lmax) = unit_spectrum(topo, n);
        let w1 = 1.01 * xbar / (l2 * tau);
        let w2 = 0.98 * edge / (lmax * tau);
        assert!(w1 < w2, "{topo}: no admissible weight pair");
        assert!(
            psd_gap(&cov_at(topo, n, w2, tau), &cov_at(topo, n, w1, tau)) >= -1e-9,
            "{topo}"
        );
    }
}

#[test]
fn spectral_radius_alone_does_not_order_covariances_above_minimizer() {
    // path: λn τ >= x̄ while λ2 τ is far below it, so the slow modes still
    // shrink as weight grows and the difference is indefinite
    let tau = 0.05;
    let xbar = f_curve_minimizer();
    let (topo, l2, lmax) = unit_spectrum("path", 8);
    let w1 = 1.05 * xbar / (lmax * tau);
    let w2 = 0.98 * std::f64::consts::FRAC_PI_2 / (lmax * tau);
    assert!(l2 * w2 * tau < xbar);
    let gap = psd_gap(&cov_at(topo, 8, w2, tau), &cov_at(topo, 8, w1, tau));
    assert!(gap < -1e-6, "{gap}");
}

#[test]
fn complete_graph_closed_form_over_weight_grid() {
    let params = cascade_risk::NetworkParams::default();
    let fe = FailureEvent::new(3, 0.1, params.c).unwrap();
    let amb = AmbiguitySpec::new(params.epsilon, Convention::StdScale).unwrap();
    for w in [0.2, 0.5, 0.8, 1.0, 1.3] {
        let closed =
            cascade_risk::complete_graph_risk(21, w, &params, &fe, Convention::StdScale).unwrap();
        let s = build_complete(21, w)
            .unwrap()
            .laplacian()
            .spectrum()
            .unwrap();
        let cov = steady_state_covariance(&s, params.b0, params.tau).unwrap();
        let general = dr_cascading_risk(&cov, 3, 7, &fe, &amb).unwrap();
        assert!((closed - general).abs() <= 1e-10, "w = {w}");
    }
}

#[test]
fn zero_radius_risk_is_nominal_and_n3_complete_has_half_negative_correlation() {
    let s = build_complete(3, 1.0)
        .unwrap()
        .laplacian()
        .spectrum()
        .unwrap();
    let cov = steady_state_covariance(&s, 1.0, 0.0).unwrap();
    assert!((cov.corr(0, 1) + 0.5).abs() < 1e-12);
    let params = cascade_risk::NetworkParams::new(0.0, 1.0, 0.0, 0.1).unwrap();
    let fe = FailureEvent::new(0, 0.1, 0.1).unwrap();
    let v = cascade_risk::complete_graph_risk(3, 1.0, &params, &fe, Convention::StdScale).unwrap();
    let quad =
        cascade_risk::oracle::quadrature_conditional_expectation(cov.std(0), cov.std(1), -0.5, 0.2)
            .unwrap();
    assert!(v.is_finite());
    assert!((v - (quad - 0.1).max(0.0)).abs() < 1e-8);
}
