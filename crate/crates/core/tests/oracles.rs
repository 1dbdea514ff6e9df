use minmax_langevin::deterministic::solve_equilibrium;
use minmax_langevin::dynamics::{run_algorithm, AlgorithmParams, ParticleState};
use minmax_langevin::metrics::{empirical_w2_1d, gaussian_kl, gaussian_relative_fi, gaussian_w2};
use minmax_langevin::oracle::{
    laplace_proxy, plan_parameters, quadratic_equilibrium, quadratic_equilibrium_joint, GaussianDist, Regime,
};
use minmax_langevin::payoff::{PayoffSpec, Quadratic};
use minmax_langevin::rng::create_stream;
use nalgebra::{DMatrix, DVector};

fn g1(mean: f64, var: f64) -> GaussianDist {
    GaussianDist::new(DVector::from_element(1, mean), DMatrix::from_element(1, 1, var)).unwrap()
}

fn log_density(x: f64, var: f64) -> f64 {
    -x * x / (2.0 * var) - 0.5 * (2.0 * std::f64::consts::PI * var).ln()
}

#[test]
fn kl_matches_quadrature() {
    let (lo, hi, n) = (-40.0, 40.0, 400_000);
    let h = (hi - lo) / n as f64;
    let mut total = 0.0;
    for i in 0..=n {
        let x = lo + h * i as f64;
        let (lp, lq) = (log_density(x, 2.0), log_density(x, 1.0));
        let w = if i == 0 || i == n { 0.5 } else { 1.0 };
        total += w * lp.exp() * (lp - lq);
    }
    let quad = total * h;
    let closed = gaussian_kl(&g1(0.0, 2.0), &g1(0.0, 1.0)).unwrap();
    assert!((closed - 0.5 * (2.0 - 1.0 - 2f64.ln())).abs() < 1e-15);
    assert!((closed - 0.153426).abs() < 1e-6);
    assert!((quad - closed).abs() < 1e-9, "{quad} vs {closed}");
}

#[test]
fn relative_fisher_matches_monte_carlo() {
    // ∇log(ρ/ν)(x) = −x + x/2 for ρ = N(0,1), ν = N(0,2)
    let mut s = create_stream(123, 0);
    let n = 1_000_000;
    let mc = (0..n).map(|_| {
        let x = s.next_normal();
        (x / 2.0) * (x / 2.0)
    }).sum::<f64>() / n as f64;
    let closed = gaussian_relative_fi(&g1(0.0, 1.0), &g1(0.0, 2.0)).unwrap();
    assert!((closed - 0.25).abs() < 1e-15);
    assert!((mc - closed).abs() < 0.005, "{mc}");
}

#[test]
fn empirical_w2_converges_to_closed_form() {
    let n = 100_000;
    let mut s = create_stream(7, 1);
    let a: Vec<f64> = (0..n).map(|_| s.next_normal()).collect();
    let b: Vec<f64> = (0..n).map(|_| 0.5 + 1.5 * s.next_normal()).collect();
    let emp = empirical_w2_1d(&a, &b).unwrap();
    let exact = gaussian_w2(&g1(0.0, 1.0), &g1(0.5, 2.25)).unwrap().sqrt();
    assert!((exact - 0.5f64.sqrt()).abs() < 1e-12);
    assert!((emp - exact).abs() / exact <= 0.05, "{emp} vs {exact}");
}

#[test]
fn equilibrium_hand_solution() {
    // 2x + y + 1 = 0 and x − y = 0
    let q = Quadratic::new(
        DMatrix::from_element(1, 1, 2.0),
        DMatrix::from_element(1, 1, 1.0),
        DMatrix::from_element(1, 1, 1.0),
        DVector::from_element(1, 1.0),
        DVector::zeros(1),
    )
    .unwrap();
    let spec = PayoffSpec::quadratic(q);
    let (nx, ny) = quadratic_equilibrium(&spec, 0.5).unwrap();
    assert!((nx.mean()[0] + 1.0 / 3.0).abs() < 1e-15);
    assert!((ny.mean()[0] + 1.0 / 3.0).abs() < 1e-15);
    assert!((nx.cov()[(0, 0)] - 0.25).abs() < 1e-15);
    assert!((ny.cov()[(0, 0)] - 0.5).abs() < 1e-15);
    let (z, _) = solve_equilibrium(&spec, 1e-12, 1).unwrap();
    let proxy = laplace_proxy(&spec, 0.5, &z).unwrap();
    let joint = quadratic_equilibrium_joint(&spec, 0.5).unwrap();
    assert!((proxy.mean() - joint.mean()).amax() < 1e-15);
    assert!((proxy.cov() - joint.cov()).amax() < 1e-15);
}

#[test]
fn talagrand_by_hand() {
    let kl = gaussian_kl(&g1(0.0, 2.0), &g1(0.0, 1.0)).unwrap();
    let w2 = gaussian_w2(&g1(0.0, 2.0), &g1(0.0, 1.0)).unwrap();
    assert!((w2 - (2f64.sqrt() - 1.0).powi(2)).abs() < 1e-12);
    assert!(kl >= 0.5 * w2);
}

#[test]
fn plan_is_monotone_in_eps() {
    let regime = Regime {
        alpha: 0.7,
        smooth_l: 1.9,
        tau: 0.3,
        dim: 3.0,
    };
    let mut prev: Option<(u64, u64)> = None;
    for i in 0..30 {
        let eps = 0.5 * 0.8f64.powi(i);
        let plan = plan_parameters(&regime, eps, 2.0).unwrap();
        assert!(plan.eta <= regime.alpha / (64.0 * regime.smooth_l.powi(2)));
        if let Some((n, k)) = prev {
            assert!(plan.n_particles >= n && plan.iters >= k);
        }
        prev = Some((plan.n_particles, plan.iters));
    }
}

#[test]
fn second_moment_stays_bounded() {
    let spec = PayoffSpec::quadratic(Quadratic::isotropic(1, 1.0, 1.0, 0.5).unwrap());
    let c = spec.constants().unwrap();
    let (n, d, tau) = (16, 1, 1.0);
    let eta = 0.25 * c.alpha / (c.smooth_l * c.smooth_l);
    assert!(eta < c.stability_eta_limit());
    let m2 = c.contraction_factor(eta).powi(2);
    let mut s = create_stream(3, 3);
    let z0: Vec<f64> = (0..2 * n * d).map(|_| 2.0 * s.next_normal()).collect();
    let init = ParticleState::from_joint(n, d, &z0, 0).unwrap();
    let d0: f64 = z0.iter().map(|v| v * v).sum();
    let params = AlgorithmParams::new(eta, tau, n, 5000);
    let out = run_algorithm(&spec, &init, &params, 11, 1).unwrap();
    let running: f64 = out
        .checkpoints
        .iter()
        .map(|cp| cp.state.joint().iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        / out.checkpoints.len() as f64;
    let bound = 2.0 * d0 + 8.0 * tau * eta * (d * n) as f64 / (1.0 - m2);
    assert!(running <= 1.1 * bound, "{running} vs {bound}");
}
