use minmax_langevin::config::{parse_config, to_toml};
use minmax_langevin::dynamics::{drift_map, drift_particles, DriftMode, ParticleState};
use minmax_langevin::metrics::{gaussian_kl, gaussian_w2};
use minmax_langevin::oracle::GaussianDist;
use minmax_langevin::payoff::{PayoffSpec, Quadratic};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn spec_strategy() -> impl Strategy<Value = PayoffSpec> {
    (1usize..=3)
        .prop_flat_map(|d| {
            (
                Just(d),
                prop::collection::vec(-1.0f64..1.0, d * d),
                prop::collection::vec(-1.0f64..1.0, d * d),
                prop::collection::vec(-2.0f64..2.0, d * d),
                prop::collection::vec(-1.0f64..1.0, 2 * d),
                0.3f64..2.0,
                0.0f64..0.5,
                0.5f64..3.0,
            )
        })
        .prop_map(|(d, ga, gb, c, uv, floor, amp_frac, freq)| {
            let ga = DMatrix::from_vec(d, d, ga);
            let gb = DMatrix::from_vec(d, d, gb);
            let a = &ga * ga.transpose() + DMatrix::identity(d, d) * floor;
            let b = &gb * gb.transpose() + DMatrix::identity(d, d) * floor;
            let q = Quadratic::new(
                a,
                b,
                DMatrix::from_vec(d, d, c),
                DVector::from_column_slice(&uv[..d]),
                DVector::from_column_slice(&uv[d..]),
            )
            .unwrap();
            if amp_frac < 0.1 {
                PayoffSpec::quadratic(q)
            } else {
                let lmin = q.a().clone().symmetric_eigenvalues().min().min(q.b().clone().symmetric_eigenvalues().min());
                PayoffSpec::perturbed(q, amp_frac * lmin / (freq * freq), freq).unwrap()
            }
        })
}

fn states(spec: &PayoffSpec, n: usize, raw: &[f64], shift: &[f64]) -> (ParticleState, ParticleState) {
    let d = spec.dim();
    let len = 2 * n * d;
    let a = ParticleState::from_joint(n, d, &raw[..len], 0).unwrap();
    let zb: Vec<f64> = raw[..len].iter().zip(shift).map(|(p, q)| p + q).collect();
    (a, ParticleState::from_joint(n, d, &zb, 0).unwrap())
}

fn joint_drift(spec: &PayoffSpec, s: &ParticleState) -> Vec<f64> {
    let (mut bx, by) = drift_particles(spec, s).unwrap();
    bx.extend(by);
    bx
}

fn gaussian(m: usize, raw: &[f64]) -> GaussianDist {
    let g = DMatrix::from_column_slice(m, m, &raw[m..m + m * m]);
    GaussianDist::new(
        DVector::from_column_slice(&raw[..m]),
        &g * g.transpose() + DMatrix::identity(m, m) * 0.1,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn drift_is_strongly_monotone_and_2l_lipschitz(
        spec in spec_strategy(),
        n in 1usize..5,
        raw in prop::collection::vec(-5.0f64..5.0, 24),
        shift in prop::collection::vec(-1.0f64..1.0, 24),
    ) {
        let c = spec.constants().unwrap();
        let (a, b) = states(&spec, n, &raw, &shift);
        let dz: Vec<f64> = a.joint().iter().zip(b.joint()).map(|(p, q)| p - q).collect();
        let nz: f64 = dz.iter().map(|v| v * v).sum();
        prop_assume!(nz > 1e-12);
        let db: Vec<f64> = joint_drift(&spec, &a).iter().zip(joint_drift(&spec, &b)).map(|(p, q)| p - q).collect();
        let inner: f64 = db.iter().zip(&dz).map(|(p, q)| p * q).sum();
        prop_assert!(inner <= -c.alpha * nz * (1.0 - 1e-9), "{inner} vs {}", -c.alpha * nz);
        let nb: f64 = db.iter().map(|v| v * v).sum();
        prop_assert!(nb.sqrt() <= 2.0 * c.smooth_l * nz.sqrt() * (1.0 + 1e-9));
    }

    #[test]
    fn drift_map_contracts_at_strict_step(
        spec in spec_strategy(),
        n in 1usize..5,
        raw in prop::collection::vec(-5.0f64..5.0, 24),
        shift in prop::collection::vec(-1.0f64..1.0, 24),
    ) {
        let c = spec.constants().unwrap();
        let eta = c.strict_eta_limit();
        let (a, b) = states(&spec, n, &raw, &shift);
        let d0 = a.distance_sq(&b).unwrap();
        prop_assume!(d0 > 1e-12);
        let ga = drift_map(&spec, &a, eta, DriftMode::Pairwise).unwrap();
        let gb = drift_map(&spec, &b, eta, DriftMode::Pairwise).unwrap();
        let ratio = (ga.distance_sq(&gb).unwrap() / d0).sqrt();
        prop_assert!(ratio <= c.contraction_factor(eta) * (1.0 + 1e-10));
    }

    #[test]
    fn drift_is_permutation_equivariant(
        spec in spec_strategy(),
        raw in prop::collection::vec(-5.0f64..5.0, 24),
        rot in 1usize..4,
    ) {
        let n = 4;
        let d = spec.dim();
        let s = ParticleState::from_joint(n, d, &raw[..2 * n * d], 0).unwrap();
        let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n).collect();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for &p in &perm {
            xs.extend_from_slice(s.x(p));
            ys.extend_from_slice(s.y(p));
        }
        let t = ParticleState::new(n, d, xs, ys, 0).unwrap();
        let (bx, by) = drift_particles(&spec, &s).unwrap();
        let (tx, ty) = drift_particles(&spec, &t).unwrap();
        for (i, &p) in perm.iter().enumerate() {
            for k in 0..d {
                prop_assert!((tx[i * d + k] - bx[p * d + k]).abs() <= 1e-12 * (1.0 + bx[p * d + k].abs()));
                prop_assert!((ty[i * d + k] - by[p * d + k]).abs() <= 1e-12 * (1.0 + by[p * d + k].abs()));
            }
        }
    }

    #[test]
    fn kl_nonnegative_and_w2_is_a_metric(
        m in 1usize..4,
        p in prop::collection::vec(-2.0f64..2.0, 20),
        q in prop::collection::vec(-2.0f64..2.0, 20),
        r in prop::collection::vec(-2.0f64..2.0, 20),
    ) {
        let (p, q, r) = (gaussian(m, &p), gaussian(m, &q), gaussian(m, &r));
        prop_assert!(gaussian_kl(&p, &q).unwrap() >= -1e-12);
        prop_assert!(gaussian_kl(&p, &p).unwrap().abs() <= 1e-10);
        let pq = gaussian_w2(&p, &q).unwrap();
        let qp = gaussian_w2(&q, &p).unwrap();
        prop_assert!(pq >= 0.0);
        prop_assert!((pq - qp).abs() <= 1e-9 * (1.0 + pq));
        let pr = gaussian_w2(&p, &r).unwrap().sqrt();
        let rq = gaussian_w2(&r, &q).unwrap().sqrt();
        prop_assert!(pq.sqrt() <= pr + rq + 1e-9);
    }

    #[test]
    fn config_round_trips(
        seed in 0..=i64::MAX as u64,
        tau in 0.01f64..10.0,
        a in 0.5f64..4.0,
        c in -3.0f64..3.0,
        n in 1usize..100,
        steps in 0u64..100_000,
        every in 1u64..500,
        strict in any::<bool>(),
        perturbed in any::<bool>(),
        shift in prop::option::of(0.0f64..5.0),
    ) {
        let alpha = a.min(1.0);
        let l = 2.0 * (a.max(1.0) + c.abs()) + 1.0;
        let eta = 0.5 * alpha / (64.0 * l * l);
        let mut text = format!(
            "seed = {seed}\ntau = {tau:?}\ncheckpoint_every = {every}\n[payoff]\nkind = \"{}\"\na = [[{a:?}, 0.0], [0.0, 1.0]]\nb = [[1.0, 0.0], [0.0, {a:?}]]\nc = [[{c:?}, 0.1], [0.0, 0.2]]\n",
            if perturbed { "perturbed_quadratic" } else { "quadratic_bilinear" }
        );
        if perturbed {
            text.push_str(&format!("amplitude = {:?}\nfrequency = 1.0\n", 0.25 * alpha));
        }
        text.push_str(&format!("[algorithm]\neta = {eta:?}\nn_particles = {n}\nsteps = {steps}\nstrict_eta = {strict}\n"));
        if let Some(dist) = shift {
            text.push_str(&format!("[coupled]\nkind = \"shift\"\ndistance = {dist:?}\n"));
        }
        let cfg = parse_config(&text).unwrap();
        let again = parse_config(&to_toml(&cfg).unwrap()).unwrap();
        prop_assert_eq!(cfg, again);
    }
}
