use critbranch::evolution::{oracle, solve_u_from, Record};
use critbranch::models::*;
use critbranch::regvar::{bruijn_conjugate, log_grid, SlowlyVaryingAtInfinity, TailIndex};
use critbranch::spectral::{eigen_triplet, residuals};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn two_type(alpha: f64, c: [f64; 2], beta: [f64; 2], p: f64) -> Model {
    let a = TailIndex::new(alpha).unwrap();
    let laws = c
        .iter()
        .map(|&c| CountLaw::Slack(SlackOffspring::new(a, c).unwrap()))
        .collect();
    Model::gw(MultiTypeGW::new(beta.to_vec(), laws, vec![vec![p, 1.0 - p], vec![1.0 - p, p]]).unwrap())
}

fn alpha() -> impl Strategy<Value = f64> {
    prop_oneof![0.05f64..1.0, Just(1.0)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn a_is_monotone(a in alpha(), c0 in 0.05f64..1.0, c1 in 0.05f64..1.0, p in 0.0f64..1.0,
                     lo in prop::array::uniform2(0.0f64..1.0), t in prop::array::uniform2(0.0f64..1.0)) {
        let model = two_type(a, [c0 / (1.0 + a), c1 / (1.0 + a)], [1.0, 2.0], p);
        let hi = [lo[0] + (1.0 - lo[0]) * t[0], lo[1] + (1.0 - lo[1]) * t[1]];
        let (x, y) = (eval_a(&model, &lo).unwrap(), eval_a(&model, &hi).unwrap());
        for i in 0..2 {
            prop_assert!(x[i] >= 0.0 && x[i] <= y[i]);
        }
    }

    #[test]
    fn j_is_monotone(a in alpha(), kappa in 0.1f64..5.0, lo in 0.0f64..50.0, step in 0.0f64..50.0) {
        let model = Model::StableCsbp(StableCSBP::new(kappa, TailIndex::new(a).unwrap()).unwrap());
        let (x, y) = (eval_j(&model, &[lo]).unwrap()[0], eval_j(&model, &[lo + step]).unwrap()[0]);
        prop_assert!(x >= 0.0 && x <= y);
    }

    #[test]
    fn slack_pmf_is_a_distribution(a in alpha(), frac in 0.01f64..1.0, w in 0.0f64..1.0) {
        let c = frac / (1.0 + a);
        let m = c * (1.0 + a) + w * (1.0 + c - c * (1.0 + a));
        let law = SlackOffspring::with_mean(TailIndex::new(a).unwrap(), c, m).unwrap();
        prop_assert!(law.table().iter().all(|p| *p >= 0.0));
        let mass: f64 = law.table().iter().sum::<f64>() + law.tail_mass();
        prop_assert!((mass - 1.0).abs() < 1e-11, "mass {mass}");
        let mean: f64 = law.table().iter().enumerate().map(|(k, p)| k as f64 * p).sum::<f64>() + law.tail_mean();
        prop_assert!((mean - m).abs() < 1e-9 * m.max(1.0));
        for s in [0.0f64, 0.3, 0.9] {
            let direct: f64 = law.table().iter().enumerate().map(|(k, p)| p * s.powi(k as i32)).sum();
            // The untabulated tail contributes at most `tail_mass · s^k_max`.
            prop_assert!((law.pgf(s) - direct).abs() <= law.tail_mass() + 1e-12);
        }
    }

    #[test]
    fn rejects_slack_outside_the_admissible_region(a in alpha(), c in 0.01f64..2.0, m in 0.0f64..3.0) {
        let ok = m >= c * (1.0 + a) && m <= 1.0 + c;
        let built = SlackOffspring::with_mean(TailIndex::new(a).unwrap(), c, m);
        if !ok && (m - c * (1.0 + a)).abs() > 1e-12 && (m - 1.0 - c).abs() > 1e-12 {
            prop_assert!(built.is_err());
        }
        if ok {
            prop_assert!(built.is_ok());
        }
    }

    #[test]
    fn single_type_solver_matches_closed_form(a in alpha(), frac in 0.05f64..1.0, beta in 0.2f64..3.0,
                                              u0 in 0.01f64..1.0, t in 0.1f64..30.0) {
        let c = frac / (1.0 + a);
        let law = SlackOffspring::new(TailIndex::new(a).unwrap(), c).unwrap();
        let model = Model::gw(MultiTypeGW::slack_single(beta, law).unwrap());
        let tr = solve_u_from(&model, &[u0], t, 0.01, Record::At(&[t])).unwrap();
        let exact = oracle::slack_semigroup(a, beta, c, u0, t);
        prop_assert!((tr.last()[0] - exact).abs() < 1e-8 * exact.max(1e-3), "{} vs {exact}", tr.last()[0]);
    }

    #[test]
    fn stable_flow_composes(a in alpha(), kappa in 0.1f64..5.0, theta in 1e-3f64..1e3, s in 0.0f64..10.0, t in 0.0f64..10.0) {
        let (k, th) = (kappa, theta);
        let direct = oracle::stable_v(k, a, th, s + t);
        let composed = oracle::stable_v(k, a, oracle::stable_v(k, a, th, s), t);
        prop_assert!((direct - composed).abs() < 1e-10 * direct);
    }

    #[test]
    fn yaglom_limit_is_a_ratio(a in alpha(), lo in 1e-3f64..1e3, step in 1e-6f64..10.0) {
        let (x, y) = (oracle::yaglom_limit(a, lo), oracle::yaglom_limit(a, lo + step));
        prop_assert!(x > 0.0 && x < y && y < 1.0);
    }

    #[test]
    fn eigen_triplet_is_normalised(off in prop::collection::vec(0.05f64..3.0, 6), diag in prop::collection::vec(-3.0f64..3.0, 3)) {
        let mut l = DMatrix::zeros(3, 3);
        let mut k = 0;
        for i in 0..3 {
            for j in 0..3 {
                if i == j {
                    l[(i, j)] = diag[i];
                } else {
                    l[(i, j)] = off[k];
                    k += 1;
                }
            }
        }
        let tr = eigen_triplet(&l).unwrap();
        let (r, lr) = residuals(&l, &tr);
        let scale = l.amax();
        prop_assert!(r < 1e-9 * scale && lr < 1e-9 * scale);
        prop_assert!((tr.phi.iter().cloned().fold(0.0, f64::max) - 1.0).abs() < 1e-12);
        let pairing: f64 = tr.phi.iter().zip(&tr.phi_tilde).map(|(a, b)| a * b).sum();
        prop_assert!((pairing - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bruijn_conjugate_closes(c in 0.2f64..5.0, p in -2.0f64..2.0) {
        let l = SlowlyVaryingAtInfinity::LogPower { c, p };
        let pair = bruijn_conjugate(&l, &log_grid(1e3, 1e15, 2), 1e-10, 1000).unwrap();
        prop_assert!(pair.max_residual < 1e-8);
        prop_assert!(pair.residual_at(1e3) < 1e-8);
    }
}
