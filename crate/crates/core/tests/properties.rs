//! Randomized invariants over the closed forms and the simulation engine.

use da_guidance::feasibility::sbgp_gamma_critical;
use da_guidance::guidance::{da_control, saturate, GuidanceLaw};
use da_guidance::mge::{run_engagement, EngagementSetup, MgeScenario};
use da_guidance::sim::{trapezoid, NoiseStream};
use nalgebra::{dmatrix, dvector, DVector};
use proptest::prelude::*;

proptest! {
    #[test]
    fn saturate_bounds_and_fixes_interior(vals in prop::collection::vec(-100.0f64..100.0, 1..6),
                                          sat in 0.1f64..50.0) {
        let u = DVector::from_vec(vals);
        let clamped = saturate(&u, sat);
        for (orig, c) in u.iter().zip(clamped.iter()) {
            prop_assert!(c.abs() <= sat);
            if orig.abs() <= sat {
                prop_assert_eq!(orig, c);
            }
        }
    }

    #[test]
    fn critical_level_formula_and_monotonicity(b in 1.0f64..5000.0,
                                               v in 1e-8f64..0.1,
                                               db in 0.0f64..1000.0) {
        let g2 = sbgp_gamma_critical(b, v, 1.0, true);
        prop_assert_eq!(g2, (b * v.sqrt()).max(1.0));
        prop_assert!(g2 >= 1.0);
        // non-decreasing in the terminal weight
        prop_assert!(sbgp_gamma_critical(b + db, v, 1.0, true) >= g2);
    }

    #[test]
    fn da_control_blows_up_toward_singularity(x in 0.5f64..5.0, y in 0.5f64..5.0,
                                              eps in 0.01f64..0.5) {
        // gamma^2 = (1 + eps) YX keeps Omega = eps/(1+eps) in (0,1): the
        // gain exceeds the separation gain and grows as eps shrinks.
        let gamma = ((1.0 + eps) * y * x).sqrt();
        let u = da_control(&dmatrix![1.0], &dmatrix![x], &dmatrix![y], gamma, &dvector![1.0])
            .unwrap();
        prop_assert!(u[0] < 0.0);
        prop_assert!(u[0].abs() >= x, "DA gain below separation gain");
        let expected = x * (1.0 + eps) / eps;
        prop_assert!((u[0].abs() - expected).abs() <= 1e-9 * expected);
    }

    #[test]
    fn noise_streams_are_deterministic(seed in any::<u64>(), run in 0u64..1000) {
        let mut a = NoiseStream::for_run(seed, run, 0.3);
        let mut b = NoiseStream::for_run(seed, run, 0.3);
        for _ in 0..32 {
            prop_assert_eq!(a.draw(), b.draw());
        }
    }

    #[test]
    fn logged_effort_matches_logged_control(seed in 1u64..200) {
        let sc = MgeScenario {
            gamma: 7.5,
            tf: 1.0,
            ..Default::default()
        };
        let setup = EngagementSetup::new(sc).unwrap();
        let rec = run_engagement(&setup, GuidanceLaw::Separation, seed, 0).unwrap();
        let usq: Vec<f64> = rec.u_series.iter().map(|u| u * u).collect();
        let recomputed = trapezoid(&usq, sc.dt);
        prop_assert!((rec.effort - recomputed).abs() <= 1e-12 * recomputed.max(1.0));
    }
}
