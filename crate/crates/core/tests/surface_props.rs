use proptest::prelude::*;
use twistlab::iet::Permutation;
use twistlab::rng::stream_rng;
use twistlab::surface::{heights_from_suspension, ZipperedRectangles};
use twistlab::Error;

fn stratum(i: u64) -> &'static str {
    ["H(2)", "H(1,1)", "torus"][(i % 3) as usize]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn flow_is_a_group_action(seed in 0u64..100_000, a in 0.0f64..30.0, b in 0.0f64..30.0) {
        let s = ZipperedRectangles::random(&Permutation::for_stratum(stratum(seed)).unwrap(), &mut stream_rng(seed, 0)).unwrap();
        let p = s.sample_point(&mut stream_rng(seed, 1));
        let (Ok(q), Ok(direct)) = (s.flow(&p, a), s.flow(&p, a + b)) else { return Ok(()) };
        let Ok(two) = s.flow(&q, b) else { return Ok(()) };
        prop_assert_eq!(two.rect, direct.rect);
        prop_assert!((two.x - direct.x).abs() < 1e-9 && (two.y - direct.y).abs() < 1e-9);
    }

    #[test]
    fn random_surfaces_are_valid(seed in 0u64..100_000) {
        let p = Permutation::for_stratum(stratum(seed)).unwrap();
        let s = ZipperedRectangles::random(&p, &mut stream_rng(seed, 0)).unwrap();
        prop_assert!((s.area() - 1.0).abs() < 1e-12);
        prop_assert!(s.heights().iter().all(|&h| h > 0.0));
        prop_assert!(s.tau().in_cone(&p));
        let area: f64 = (0..s.d()).map(|j| s.rect_area(j)).sum();
        prop_assert!((area - s.area()).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip_is_exact(seed in 0u64..100_000) {
        let s = ZipperedRectangles::random(&Permutation::for_stratum(stratum(seed)).unwrap(), &mut stream_rng(seed, 0)).unwrap();
        let back = ZipperedRectangles::from_json(&s.to_json()).unwrap();
        prop_assert_eq!(back.to_json(), s.to_json());
        prop_assert_eq!(back.heights(), s.heights());
        prop_assert_eq!(back.lengths(), s.lengths());
    }

    #[test]
    fn first_return_lands_on_the_base(seed in 0u64..100_000) {
        let s = ZipperedRectangles::random(&Permutation::for_stratum(stratum(seed)).unwrap(), &mut stream_rng(seed, 0)).unwrap();
        let p = s.sample_point(&mut stream_rng(seed, 2));
        if let Ok((q, t)) = s.first_return(&p) {
            prop_assert!(q.y == 0.0 && t > 0.0 && t <= s.heights()[p.rect] - p.y + 1e-12);
        }
    }
}

#[test]
fn suspension_outside_the_cone_is_rejected() {
    let p = Permutation::for_stratum("H(2)").unwrap();
    let tau = twistlab::surface::SuspensionDatum(vec![-1.0, 1.0, 1.0, 1.0]);
    assert!(matches!(heights_from_suspension(&p, &tau), Err(Error::InvalidSuspension(_))));
}
