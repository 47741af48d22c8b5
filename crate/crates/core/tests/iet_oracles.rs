use num_bigint::BigInt;
use num_rational::BigRational;
use proptest::prelude::*;
use twistlab::iet::{Iet, Permutation};
use twistlab::Error;

/// Partial quotients of `a / b` by exact Euclid.
fn partial_quotients(a: f64, b: f64, n: usize) -> Vec<u64> {
    let mut x = BigRational::from_float(a).unwrap();
    let mut y = BigRational::from_float(b).unwrap();
    let mut out = Vec::new();
    while out.len() < n {
        let (big, small) = if x > y { (&mut x, &y) } else { (&mut y, &x) };
        let q = (&*big / small).floor();
        *big -= &q * small;
        out.push(q.to_integer().try_into().unwrap());
        if big == &BigRational::from_integer(BigInt::from(0)) {
            break;
        }
    }
    out
}

fn run_counts(iet: &Iet, n: usize) -> Vec<u64> {
    let mut iet = iet.clone();
    let mut out = Vec::new();
    for _ in 0..n {
        let z = iet.zorich_step().unwrap();
        out.push(z.step_count);
        iet = z.iet;
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn rotation_runs_are_continued_fraction_digits(alpha in 0.01f64..0.99) {
        let p = Permutation::for_stratum("torus").unwrap();
        let iet = Iet::new(p, vec![alpha, 1.0 - alpha]).unwrap();
        let digits = partial_quotients(alpha, 1.0 - alpha, 8);
        prop_assume!(digits.len() == 8 && digits.iter().product::<u64>() < 100_000);
        prop_assert_eq!(run_counts(&iet, 8), digits);
    }

    #[test]
    fn induced_map_is_the_first_return(raw in prop::collection::vec(0.05f64..1.0, 4), xs in prop::collection::vec(0.0f64..1.0, 20)) {
        let p = Permutation::for_stratum("H(2)").unwrap();
        let total: f64 = raw.iter().sum();
        let iet = Iet::new(p, raw.iter().map(|x| x / total).collect()).unwrap();
        let z = match iet.zorich_step_induced() {
            Ok(z) => z,
            Err(Error::ConnectionDetected { .. }) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        let sub = z.iet.total_length();
        for u in xs {
            let x = u * sub;
            let Ok(induced) = z.iet.apply(x) else { continue };
            let mut y = iet.apply(x).unwrap();
            let mut n = 1;
            while y >= sub {
                y = iet.apply(y).unwrap();
                n += 1;
                prop_assert!(n < 10_000);
            }
            prop_assert!((y - induced).abs() < 1e-12, "{} vs {}", y, induced);
        }
    }

    #[test]
    fn zorich_matrices_are_unimodular_and_relate_lengths(raw in prop::collection::vec(0.05f64..1.0, 5)) {
        let p = Permutation::for_stratum("H(1,1)").unwrap();
        let total: f64 = raw.iter().sum();
        let iet = Iet::new(p, raw.iter().map(|x| x / total).collect()).unwrap();
        let z = match iet.zorich_step_induced() {
            Ok(z) => z,
            Err(Error::ConnectionDetected { .. }) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        prop_assert_eq!(z.matrix.determinant(), 1);
        prop_assert!(z.matrix.is_nonnegative());
        let back = z.matrix.apply(z.iet.lengths());
        for (a, b) in back.iter().zip(iet.lengths()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        prop_assert!(z.iet.permutation().is_irreducible());
    }
}

#[test]
fn golden_rotation_has_unit_digits() {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let iet = Iet::new(Permutation::for_stratum("torus").unwrap(), vec![g, 1.0 - g]).unwrap();
    assert_eq!(run_counts(&iet, 12)[1..], [1; 11]);
}
