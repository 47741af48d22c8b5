use twistlab::cocycles::{gap_sweep, kz_exponents};
use twistlab::iet::Permutation;
use twistlab::rng::stream_rng;
use twistlab::surface::ZipperedRectangles;

#[test]
fn kz_spectrum_in_genus_two() {
    for (name, second) in [("H(2)", 1.0 / 3.0), ("H(1,1)", 0.5)] {
        let p = Permutation::for_stratum(name).unwrap();
        let e = kz_exponents(&p, 4, 25_000, 2, &mut stream_rng(11, 0)).unwrap();
        assert!((e.exponents[0] - 1.0).abs() < 0.01, "{name}: {e:?}");
        assert!((e.exponents[1] - second).abs() < 0.03, "{name}: {e:?}");
        assert!(e.total_steps >= 100_000);
    }
}

#[test]
fn torus_has_one_pair_of_exponents() {
    let p = Permutation::for_stratum("torus").unwrap();
    let e = kz_exponents(&p, 3, 5_000, 2, &mut stream_rng(12, 0)).unwrap();
    assert!((e.exponents[0] - 1.0).abs() < 0.01 && (e.exponents[1] + 1.0).abs() < 0.01, "{e:?}");
    assert!(kz_exponents(&p, 1, 10, 3, &mut stream_rng(12, 1)).is_err());
}

#[test]
fn twisting_opens_a_gap() {
    let s = ZipperedRectangles::random(&Permutation::for_stratum("H(2)").unwrap(), &mut stream_rng(13, 0)).unwrap();
    let g = gap_sweep(&s, &[0.0, 0.5, 2.0], 3000).unwrap();
    assert!(g[0].alpha_hat.abs() < 0.02, "{:?}", g[0]);
    assert!(g[1].alpha_hat > 0.1 && g[2].alpha_hat > 0.1, "{g:?}");
    assert!(g.iter().all(|e| e.n_steps == 3000 && e.t_n > 0.0));
}
