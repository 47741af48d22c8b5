use num_complex::Complex64;
use twistlab::iet::Permutation;
use twistlab::observables::CellwiseObservable;
use twistlab::rng::stream_rng;
use twistlab::surface::ZipperedRectangles;

const N: usize = 200_000;

fn surfaces() -> Vec<ZipperedRectangles> {
    ["H(2)", "H(1,1)"]
        .iter()
        .enumerate()
        .map(|(i, name)| ZipperedRectangles::random(&Permutation::for_stratum(name).unwrap(), &mut stream_rng(70 + i as u64, 0)).unwrap())
        .collect()
}

/// Mean and standard error of complex samples, componentwise.
fn mc(values: &[Complex64]) -> (Complex64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<Complex64>() / n;
    let var = values.iter().map(|v| (v - mean).norm_sqr()).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[test]
fn mean_matches_uniform_sampling() {
    for s in surfaces() {
        let f = CellwiseObservable::random_trig(&s, 2, 3, &mut stream_rng(1, 1))
            .add(&CellwiseObservable::constant(s.d(), Complex64::new(0.3, -0.1)));
        let mut rng = stream_rng(1, 2);
        let vals: Vec<Complex64> = (0..N).map(|_| f.evaluate(&s, &s.sample_point(&mut rng))).collect();
        let (m, se) = mc(&vals);
        assert!((m - f.mean(&s)).norm() < 5.0 * se, "{m} vs {}", f.mean(&s));
    }
}

#[test]
fn inner_product_matches_uniform_sampling() {
    for s in surfaces() {
        let mut rng = stream_rng(2, 1);
        let f = CellwiseObservable::random_trig(&s, 2, 3, &mut rng);
        let g = CellwiseObservable::random_vertical(&s, 2, 2, &mut rng);
        let vals: Vec<Complex64> = (0..N)
            .map(|_| {
                let p = s.sample_point(&mut rng);
                f.evaluate(&s, &p) * g.evaluate(&s, &p).conj() * s.area()
            })
            .collect();
        let (m, se) = mc(&vals);
        let exact = f.inner_product(&g, &s);
        assert!((m - exact).norm() < 5.0 * se, "{m} vs {exact}");
        assert!((f.l2_norm(&s).powi(2) - f.inner_product(&f, &s).re).abs() < 1e-12);
    }
}

#[test]
fn centered_observables_have_zero_mean() {
    for s in surfaces() {
        let f = CellwiseObservable::random_cellwise_constant(&s, &mut stream_rng(3, 1));
        assert!(f.is_zero_mean(&s));
        let mut rng = stream_rng(3, 2);
        let vals: Vec<Complex64> = (0..N).map(|_| f.evaluate(&s, &s.sample_point(&mut rng))).collect();
        let (m, se) = mc(&vals);
        assert!(m.norm() < 5.0 * se);
    }
}
