use transport_core::dists::{resample_indices, Mvn, ParameterDistribution, SeededRng, Trapezoid};
use transport_core::linalg::Matrix;

const N: usize = 1_000_000;

#[test]
fn trapezoid_ks_statistic() {
    for (params, seed) in [((-2.0, -1.0, 1.0, 2.0), 1), ((18.0, 18.0, 25.0, 30.0), 2), ((18.0, 25.0, 30.0, 30.0), 3)] {
        let t = Trapezoid::new(params.0, params.1, params.2, params.3).unwrap();
        let mut rng = SeededRng::new(seed, 0);
        let mut xs: Vec<f64> = (0..N).map(|_| t.sample(&mut rng)).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = N as f64;
        let ks = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = t.cdf(x);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.002, "{params:?}: KS {ks}");
        let mean = xs.iter().sum::<f64>() / n;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let tol = 5.0 * sd / n.sqrt();
        assert!((mean - t.mean()).abs() < tol, "{params:?}: mean {mean} vs {} (tol {tol})", t.mean());
    }
}

#[test]
fn mvn_empirical_covariance() {
    let cov = Matrix::from_rows(&[vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
    let mvn = Mvn::new(vec![0.0, 0.0], &cov).unwrap();
    let mut rng = SeededRng::new(4, 0);
    let mut buf = Vec::with_capacity(2);
    let (mut s, mut ss) = ([0.0; 2], [[0.0; 2]; 2]);
    for _ in 0..N {
        buf.clear();
        mvn.draw_into(&mut rng, &mut buf);
        for a in 0..2 {
            s[a] += buf[a];
            for b in 0..2 {
                ss[a][b] += buf[a] * buf[b];
            }
        }
    }
    let n = N as f64;
    for a in 0..2 {
        for b in 0..2 {
            let c = ss[a][b] / n - (s[a] / n) * (s[b] / n);
            assert!((c - cov[(a, b)]).abs() < 0.01, "({a},{b}) {c}");
        }
    }
}

#[test]
fn mvn_rejects_non_psd() {
    let cov = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
    assert!(Mvn::new(vec![0.0, 0.0], &cov).is_err());
}

#[test]
fn point_mass_and_normal() {
    let mut rng = SeededRng::new(5, 0);
    let pm = ParameterDistribution::PointMass { value: 0.0 };
    assert!((0..100).all(|_| pm.sample(&mut rng).unwrap() == vec![0.0]));
    let normal = ParameterDistribution::Normal { mu: -0.016, sigma: 0.1761 };
    let xs: Vec<f64> = (0..200_000).map(|_| normal.sample(&mut rng).unwrap()[0]).collect();
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    let sd = (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt();
    assert!((m + 0.016).abs() < 0.002 && (sd - 0.1761).abs() < 0.002);
}

#[test]
fn streams_are_reproducible_and_distinct() {
    let draw = |seed, stream| {
        let mut r = SeededRng::new(seed, stream);
        (0..8).map(|_| r.uniform()).collect::<Vec<_>>()
    };
    assert_eq!(draw(1, 2), draw(1, 2));
    assert_ne!(draw(1, 2), draw(1, 3));
    assert_ne!(draw(1, 2), draw(2, 2));
    let root = SeededRng::new(1, 0);
    let a: Vec<f64> = (0..4).map(|_| root.substream(0).uniform()).collect();
    assert!(a.windows(2).all(|w| w[0] == w[1]));
    assert_ne!(root.substream(0).uniform(), root.substream(1).uniform());
}

#[test]
fn resampled_indices_cover_range() {
    let mut rng = SeededRng::new(6, 0);
    let idx = resample_indices(50, &mut rng);
    assert_eq!(idx.len(), 50);
    assert!(idx.iter().all(|&i| i < 50));
    let counts = (0..100_000).fold([0usize; 5], |mut c, _| {
        c[resample_indices(5, &mut rng)[0]] += 1;
        c
    });
    assert!(counts.iter().all(|&c| (c as f64 / 1e5 - 0.2).abs() < 0.01));
}
