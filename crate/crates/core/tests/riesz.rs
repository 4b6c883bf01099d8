use cocyclo::riesz::{distribution_function, trapezoid, CocycleDensity, FactorFamily};
use cocyclo::{builtin, riesz_product_comb};

fn bump(x: f64, centre: f64, radius: f64) -> f64 {
    let t = (x - centre) / radius;
    if t.abs() < 1.0 {
        (-1.0 / (1.0 - t * t)).exp()
    } else {
        0.0
    }
}

fn pair_integral(n: usize, centre: f64, radius: f64) -> f64 {
    let f = FactorFamily::Fejer { m: 2 };
    trapezoid(
        |k| Ok(bump(k, centre, radius) * f.density(n, &[k])?),
        centre - radius,
        centre + radius,
        1 << 15,
    )
    .unwrap()
    .value
}

#[test]
fn mass_leaves_the_gaps() {
    let values: Vec<f64> = (1..=12).map(|n| pair_integral(n, 0.5, 0.3)).collect();
    for w in values.windows(2) {
        assert!(w[1] < w[0], "{values:?}");
    }
    assert!(values[11] < 1e-3);
}

#[test]
fn mass_concentrates_on_integers() {
    let got = pair_integral(12, 1.0, 0.2);
    let expect = bump(1.0, 1.0, 0.2);
    assert!((got - expect).abs() < 0.01 * expect, "{got} vs {expect}");
}

#[test]
fn empty_product_is_dirac_and_density_one() {
    let comb = riesz_product_comb(3, 0).unwrap();
    assert_eq!(comb.len(), 1);
    let f = FactorFamily::Fejer { m: 3 };
    assert_eq!(f.density(0, &[0.3]).unwrap(), 1.0);
    assert!(riesz_product_comb(1, 2).is_err());
}

#[test]
fn staggered_density_at_integers() {
    let f = FactorFamily::Staggered { a: 2.0 };
    for n in 1..6 {
        let v = f.density(n, &[3.0, -1.0]).unwrap();
        assert!((v - 4f64.powi(n as i32)).abs() < 1e-9 * v);
    }
    assert!(f.density(2, &[0.5]).is_err());
}

fn frank_robinson_family() -> FactorFamily {
    let e = builtin("frank-robinson").unwrap();
    let pf = e.rule.pf_data().unwrap();
    FactorFamily::Cocycle(CocycleDensity::new(e.fourier_matrix(), &pf.frequencies).unwrap())
}

#[test]
fn cocycle_density_is_nonnegative_and_factorises() {
    let f = frank_robinson_family();
    for k in [[0.1, 0.7], [1.3, -0.4], [2.5, 2.5]] {
        let d3 = f.density(3, &k).unwrap();
        assert!(d3 >= -1e-10);
        let prod: f64 = (0..3).map(|m| f.factor(m, &k).unwrap()).product();
        assert!((prod - d3).abs() < 1e-9 * (1.0 + d3));
    }
    // At the origin B(0) is the substitution matrix, whose PF eigenvalue is |det Q|.
    let lambda = (1.0 + 13f64.sqrt()) / 2.0;
    let at0 = f.density(2, &[0.0, 0.0]).unwrap();
    assert!((at0 - lambda.powi(4)).abs() < 1e-8 * at0);
}

#[test]
fn frank_robinson_distribution_slope() {
    let f = frank_robinson_family();
    let mut slopes = Vec::new();
    for k in [5.0, 10.0, 20.0] {
        let cells = (40.0 * k) as usize;
        let (depth, ok) = f.resolved_depth(k / cells as f64);
        assert!(ok && depth >= 2);
        let d = distribution_function(&f, 2, k, k, cells).unwrap();
        assert!(d.resolved);
        assert!(d.at(0, cells) == 0.0 && d.at(cells, 0) == 0.0);
        slopes.push(d.at(cells, cells) / (k * k));
    }
    // Golden values of F(K,K)/K² at depth 2 for K = 5, 10, 20.
    let golden = [1.9781099869, 1.9904116241, 1.9903153951];
    for (s, g) in slopes.iter().zip(golden) {
        assert!((s - g).abs() < 1e-8, "{s} vs {g}");
    }
    assert!((slopes[2] - slopes[1]).abs() < (slopes[1] - slopes[0]).abs() + 1e-3);
}
