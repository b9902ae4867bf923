use mdcp::linalg;
use mdcp::polyalg::{self, ClassifyTolerance, Poly};
use mdcp::predictor;
use num_complex::Complex64;
use proptest::prelude::*;

fn coeff_vec(min_len: usize, max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0..10.0f64, min_len..=max_len)
}

fn scale(v: &[f64]) -> f64 {
    linalg::max_abs(v).max(1e-300)
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Well-separated pole multiset: real poles on a jittered grid, optional
/// conjugate pair, optional doubled real pole, optional pole at zero.
fn pole_set() -> impl Strategy<Value = Vec<Complex64>> {
    (
        prop::collection::vec((any::<bool>(), -0.05..0.05f64), 4),
        prop::option::of((0.3..0.9f64, 0.5..2.5f64)),
        prop::option::of(0usize..4),
        any::<bool>(),
    )
        .prop_filter_map(
            "need at least one pole",
            |(slots, pair, doubled, zero)| {
                let mut poles = Vec::new();
                let mut reals = Vec::new();
                for (i, (on, jitter)) in slots.into_iter().enumerate() {
                    if on {
                        let r = -0.75 + 0.5 * i as f64 + jitter;
                        reals.push(r);
                        poles.push(c(r, 0.0));
                    }
                }
                if let Some((m, a)) = pair {
                    let z = Complex64::from_polar(m, a);
                    poles.push(z);
                    poles.push(z.conj());
                }
                if let Some(i) = doubled {
                    if let Some(&r) = reals.get(i) {
                        poles.push(c(r, 0.0));
                    }
                }
                if zero {
                    poles.push(c(0.0, 0.0));
                }
                (!poles.is_empty()).then_some(poles)
            },
        )
}

fn monic_from_roots(roots: &[Complex64]) -> Vec<f64> {
    let mut acc = vec![c(1.0, 0.0)];
    for &r in roots {
        let mut next = vec![c(0.0, 0.0); acc.len() + 1];
        for (j, &a) in acc.iter().enumerate() {
            next[j + 1] += a;
            next[j] -= a * r;
        }
        acc = next;
    }
    acc.iter().map(|z| z.re).collect()
}

/// Coefficients `y_k` of `z·N(z)/p(z) = Σ y_k z^{-k}` by long division.
fn long_division(numerator: &[f64], p_monic: &[f64], terms: usize) -> Vec<f64> {
    let d = p_monic.len() - 1;
    // a_j: coefficient of z^j in z·N(z)
    let a = |j: isize| -> f64 {
        if j < 1 {
            0.0
        } else {
            numerator.get(j as usize - 1).copied().unwrap_or(0.0)
        }
    };
    let mut y: Vec<f64> = Vec::with_capacity(terms);
    for m in 0..terms {
        let mut v = a(d as isize - m as isize);
        for i in 1..=m.min(d) {
            v -= p_monic[d - i] * y[m - i];
        }
        y.push(v);
    }
    y
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn taylor_shift_round_trip(coeffs in coeff_vec(1, 9), center in -2.0..2.0f64) {
        let p = Poly::monomial(coeffs.clone());
        let back = p.taylor_shift(center).to_monomial();
        let mut padded = back.coeffs.clone();
        padded.resize(coeffs.len(), 0.0);
        let err = linalg::max_abs(
            &padded.iter().zip(&coeffs).map(|(a, b)| a - b).collect::<Vec<_>>(),
        );
        prop_assert!(err <= 1e-10 * scale(&coeffs), "err {err:e}");
    }

    #[test]
    fn shifted_polynomial_evaluates_identically(
        coeffs in coeff_vec(1, 9),
        center in -2.0..2.0f64,
        z in -3.0..3.0f64,
    ) {
        let p = Poly::monomial(coeffs);
        let q = polyalg::taylor_shift(&p, center);
        let mag: f64 = p.coeffs.iter().enumerate().map(|(j, a)| a.abs() * z.abs().powi(j as i32)).sum();
        prop_assert!((p.eval(z) - q.eval(z)).abs() <= 1e-10 * mag.max(1.0));
    }

    #[test]
    fn roots_re_expand_to_polynomial(
        body in coeff_vec(1, 8),
        lead in prop_oneof![0.5..5.0f64, -5.0..-0.5f64],
    ) {
        let mut coeffs = body;
        coeffs.push(lead);
        let p = Poly::monomial(coeffs.clone());
        let roots = polyalg::poly_roots(&p).unwrap();
        prop_assert_eq!(roots.len(), coeffs.len() - 1);
        let rebuilt: Vec<f64> = monic_from_roots(&roots).iter().map(|x| x * lead).collect();
        let err = linalg::max_abs(
            &rebuilt.iter().zip(&coeffs).map(|(a, b)| a - b).collect::<Vec<_>>(),
        );
        prop_assert!(err <= 1e-7 * scale(&coeffs), "err {err:e}");
    }

    #[test]
    fn falling_factorial_matches_monomial(b in coeff_vec(1, 7)) {
        let kappa = Poly::monomial(polyalg::falling_to_monomial(&b));
        for k in 0..=20u64 {
            let direct: f64 = b.iter().enumerate().map(|(r, x)| x * linalg::binomial(k, r as u64)).sum();
            let mag: f64 = b.iter().enumerate().map(|(r, x)| x.abs() * linalg::binomial(k, r as u64)).sum();
            prop_assert!((kappa.eval(k as f64) - direct).abs() <= 1e-9 * mag.max(1.0));
        }
    }

    #[test]
    fn partial_fractions_recombine(poles in pole_set(), raw in coeff_vec(1, 8), angle in 0.0..6.28f64) {
        let numerator = Poly::monomial(raw.into_iter().take(poles.len()).collect());
        let pf = polyalg::partial_fractions(&numerator, &poles, &ClassifyTolerance::default()).unwrap();
        for t in 0..6 {
            let z = Complex64::from_polar(1.5, angle + t as f64);
            let den = poles.iter().fold(c(1.0, 0.0), |acc, &r| acc * (z - r));
            let direct = numerator.eval_complex(z) / den;
            let got = pf.eval(z);
            prop_assert!((got - direct).norm() <= 1e-7 * direct.norm().max(1.0),
                "z={z} got={got} want={direct}");
        }
    }

    #[test]
    fn inverse_z_matches_long_division(poles in pole_set(), raw in coeff_vec(1, 8)) {
        let numerator: Vec<f64> = raw.into_iter().take(poles.len()).collect();
        let pf = polyalg::partial_fractions(
            &Poly::monomial(numerator.clone()), &poles, &ClassifyTolerance::default(),
        ).unwrap();
        let p = monic_from_roots(&poles);
        let series = long_division(&numerator, &p, 30);
        let mag = scale(&series).max(1.0);
        for (k, want) in series.iter().enumerate() {
            let got = pf.inverse_z(k as u64);
            prop_assert!((got - want).abs() <= 1e-7 * mag, "k={k} got={got} want={want}");
        }
    }

    #[test]
    fn decomposition_reconstructs_phi(
        phi in coeff_vec(1, 11),
        root_mods in prop::collection::vec((0.0..0.7f64, 0.0..3.14f64, any::<bool>()), 1..5),
        s in 1usize..=4,
    ) {
        let mut roots = Vec::new();
        for (m, a, complex) in root_mods {
            if complex {
                let z = Complex64::from_polar(m, a);
                roots.push(z);
                roots.push(z.conj());
            } else {
                roots.push(c(m * a.cos(), 0.0));
            }
        }
        let p = Poly::monomial(monic_from_roots(&roots));
        let phi = Poly::monomial(phi);
        let dec = predictor::fit_decomposition(&phi, &p, s).unwrap();
        prop_assert_eq!(dec.beta_low.len(), s);
        let back = dec.recombine(&p);
        let len = back.coeffs.len().max(phi.coeffs.len());
        let mut a = back.coeffs.clone();
        let mut b = phi.coeffs.clone();
        a.resize(len, 0.0);
        b.resize(len, 0.0);
        let err = linalg::max_abs(&a.iter().zip(&b).map(|(x, y)| x - y).collect::<Vec<_>>());
        prop_assert!(err <= 1e-8 * scale(&b), "err {err:e}");
    }
}

#[test]
fn shifted_power_is_binomial_expansion() {
    // (t − 1)^3 = t³ − 3t² + 3t − 1
    assert_eq!(polyalg::shifted_power_coeffs(3), vec![-1.0, 3.0, -3.0, 1.0]);
}
