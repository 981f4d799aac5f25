use std::f64::consts::PI;

use conic_ke::geometry::*;
use conic_ke::grid::Grid;
use proptest::prelude::*;

fn fs() -> RadialKahlerPotential {
    fubini_study_potential(Grid::default())
}

#[test]
fn fubini_study_area_and_curvature() {
    let p = fs();
    assert!((area(&p) - 4.0 * PI).abs() < 1e-10);
    assert!((gauss_curvature(&p, 0.0).unwrap() - 1.0).abs() < 1e-6);
    let k = curvature_profile(&p);
    for i in 2..p.len() - 2 {
        let tol = if p.grid.t(i).abs() <= 8.0 { 1e-8 } else { 1e-4 };
        assert!((k[i] - 1.0).abs() < tol, "node {i}: {}", k[i]);
    }
}

#[test]
fn football_curvature_matches_angle() {
    for beta in [0.3, 0.5, 0.75] {
        let p = football_potential(Grid::default(), beta).unwrap();
        let k = curvature_profile(&p);
        for i in 2..k.len() - 2 {
            if p.grid.t(i).abs() <= 8.0 {
                assert!((k[i] - beta).abs() < 1e-8, "beta {beta}: {}", k[i]);
            }
        }
        assert!((gauss_curvature(&p, 3.0).unwrap() - beta).abs() < 1e-6);
        assert!((gauss_curvature(&p, 3.001).unwrap() - beta).abs() < 1e-6);
    }
}

#[test]
fn football_area() {
    let p = football_potential(Grid::default(), 0.5).unwrap();
    assert!((area(&p) - 4.0 * PI).abs() < 1e-6);
}

#[test]
fn football_profile_is_exact() {
    let g = Grid::default();
    let beta = 0.6;
    let p = football_potential(g, beta).unwrap();
    for (i, t) in g.nodes().iter().enumerate() {
        let e = (beta * t).exp();
        let closed = 2.0 * beta * e / (1.0 + e).powi(2);
        if closed.is_finite() {
            assert!((p.phi_doubleprime[i] - closed).abs() <= 1e-15 * closed.max(1e-300) * 4.0);
        }
    }
    let phi = p.potential_values();
    for i in [0, 100, g.center(), 1800, g.len() - 1] {
        let exact = football_potential_value(beta, g.t(i));
        assert!((phi[i] - exact).abs() < 1e-9, "{i}: {} vs {exact}", phi[i]);
    }
}

#[test]
fn pole_angles() {
    let g = Grid::default();
    let p = football_potential(g, 0.6).unwrap();
    assert!((cone_angle_at_pole(&p, Pole::Zero).unwrap() - 0.6).abs() < 5e-3);
    assert!((cone_angle_at_pole(&fs(), Pole::Infinity).unwrap() - 1.0).abs() < 5e-3);
    let p = football_potential(g, 0.75).unwrap();
    assert!((cone_angle_at_pole(&p, Pole::Zero).unwrap() - 0.75).abs() < 1e-3);
    assert!((refined_cone_angle(&p, Pole::Infinity).unwrap() - 0.75).abs() < 1e-6);
}

#[test]
fn gaussian_profile_is_not_conic() {
    let g = Grid::default();
    let t = g.nodes();
    let pp: Vec<f64> = t.iter().map(|t| 1.0 + libm_erf(*t)).collect();
    let ppp: Vec<f64> = t.iter().map(|t| 2.0 / PI.sqrt() * (-t * t).exp().max(1e-300)).collect();
    let p = RadialKahlerPotential::from_profiles(g, pp, ppp, 0.0, (1.0, 1.0)).unwrap();
    assert!(matches!(
        cone_angle_at_pole(&p, Pole::Zero),
        Err(conic_ke::Error::NonConicAsymptotics { .. })
    ));
}

fn libm_erf(x: f64) -> f64 {
    statrs::function::erf::erf(x)
}

#[test]
fn gauss_bonnet_on_footballs() {
    for beta in [0.4, 0.6, 0.9, 1.0] {
        let p = football_potential(Grid::default(), beta).unwrap();
        let d = gauss_bonnet_defect(&p).unwrap();
        assert!(d < 1e-4, "beta {beta}: {d}");
    }
}

#[test]
fn ricci_potential_of_fubini_study_vanishes() {
    let h = ricci_potential_h0(&fs()).unwrap();
    for v in &h.values {
        assert!(v.abs() < 1e-10, "{v}");
    }
}

fn perturbed_fs(eps: f64, shift: f64) -> RadialKahlerPotential {
    let g = Grid::default();
    let base = fs();
    let t = g.nodes();
    let pp: Vec<f64> =
        base.phi_prime.iter().zip(&t).map(|(p, t)| p + eps / (t - shift).cosh()).collect();
    let ppp: Vec<f64> = base
        .phi_doubleprime
        .iter()
        .zip(&t)
        .map(|(p, t)| p - eps * (t - shift).tanh() / (t - shift).cosh())
        .collect();
    RadialKahlerPotential::from_profiles(g, pp, ppp, base.base_offset, (1.0, 1.0)).unwrap()
}

#[test]
fn ricci_potential_normalization_and_round_trip() {
    let p = perturbed_fs(0.01, 0.0);
    let h = ricci_potential_h0(&p).unwrap();
    assert!(h.values.iter().any(|v| v.abs() > 1e-4));
    let e: Vec<f64> = h.values.iter().map(|v| v.exp() - 1.0).collect();
    assert!(p.integrate_against_omega(&e).abs() < 1e-8);
    // h'' reproduces (K - 1) Phi'' in the interior.
    let hh = conic_ke::grid::second_derivative_2(&h.values, p.grid.spacing());
    let k = curvature_profile(&p);
    let c = p.grid.center();
    for i in (c - 600..c + 600).step_by(37) {
        let lhs = hh[i];
        let rhs = (k[i] - 1.0) * p.phi_doubleprime[i];
        assert!((lhs - rhs).abs() < 1e-4, "{i}: {lhs} vs {rhs}");
    }
}

#[test]
fn offset_does_not_change_geometry() {
    let p = football_potential(Grid::default(), 0.7).unwrap();
    let q = p.with_offset(3.5);
    assert_eq!(area(&p), area(&q));
    let bits = |v: Vec<f64>| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(curvature_profile(&p)), bits(curvature_profile(&q)));
    assert_eq!(cone_angle_at_pole(&p, Pole::Zero).unwrap(), cone_angle_at_pole(&q, Pole::Zero).unwrap());
}

#[test]
fn curvature_refinement_is_second_order_or_better() {
    let err = |n: usize| {
        let g = Grid::new(6.0, n).unwrap();
        let p = {
            let t = g.nodes();
            let pp: Vec<f64> = t.iter().map(|t| 1.0 + (t / 2.0).tanh() + 0.05 / (t - 0.5).cosh()).collect();
            let ppp: Vec<f64> = t
                .iter()
                .map(|t| 0.25 / (t / 2.0).cosh().powi(2) - 0.05 * (t - 0.5).tanh() / (t - 0.5).cosh())
                .collect();
            RadialKahlerPotential::from_profiles(g, pp, ppp, 0.0, (1.0, 1.0)).unwrap()
        };
        let k = gauss_curvature(&p, 1.0).unwrap();
        let exact = {
            // -(log f)'' / f with f = Phi'' in closed form, via a fine grid.
            let gf = Grid::new(6.0, 16001).unwrap();
            let t = gf.nodes();
            let f: Vec<f64> = t
                .iter()
                .map(|t| 0.25 / (t / 2.0).cosh().powi(2) - 0.05 * (t - 0.5).tanh() / (t - 0.5).cosh())
                .collect();
            let pf = RadialKahlerPotential::from_profiles(gf, f.clone(), f, 0.0, (1.0, 1.0)).unwrap();
            gauss_curvature(&pf, 1.0).unwrap()
        };
        (k - exact).abs()
    };
    let (e1, e2) = (err(241), err(481));
    assert!(e1 / e2 >= 3.5, "{e1} {e2}");
}

proptest! {
    #[test]
    fn constructed_potentials_are_positive(beta in 0.05f64..=1.0) {
        let p = football_potential(Grid::new(12.0, 601).unwrap(), beta).unwrap();
        prop_assert!(p.check_positive().is_ok());
        prop_assert!((area(&p) - 4.0 * PI).abs() < 1e-9);
        let (lo, hi) = p.moment_limits();
        prop_assert!(lo.abs() < 1e-12 && (hi - 2.0).abs() < 1e-12);
        for w in p.phi_prime.windows(2) {
            prop_assert!(w[1] >= w[0]);
        }
    }

    #[test]
    fn gauss_bonnet_holds(beta in 0.35f64..=1.0) {
        let p = football_potential(Grid::default(), beta).unwrap();
        prop_assert!(gauss_bonnet_defect(&p).unwrap() < 1e-4);
    }
}
