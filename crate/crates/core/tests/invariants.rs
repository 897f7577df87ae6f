//! Property tests of the structural invariants: profile identities,
//! pointwise lemmas, operator symmetry and unitarity of the propagators.

use std::sync::Arc;

use commlab::cancellation::{claim_monotone_check, pair_bound_check, POINTWISE_TOL};
use commlab::commutator::assemble_commutator;
use commlab::evolution::{propagate, EvolutionConfig, Scheme};
use commlab::frequency::{partition_defect, CutoffSpec};
use commlab::grid::{Boundary, DiscreteOperator, Field, Grid, GridSpec};
use commlab::multiplier::build_gamma_n;
use commlab::potentials::{Bump, PotentialSpec};
use commlab::profile::RadialProfile;
use commlab::vector::{dot, random_complex, C64};
use nalgebra::SymmetricEigen;
use proptest::prelude::*;

fn point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-6.0..6.0f64, 3)
}

fn small_grid(boundary: Boundary) -> Arc<Grid> {
    GridSpec::cube(3, 2.0, 10, boundary).build().unwrap()
}

fn two_bump(amplitude: f64, radius: f64) -> PotentialSpec {
    PotentialSpec::TwoBump { b: vec![2.0, 0.0, 0.0], bumps: [Bump { amplitude, radius }; 2] }
}

proptest! {
    #[test]
    fn hessian_eigenvalues_are_g_squared_and_f_over_rho(x in point(), c in point(), sigma in 0.6..2.5f64, a in 0.2..3.0f64) {
        let p = RadialProfile::new(a, sigma, 3).unwrap();
        let rho = x.iter().zip(&c).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
        prop_assume!(rho > 1e-6);
        let mut eig = SymmetricEigen::new(p.hessian_weight(&x, &c).unwrap()).eigenvalues.as_slice().to_vec();
        eig.sort_by(f64::total_cmp);
        let mut expected = [p.g_sq(rho), p.f(rho) / rho, p.f(rho) / rho];
        expected.sort_by(f64::total_cmp);
        for (e, w) in eig.iter().zip(&expected) {
            prop_assert!((e - w).abs() <= 1e-12 * w.abs().max(1.0), "{eig:?} vs {expected:?}");
        }
    }

    #[test]
    fn transverse_gap_is_nonnegative(r in 0.0..50.0f64, sigma in 0.6..3.0f64) {
        let p = RadialProfile::new(1.0, sigma, 3).unwrap();
        prop_assert!(p.transverse_gap(r) >= 0.0);
        prop_assert!(p.f(r) <= p.f_inf() + 1e-12);
    }

    #[test]
    fn pair_bound_holds(x in point(), c1 in 0.0..4.0f64, amplitude in 0.1..5.0f64, radius in 0.5..3.0f64) {
        let (value, bound) = pair_bound_check(&x, &[c1, 0.0, 0.0], &Bump { amplitude, radius }, &RadialProfile::standard()).unwrap();
        prop_assert!(value - bound >= -POINTWISE_TOL * (1.0 + bound.abs()), "value {value} bound {bound}");
    }

    #[test]
    fn claim_sign_follows_the_nearer_center(k1 in -5.0..5.0f64, gap in 0.01..5.0f64, s in 0.0..1.0f64, y in prop::collection::vec(-2.0..2.0f64, 2), y0 in prop::collection::vec(-2.0..2.0f64, 2)) {
        let k2 = k1 + gap;
        let x1 = k1 + s * gap;
        let mid = 0.5 * (k1 + k2);
        prop_assume!((x1 - mid).abs() > 1e-9);
        let v = claim_monotone_check(k1, k2, &[x1, y[0], y[1]], &y0, &RadialProfile::standard()).unwrap();
        if x1 < mid {
            prop_assert!(v <= POINTWISE_TOL);
        } else {
            prop_assert!(v >= -POINTWISE_TOL);
        }
    }

    #[test]
    fn radial_bumps_are_repulsive(x in point(), amplitude in 0.1..5.0f64, radius in 0.5..3.0f64) {
        let v = PotentialSpec::RadialBump { center: vec![0.0; 3], bump: Bump { amplitude, radius } };
        let mut grad = [0.0; 3];
        v.value_grad(&x, 0.0, &mut grad);
        prop_assert!(-x.iter().zip(&grad).map(|(a, b)| a * b).sum::<f64>() >= -1e-14);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn commutator_form_is_symmetric(seed in 0u64..1000, n in 0usize..4, amplitude in 0.5..4.0f64) {
        let g = small_grid(Boundary::Dirichlet);
        let spec = build_gamma_n(&RadialProfile::standard(), n, &[1.0, 0.0, 0.0]).unwrap();
        let v = two_bump(amplitude, 1.6);
        let form = assemble_commutator(&g, &v, &spec, None).unwrap().total;
        let (phi, psi) = (random_complex(g.len(), seed), random_complex(g.len(), seed + 1));
        let lhs = dot(&phi, &form.apply_vec(&psi));
        let rhs = dot(&psi, &form.apply_vec(&phi)).conj();
        prop_assert!((lhs - rhs).norm() <= 1e-10 * lhs.norm().max(1.0));
    }

    #[test]
    fn cutoffs_partition_unity(seed in 0u64..1000, scale in 0.5..20.0f64) {
        let g = small_grid(Boundary::Dirichlet);
        let psi = random_complex(g.len(), seed);
        let defect = partition_defect(&CutoffSpec::exact(scale), &DiscreteOperator::spectral_laplacian(&g), &psi).unwrap();
        prop_assert!(defect <= 1e-12, "{defect}");
    }

    #[test]
    fn propagators_conserve_the_norm(cx in -1.0..1.0f64, px in -2.0..2.0f64, split in any::<bool>()) {
        let boundary = if split { Boundary::Periodic } else { Boundary::Dirichlet };
        let g = GridSpec::cube(3, 3.0, 12, boundary).build().unwrap();
        let psi0 = Field::from_fn(&g, |x| {
            let r2 = (x[0] - cx).powi(2) + x[1] * x[1] + x[2] * x[2];
            C64::from_polar((-r2).exp(), px * x[0])
        });
        let scheme = if split { Scheme::StrangSplitStep } else { Scheme::CrankNicolson };
        let config = EvolutionConfig { dt: 0.05, horizon: 0.5, scheme, ..EvolutionConfig::default() };
        let traj = propagate(&g, &two_bump(2.0, 1.5), &psi0, &config).unwrap();
        let n0 = psi0.norm();
        for k in 0..traj.states.len() {
            prop_assert!((traj.field(k).unwrap().norm() - n0).abs() <= 1e-10 * n0);
        }
    }

    #[test]
    fn field_dumps_round_trip(seed in 0u64..1000, periodic in any::<bool>()) {
        let g = small_grid(if periodic { Boundary::Periodic } else { Boundary::Dirichlet });
        let f = Field::from_vec(&g, random_complex(g.len(), seed)).unwrap();
        let mut bytes = Vec::new();
        f.write_dump(&mut bytes).unwrap();
        let back = Field::read_dump(bytes.as_slice()).unwrap();
        prop_assert_eq!(back.data(), f.data());
        prop_assert!(**back.grid() == *g);
    }
}
