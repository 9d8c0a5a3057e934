//! Instances where the outer hierarchy never stabilizes, checked against
//! their closed-form outer sets.

use nalgebra::{dmatrix, dvector, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rdo_core::outer::{fixed_point_reached, lower_bound, outer_set};
use rdo_core::{Config, Dynamics, Polytope, RdoInstance};

fn instance(p: Polytope, g: DMatrix<f64>) -> RdoInstance {
    RdoInstance::new(DVector::zeros(2), p, Dynamics::single(g).unwrap()).unwrap()
}

fn halving_mix() -> DMatrix<f64> {
    dmatrix![2.0 / 3.0, -1.0 / 3.0; -1.0 / 3.0, 2.0 / 3.0] * 0.5
}

#[test]
fn expanding_axis_shrinks_slab() {
    let cfg = Config::default();
    let a: f64 = 3.0;
    let inst = instance(Polytope::cube(2, -1.0, 1.0).unwrap(), dmatrix![a, 0.0; 0.0, 1.0 / a]);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for r in 0..=6 {
        assert!(!fixed_point_reached(&inst, r, &cfg).unwrap());
        let s = outer_set(&inst, r, &cfg).unwrap();
        let w = a.powi(-(r as i32));
        for _ in 0..200 {
            let x = dvector![rng.gen_range(-1.5 * w..1.5 * w), rng.gen_range(-1.5..1.5)];
            let closed = (x[0].abs() - w).max(x[1].abs() - 1.0);
            let inside = s.max_violation(&x) <= cfg.tol.feas;
            if closed.abs() > 1e-9 {
                assert_eq!(inside, closed <= 0.0, "r = {r}, x = {x:?}");
            }
        }
    }
}

#[test]
fn origin_on_boundary_gives_shrinking_cones() {
    let cfg = Config::default();
    let inst = instance(Polytope::cube(2, 0.0, 1.0).unwrap(), halving_mix());
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for r in 1..=6 {
        assert!(!fixed_point_reached(&inst, r, &cfg).unwrap());
        let s = outer_set(&inst, r, &cfg).unwrap();
        let k = 3f64.powi(-(r as i32));
        for _ in 0..200 {
            let x: DVector<f64> = dvector![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
            let closed = (x[0] - x[1]).abs() - k * (x[0] + x[1]);
            let inside = s.max_violation(&x) <= cfg.tol.feas;
            if closed.abs() > 1e-9 {
                assert_eq!(inside, closed <= 0.0, "r = {r}, x = {x:?}");
            }
        }
    }
}

#[test]
fn half_plane_has_escaping_points() {
    // z_r lies in S_r but not in S_{r+1}
    let cfg = Config::default();
    let half = Polytope::from_rows(&[&[-1.0, 0.0]], &[1.0]).unwrap();
    let inst = instance(half, halving_mix());
    let l = |k: i32| (3f64.powi(k) + 1.0) / (3f64.powi(k) - 1.0);
    let i = |k: i32| 2.0 * 6f64.powi(k) / (3f64.powi(k) - 1.0);
    for r in 1..=4 {
        let z1 = (i(r + 2) - i(r)) / (l(r) - l(r + 2));
        let z = dvector![z1, i(r + 2) + l(r + 2) * z1];
        assert!((z1 - 2f64.powi(r - 3) * (3f64.powi(r + 3) - 35.0)).abs() < 1e-9 * z1.abs());
        let s_r = outer_set(&inst, r as usize, &cfg).unwrap();
        let s_next = outer_set(&inst, r as usize + 1, &cfg).unwrap();
        assert!(s_r.max_violation(&z) <= 1e-9 * z.amax(), "r = {r}");
        assert!(s_next.max_violation(&z) > 1e-9 * z.amax(), "r = {r}");
    }
}

#[test]
fn unbounded_levels_report_minus_infinity() {
    let cfg = Config::default();
    let half = Polytope::from_rows(&[&[-1.0, 0.0]], &[1.0]).unwrap();
    let inst = RdoInstance::new(dvector![0.0, 1.0], half, Dynamics::single(halving_mix()).unwrap()).unwrap();
    for r in 0..=3 {
        assert_eq!(lower_bound(&inst, r, &cfg).unwrap().lower.as_f64(), f64::NEG_INFINITY);
    }
}
