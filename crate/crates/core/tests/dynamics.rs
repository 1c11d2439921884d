use adjshadow::dynamics::{
    attractor_trajectory, builtin, builtin_names, check_derivatives, integrate, iterate, spinup, CatMap, LinearSystem, Lorenz63,
};
use adjshadow::tangent::{propagate, Linearization};
use adjshadow::{System, SystemKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn lorenz_mean_z_on_a_long_run() {
    let traj = integrate(&Lorenz63::default(), &[1.0, 1.0, 1.0], 28.0, 1e-3, 5_000_000).unwrap();
    let skip = traj.len() / 10;
    let z: f64 = (skip..traj.len()).map(|i| traj.state(i)[2]).sum::<f64>() / (traj.len() - skip) as f64;
    assert!((22.5..=24.5).contains(&z), "mean z = {z}");
}

#[test]
fn lorenz_spinup_lands_in_the_attractor_box() {
    let u = spinup(&Lorenz63::default(), &[1.0, 1.0, 1.0], 28.0, 100.0, 1e-3).unwrap();
    assert!(u[0].abs() < 25.0 && u[1].abs() < 30.0 && u[2] > 0.0 && u[2] < 50.0, "{u:?}");
}

#[test]
fn perturbed_cat_map_stays_on_the_unit_square() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let u0 = [rng.random::<f64>(), rng.random::<f64>()];
    let traj = iterate(&CatMap, &u0, 0.05, 100_000).unwrap();
    assert!(traj.states().iter().all(|u| u.iter().all(|x| (0.0..1.0).contains(x))));
    let u = spinup(&CatMap, &u0, 0.05, 10.0, 1.0).unwrap();
    assert!(u.iter().all(|x| (0.0..1.0).contains(x)));
}

#[test]
fn cat_map_origin_is_fixed() {
    let traj = iterate(&CatMap, &[0.0, 0.0], 0.0, 50).unwrap();
    assert!(traj.states().iter().all(|u| u == [0.0, 0.0]));
}

#[test]
fn map_trajectories_are_bit_reproducible() {
    let a = iterate(&CatMap, &[0.123, 0.456], 0.07, 5000).unwrap();
    let b = iterate(&CatMap, &[0.123, 0.456], 0.07, 5000).unwrap();
    assert_eq!(a.states().as_flat(), b.states().as_flat());
}

#[test]
fn rk4_converges_at_fourth_order() {
    let sys = LinearSystem::saddle();
    let exact = [1f64.exp(), (-2f64).exp()];
    let err = |h: f64| {
        let n = (1.0 / h).round() as usize;
        let u = integrate(&sys, &[1.0, 1.0], 0.0, h, n).unwrap();
        let last = u.last();
        ((last[0] - exact[0]).powi(2) + (last[1] - exact[1]).powi(2)).sqrt()
    };
    for h in [0.1, 0.05] {
        let ratio = err(h) / err(h / 2.0);
        assert!((14.0..=18.0).contains(&ratio), "h = {h}: ratio {ratio}");
    }
}

fn sample_points(sys: &dyn System, rng: &mut ChaCha8Rng, s: f64) -> Vec<Vec<f64>> {
    let m = sys.dim();
    match (sys.kind(), sys.name()) {
        (SystemKind::Map, _) => {
            let traj = attractor_trajectory(sys, &vec![0.3; m], s, 1.0, 100.0, 10_000).unwrap();
            (0..100).map(|_| traj.state(rng.random_range(0..traj.len())).to_vec()).collect()
        }
        (SystemKind::Flow, "lorenz63") => {
            let traj = attractor_trajectory(sys, &[1.0, 1.0, 1.0], s, 1e-2, 50.0, 10_000).unwrap();
            (0..100).map(|_| traj.state(rng.random_range(0..traj.len())).to_vec()).collect()
        }
        // linear systems have a point attractor; any point is as good
        (SystemKind::Flow, _) => (0..100).map(|_| (0..m).map(|_| rng.random_range(-3.0..3.0)).collect()).collect(),
    }
}

#[test]
fn builtin_derivatives_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for name in builtin_names() {
        let sys = builtin(name).unwrap();
        let s = match *name {
            "lorenz63" => 28.0,
            "catmap" => 0.05,
            _ => 0.3,
        };
        for u in sample_points(sys.as_ref(), &mut rng, s) {
            let r = check_derivatives(sys.as_ref(), &u, s, 1e-5);
            assert!(r.max() <= 1e-5, "{name} at {u:?}: {r:?}");
        }
    }
}

#[test]
fn lorenz_propagation_round_trip() {
    let sys = Lorenz63::default();
    let traj = attractor_trajectory(&sys, &[1.0, 1.0, 1.0], 28.0, 1e-3, 20.0, 500).unwrap();
    let lin = Linearization::new(&sys, &traj).unwrap();
    let w = [0.3, -1.0, 0.7];
    let fwd = propagate(&lin, 0, 500, &w).unwrap();
    let back = propagate(&lin, 500, 0, fwd.as_slice()).unwrap();
    for (a, b) in back.iter().zip(w) {
        assert!((a - b).abs() < 1e-8, "{back:?}");
    }
}
