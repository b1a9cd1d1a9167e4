//! Hand-built motor primitives: reach a pose, pick up the ball on the way,
//! and carry it to a chosen point. Used for reachability sweeps and as a
//! known-good trajectory in tests.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::sim::{basis, Parameterization, Point, N_BASIS, N_JOINTS, THETA_DIM};

/// Joint angles whose tip lands on `target` (|target| ≤ 1): the first joint
/// aims, the remaining six share one bend so the chain is a circular arc.
pub fn arc_pose(target: Point) -> [f64; N_JOINTS] {
    let r = (target[0].hypot(target[1])).clamp(0.0, 1.0);
    let n = N_JOINTS as f64;
    // reach of an n-link arc with equal relative bend b
    let reach = |b: f64| if b.abs() < 1e-12 { 1.0 } else { ((n * b / 2.0).sin() / (n * (b / 2.0).sin())).abs() };
    // reach is decreasing on [0, 2π/n]
    let (mut lo, mut hi) = (0.0, 2.0 * PI / n);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if reach(mid) > r {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let bend = 0.5 * (lo + hi);
    // tip direction is the mean heading of the segments
    let aim = target[1].atan2(target[0]) - (n - 1.0) / 2.0 * bend;
    let mut angles = [bend; N_JOINTS];
    angles[0] = (aim + PI).rem_euclid(2.0 * PI) - PI;
    angles
}

/// Least-squares RBF weights reproducing `profile(phase)` (radians per joint)
/// at the `horizon + 1` sample phases, clipped into `[-1, 1]`.
pub fn fit_primitive<F>(profile: F, horizon: usize) -> Parameterization
where
    F: Fn(f64) -> [f64; N_JOINTS],
{
    let rows = horizon + 1;
    let design = DMatrix::from_fn(rows, N_BASIS, |t, b| basis(b, t as f64 / horizon as f64));
    let svd = design.svd(true, true);
    let mut w = [0.0; THETA_DIM];
    for j in 0..N_JOINTS {
        let y = DVector::from_fn(rows, |t, _| profile(t as f64 / horizon as f64)[j] / PI);
        let sol = svd.solve(&y, 1e-12).expect("svd has both factors");
        for b in 0..N_BASIS {
            w[j * N_BASIS + b] = sol[b];
        }
    }
    Parameterization::clipped(w)
}

/// Holds the pose over `grasp` for the first 40% of the episode, then moves
/// linearly in joint space to the pose over `target`.
pub fn carry(grasp: Point, target: Point, horizon: usize) -> Parameterization {
    let a = arc_pose(grasp);
    let b = arc_pose(target);
    // unwrap the base joint so the sweep takes the short way round
    let mut b0 = b[0];
    while b0 - a[0] > PI {
        b0 -= 2.0 * PI;
    }
    while b0 - a[0] < -PI {
        b0 += 2.0 * PI;
    }
    fit_primitive(
        |phase| {
            let s = ((phase - 0.4) / 0.5).clamp(0.0, 1.0);
            std::array::from_fn(|j| {
                let end = if j == 0 { b0 } else { b[j] };
                a[j] + s * (end - a[j])
            })
        },
        horizon,
    )
}
