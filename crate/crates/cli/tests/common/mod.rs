//! Shared oracles and instance generators for the acceptance suite. These
//! stay independent of the library's computation paths: quadrature here is
//! adaptive Simpson, not Gauss-Hermite.

use cbl_core::bargaining::{check_favorable, utilitarian_bargain};
use cbl_core::corruption::CellParams;
use cbl_core::model::is_bargaining_solution;
use cbl_core::{Instance, WorkPlan};
use rand::{Rng, RngExt};

/// Adaptive Simpson with Richardson correction.
pub fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn rec(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            left + right + (left + right - whole) / 15.0
        } else {
            rec(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)
                + rec(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)
        }
    }
    let m = 0.5 * (a + b);
    let (fa, fb, fm) = (f(a), f(b), f(m));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, fa, b, fb, m, fm, whole, tol, 48)
}

/// Oracle for `integral 1/(L+x^2)^p * exp(-t x^2)/sqrt(2 pi) dx` over the
/// real line via `x = sqrt(L) tan(theta)`.
pub fn rational_gaussian_integral(l: f64, t: f64, p: i32) -> f64 {
    let g = move |th: f64| {
        if th >= std::f64::consts::FRAC_PI_2 {
            return 0.0;
        }
        let tan = th.tan();
        let cos = th.cos();
        let weight = (-t * l * tan * tan).exp() / (2.0 * std::f64::consts::PI).sqrt();
        match p {
            1 => weight / l.sqrt(),
            2 => cos * cos * weight / l.powf(1.5),
            _ => unreachable!(),
        }
    };
    2.0 * simpson(&g, 0.0, std::f64::consts::FRAC_PI_2, 1e-14)
}

/// A random cell from the corruption domain: the adjusted count sits in the
/// lower 80% of its admissible range and the frozen total within 3x of its
/// lower bound.
pub fn random_cell(rng: &mut impl Rng) -> CellParams {
    let sigma: f64 = rng.random_range(0.5..2.0);
    let cost: f64 = rng.random_range(0.1..10.0);
    let n_ir = sigma / cost.sqrt();
    let n_star = rng.random_range(0.05..0.80) * n_ir / 2.0;
    let t_min = (2.0 * n_ir).max(n_ir * n_ir / n_star);
    let t_prime = t_min * (1.0 + rng.random_range(0.01..2.0));
    CellParams::new(n_star, t_prime, cost, sigma).unwrap()
}

/// Symmetric or mildly cost-heterogeneous instances whose utilitarian plan
/// passes the per-distribution sharing check (rejection sampling).
pub fn favorable_instances(rng: &mut impl Rng, count: usize) -> Vec<(Instance, WorkPlan)> {
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count {
        attempts += 1;
        assert!(attempts < 3000, "generator failed to find favorable instances");
        let m = rng.random_range(2..=8usize);
        let d = rng.random_range(1..=3usize);
        let sigma: f64 = rng.random_range(0.5..2.0);
        let heterogeneous = attempts % 2 == 0;
        let costs: Vec<Vec<f64>> = (0..m)
            .map(|_| {
                (0..d)
                    .map(|_| {
                        let base: f64 = rng.random_range(0.2..5.0);
                        if heterogeneous {
                            base * rng.random_range(1.0..1.05)
                        } else {
                            base
                        }
                    })
                    .collect()
            })
            .collect();
        // symmetric draws share one cost per column
        let costs = if heterogeneous {
            costs
        } else {
            let row: Vec<f64> = costs[0].clone();
            vec![row; m]
        };
        let inst = Instance::new(costs, sigma).unwrap();
        let plan = match utilitarian_bargain(&inst, 1e-9) {
            Ok(p) => p,
            Err(_) => continue,
        };
        if check_favorable(&inst, &plan).favorable {
            out.push((inst, plan));
        }
    }
    out
}

/// Comparative-advantage instances: square cost matrices where each agent
/// is cheapest on her own distribution, with the corner plan that loads
/// each distribution on its cheapest agent. Non-favorable for m >= 4 and
/// always a bargaining solution.
pub fn comparative_advantage_instance(
    rng: &mut impl Rng,
) -> (Instance, WorkPlan) {
    let m = rng.random_range(4..=8usize);
    let sigma: f64 = rng.random_range(0.5..2.0);
    let premium: f64 = rng.random_range(1.25..1.6);
    let bases: Vec<f64> = (0..m).map(|_| rng.random_range(0.5..2.0)).collect();
    let costs: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            (0..m)
                .map(|k| if i == k { bases[k] } else { bases[k] * premium })
                .collect()
        })
        .collect();
    let inst = Instance::new(costs, sigma).unwrap();
    let counts: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            (0..m)
                .map(|k| {
                    if i == k {
                        sigma * (m as f64 / bases[k]).sqrt()
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let plan = WorkPlan::new(counts, &inst).unwrap();
    let rep = is_bargaining_solution(&inst, &plan);
    assert!(rep.is_solution, "corner plan must be individually rational");
    assert!(
        !check_favorable(&inst, &plan).favorable,
        "comparative-advantage corner plans are non-favorable at this size"
    );
    (inst, plan)
}
