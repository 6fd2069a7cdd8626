//! Special-function numerics for the corruption layer: the coefficient
//! equation `G` and its root solver, closed-form cell penalties, Gauss-
//! Hermite quadrature of the penalty integrand, and the complementary-
//! error-function bounds and integral identities the analysis rests on.
//!
//! Everything `exp(z) * Erfc(sqrt(z))`-shaped goes through the scaled
//! complementary error function [`erfcx`]; the literal product overflows
//! for small coefficients.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};

/// Scaled complementary error function `exp(x^2) * erfc(x)` for `x >= 0`.
///
/// Direct product below the crossover; asymptotic expansion above, where
/// the product would lose precision against erfc underflow.
pub fn erfcx(x: f64) -> f64 {
    assert!(x >= 0.0 && !x.is_nan(), "erfcx domain is x >= 0, got {x}");
    if x < 12.0 {
        (x * x).exp() * libm::erfc(x)
    } else {
        // 1/(x sqrt(pi)) * sum_k (-1)^k (2k-1)!! / (2x^2)^k
        let inv2x2 = 1.0 / (2.0 * x * x);
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..=24u32 {
            term *= -(f64::from(2 * k - 1)) * inv2x2;
            sum += term;
            if term.abs() < f64::EPSILON * sum.abs() {
                break;
            }
        }
        sum / (x * PI.sqrt())
    }
}

/// Lower bound on `erfc(x)` for `x > 0`:
/// `(exp(-x^2)/x - exp(-x^2)/(2x^3)) / sqrt(pi)`.
pub fn erfc_lb(x: f64) -> f64 {
    assert!(x > 0.0, "erfc_lb domain is x > 0, got {x}");
    let e = (-x * x).exp();
    (e / x - e / (2.0 * x * x * x)) / PI.sqrt()
}

/// `integral 1/(L+x^2) * exp(-t x^2)/sqrt(2 pi) dx` over the real line.
pub fn i_integral(l: f64, t: f64) -> f64 {
    assert!(l > 0.0 && t >= 0.0, "require L > 0, t >= 0");
    erfcx((l * t).sqrt()) * (PI / (2.0 * l)).sqrt()
}

/// `integral 1/(L+x^2)^2 * exp(-t x^2)/sqrt(2 pi) dx` over the real line.
pub fn j_integral(l: f64, t: f64) -> f64 {
    assert!(l > 0.0 && t >= 0.0, "require L > 0, t >= 0");
    (PI / (2.0 * l)).sqrt() * (1.0 / (2.0 * l) - t) * erfcx((l * t).sqrt())
        + t.sqrt() / (2f64.sqrt() * l)
}

/// A Gauss-Hermite rule: `integral f(x) exp(-x^2) dx ~ sum w_i f(x_i)`.
#[derive(Debug)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Expectation of `f` under the standard normal distribution.
    pub fn normal_expectation(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        let scale = 2f64.sqrt();
        let mut acc = 0.0;
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(scale * x);
        }
        acc / PI.sqrt()
    }
}

/// Nodes and weights via Golub-Welsch: eigenvalues of the Jacobi matrix by
/// implicit-shift QL, tracking only the first eigenvector components.
fn compute_gauss_hermite(n: usize) -> GaussHermite {
    assert!(n >= 1);
    let mut d = vec![0.0f64; n];
    let mut e: Vec<f64> = (1..n).map(|j| (j as f64 / 2.0).sqrt()).collect();
    e.push(0.0);
    let mut z = vec![0.0f64; n];
    z[0] = 1.0;

    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m < n - 1 {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            assert!(iter <= 64, "Gauss-Hermite eigensolve failed to converge");
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c) = (1.0f64, 1.0f64);
            let mut p = 0.0;
            let mut underflow = false;
            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                f = z[i + 1];
                z[i + 1] = s * z[i] + c * f;
                z[i] = c * z[i] - s * f;
            }
            if !underflow {
                d[l] -= p;
                e[l] = g;
                e[m] = 0.0;
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).unwrap());
    let nodes: Vec<f64> = order.iter().map(|&i| d[i]).collect();
    let weights: Vec<f64> = order.iter().map(|&i| PI.sqrt() * z[i] * z[i]).collect();
    GaussHermite { nodes, weights }
}

/// Cached rule lookup; rules are immutable once built.
pub fn gauss_hermite(n: usize) -> Arc<GaussHermite> {
    static CACHE: OnceLock<Mutex<BTreeMap<usize, Arc<GaussHermite>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(BTreeMap::new()));
    let mut guard = cache.lock().unwrap();
    guard
        .entry(n)
        .or_insert_with(|| Arc::new(compute_gauss_hermite(n)))
        .clone()
}

/// Per-cell parameters of the corruption layer for an agent who keeps
/// collecting after the plan adjustment: her adjusted count `n_star`, the
/// frozen column total `t_prime`, and `delta = t_prime - 2 * n_star` (the
/// number of points that will be corrupted for her).
///
/// Construction enforces the domain in which the coefficient equation has a
/// root at or above `sqrt(n_star)`:
/// `delta > 0`, `n_star * t_prime >= (sigma/sqrt(cost))^2`, and
/// `n_star < (sigma/sqrt(cost)) / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellParams {
    pub n_star: f64,
    pub t_prime: f64,
    pub delta: f64,
    pub cost: f64,
    pub sigma: f64,
}

impl CellParams {
    pub fn new(n_star: f64, t_prime: f64, cost: f64, sigma: f64) -> Result<Self> {
        let fail = |msg: String| Err(Error::CellNotInCorruptionDomain(msg));
        if !n_star.is_finite() || n_star <= 0.0 {
            return fail(format!("n_star must be positive and finite, got {n_star}"));
        }
        if !t_prime.is_finite() || t_prime <= 0.0 {
            return fail(format!(
                "t_prime must be positive and finite, got {t_prime}"
            ));
        }
        if !cost.is_finite() || cost <= 0.0 {
            return fail(format!("cost must be positive and finite, got {cost}"));
        }
        if !sigma.is_finite() || sigma <= 0.0 {
            return fail(format!("sigma must be positive and finite, got {sigma}"));
        }
        let delta = t_prime - 2.0 * n_star;
        if delta <= 0.0 {
            return fail(format!("t_prime - 2*n_star = {delta} must be positive"));
        }
        let n_ir = sigma / cost.sqrt();
        // Relative slack absorbs one rounding when n_star was set to
        // n_ir^2 / t_prime by the plan adjustment.
        if n_star * t_prime < n_ir * n_ir * (1.0 - 1e-9) {
            return fail(format!(
                "n_star * t_prime = {} below the squared solo count {}",
                n_star * t_prime,
                n_ir * n_ir
            ));
        }
        if n_star >= n_ir / 2.0 {
            return fail(format!(
                "n_star = {n_star} not below half the solo count {n_ir}"
            ));
        }
        Ok(CellParams {
            n_star,
            t_prime,
            delta,
            cost,
            sigma,
        })
    }
}

/// A solved corruption coefficient: the smallest root of `G` at or above
/// `sqrt(n_star)`, with the achieved residual `|G(value)|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alpha {
    pub value: f64,
    pub residual: f64,
}

/// The coefficient equation. Negative at `sqrt(n_star)` and increasing to
/// `+inf`, its root makes a compliant agent's penalty stationary in her own
/// count at `n_star`.
pub fn g_function(p: &CellParams, alpha: f64) -> f64 {
    assert!(alpha > 0.0, "g_function requires alpha > 0, got {alpha}");
    let (ns, tp, dl, c, s2) = (p.n_star, p.t_prime, p.delta, p.cost, p.sigma * p.sigma);
    let a2 = alpha * alpha;
    let rational = (4.0 * alpha / tp.sqrt())
        * (4.0 * a2 * tp / (dl * ns) - 1.0 - c * 16.0 * a2 * tp * ns / (s2 * dl));
    let z = tp / (8.0 * a2);
    let scaled = erfcx(z.sqrt()) * ((4.0 * a2 / tp) * (tp / ns + 1.0) - 1.0) * (2.0 * PI).sqrt();
    rational - scaled
}

/// Default absolute tolerance on the coefficient for [`solve_alpha`].
pub const ALPHA_TOL: f64 = 1e-12;

/// Smallest root of `G` in `[sqrt(n_star), inf)`: geometric bracket
/// expansion (factor 2) from `sqrt(n_star)`, then bisection.
pub fn solve_alpha(p: &CellParams, tol: f64) -> Result<Alpha> {
    assert!(tol > 0.0);
    let start = p.n_star.sqrt();
    if g_function(p, start) > 0.0 {
        // Outside the proven domain; cannot bracket from a negative start.
        return Err(Error::NoSignChange);
    }
    let mut lo = start;
    let mut hi = start;
    let mut bracketed = false;
    for _ in 0..60 {
        let next = hi * 2.0;
        if g_function(p, next) > 0.0 {
            lo = hi;
            hi = next;
            bracketed = true;
            break;
        }
        hi = next;
    }
    if !bracketed {
        return Err(Error::NoSignChange);
    }
    // g(lo) <= 0 < g(hi) throughout.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break; // adjacent floats
        }
        if g_function(p, mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= tol {
            break;
        }
    }
    let value = 0.5 * (lo + hi);
    Ok(Alpha {
        value,
        residual: g_function(p, value).abs(),
    })
}

/// Certifies on a `points`-point grid that `G` has no sign change strictly
/// between `sqrt(n_star)` and the solved root, i.e. the root is the
/// smallest one up to grid resolution.
pub fn smallest_root_scan(p: &CellParams, alpha: &Alpha, points: usize) -> bool {
    let lo = p.n_star.sqrt();
    let hi = alpha.value;
    if hi <= lo {
        return true;
    }
    let slack = 1e-9 * g_function(p, lo).abs().max(1.0);
    for j in 1..=points {
        let a = lo + (hi - lo) * (j as f64) / (points as f64 + 1.0);
        if g_function(p, a) > slack {
            return false;
        }
    }
    true
}

/// Closed-form penalty of a compliant corruption-branch cell (estimation
/// error for the distribution plus collection cost at `n_star`).
pub fn penalty_closed_form(p: &CellParams, alpha: &Alpha) -> f64 {
    let (ns, tp, dl, c, s2) = (p.n_star, p.t_prime, p.delta, p.cost, p.sigma * p.sigma);
    let a2 = alpha.value * alpha.value;
    let z = tp / (8.0 * a2);
    s2 / (2.0 * ns)
        - (s2 / (4.0 * a2)) * ((dl / ns) / 2.0) * erfcx(z.sqrt()) * (PI / (tp / (2.0 * a2))).sqrt()
        + c * ns
}

/// Algebraically equivalent rational-in-alpha form of
/// [`penalty_closed_form`], valid at roots of `G`; serves as a mutual
/// cross-check of the two derivations.
pub fn penalty_closed_form_alt(p: &CellParams, alpha: &Alpha) -> f64 {
    let (ns, tp, dl, c, s2) = (p.n_star, p.t_prime, p.delta, p.cost, p.sigma * p.sigma);
    let a = alpha.value;
    let num = a * (16.0 * c * ns * ns * tp * a * a + (ns * dl - 4.0 * tp * a * a) * s2);
    let den = -ns * tp * a + 4.0 * (ns + tp) * a * a * a;
    debug_assert!(den > 0.0, "denominator must be positive for alpha >= sqrt(n_star)");
    (2.0 * c * ns * ns + s2 + num / den) / (2.0 * ns)
}

/// The compliant agent's penalty for the distribution as a function of her
/// own count `n`, others fixed at the adjusted plan: the standard-normal
/// expectation of the precision-weighted estimator's error, by
/// Gauss-Hermite quadrature, plus `cost * n`.
///
/// `alpha` is normally [`Alpha::value`]; passing `0.0` gives the
/// zero-corruption limit `sigma^2/(t_prime - n_star + n) + cost * n`.
pub fn penalty_quadrature(p: &CellParams, alpha: f64, n: f64, nodes: usize) -> f64 {
    assert!(n > 0.0, "own count must be positive, got {n}");
    assert!(nodes >= 32, "need at least 32 quadrature nodes, got {nodes}");
    assert!(alpha >= 0.0);
    let (ns, dl, c, s2) = (p.n_star, p.delta, p.cost, p.sigma * p.sigma);
    let rule = gauss_hermite(nodes);
    let spread = alpha * alpha * (s2 / n + s2 / ns);
    let expectation =
        rule.normal_expectation(|x| 1.0 / (dl / (s2 + spread * x * x) + (n + ns) / s2));
    expectation + c * n
}
