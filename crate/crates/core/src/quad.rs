//! One-dimensional quadrature kernels: Gauss–Legendre rules, an adaptive
//! Gauss–Kronrod integrator, and closed-form power integrals.

// node/weight tables carry their full published precision
#![allow(clippy::excessive_precision)]

/// Nodes (positive half) and weights of the 7-point Gauss rule on [-1,1].
const G7_NODES: [f64; 4] = [
    0.0,
    0.405845151377397166906606412076961,
    0.741531185599394439863864773280788,
    0.949107912342758524526189684047851,
];
const G7_WEIGHTS: [f64; 4] = [
    0.417959183673469387755102040816327,
    0.381830050505118944950369775488975,
    0.279705391489276667901467771423780,
    0.129484966168869693270611432679082,
];

/// Nodes (positive half) and weights of the 15-point Kronrod extension.
const K15_NODES: [f64; 8] = [
    0.0,
    0.207784955007898467600689403773245,
    0.405845151377397166906606412076961,
    0.586087235467691130294144838258730,
    0.741531185599394439863864773280788,
    0.864864423359769072789712788640926,
    0.949107912342758524526189684047851,
    0.991455371120812639206854697526329,
];
const K15_WEIGHTS: [f64; 8] = [
    0.209482141084727828012999174891714,
    0.204432940075298892414161999234649,
    0.190350578064785409913256402421014,
    0.169004726639267902826583426598550,
    0.140653259715525918745189590510238,
    0.104790010322250183839876322541518,
    0.063092092629978553290700663189204,
    0.022935322010529224963732008058970,
];

/// One Gauss7/Kronrod15 evaluation on [a,b]; returns (K15 value, |K15-G7|).
fn gk15<F: Fn(f64) -> f64 + ?Sized>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut gauss = 0.0;
    let mut kronrod = 0.0;
    // center point
    let fc = f(c);
    gauss += G7_WEIGHTS[0] * fc;
    kronrod += K15_WEIGHTS[0] * fc;
    for i in 1..4 {
        let x = h * G7_NODES[i];
        let s = f(c + x) + f(c - x);
        gauss += G7_WEIGHTS[i] * s;
        // odd Kronrod indices 2,4,6 coincide with Gauss nodes 1,2,3
        kronrod += K15_WEIGHTS[2 * i] * s;
    }
    for i in 0..4 {
        let x = h * K15_NODES[2 * i + 1];
        let s = f(c + x) + f(c - x);
        kronrod += K15_WEIGHTS[2 * i + 1] * s;
    }
    (kronrod * h, (kronrod - gauss).abs() * h)
}

/// Adaptive Gauss–Kronrod integration of `f` on `[a,b]` to relative
/// tolerance `rel_tol`. Bisection recursion with a depth cap; integrable
/// endpoint singularities converge through the depth budget.
pub fn adaptive<F: Fn(f64) -> f64 + ?Sized>(f: &F, a: f64, b: f64, rel_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (whole, _) = gk15(f, a, b);
    let scale = whole.abs().max(1e-300);
    adaptive_rec(f, a, b, whole, rel_tol * scale, 0)
}

fn adaptive_rec<F: Fn(f64) -> f64 + ?Sized>(
    f: &F,
    a: f64,
    b: f64,
    whole: f64,
    abs_tol: f64,
    depth: usize,
) -> f64 {
    let c = 0.5 * (a + b);
    let (left, el) = gk15(f, a, c);
    let (right, er) = gk15(f, c, b);
    if (el + er <= abs_tol && (left + right - whole).abs() <= abs_tol) || depth >= 52 {
        return left + right;
    }
    adaptive_rec(f, a, c, left, 0.5 * abs_tol, depth + 1)
        + adaptive_rec(f, c, b, right, 0.5 * abs_tol, depth + 1)
}

/// All weighted monomial moments `∫_{y0}^{y0+h} w(y) ((y-y0)/h)^k dy` for
/// `k = 0..=k_max` in one adaptive pass: the weight evaluations are shared
/// across moments, and refinement is driven by the worst per-moment error.
pub fn adaptive_moments(
    w: &dyn Fn(f64) -> f64,
    y0: f64,
    h: f64,
    k_max: usize,
    rel_tol: f64,
) -> Vec<f64> {
    fn eval(
        w: &dyn Fn(f64) -> f64,
        y0: f64,
        h: f64,
        a: f64,
        b: f64,
        k_max: usize,
        kron: &mut [f64],
        gauss: &mut [f64],
    ) {
        let c = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        kron.iter_mut().for_each(|v| *v = 0.0);
        gauss.iter_mut().for_each(|v| *v = 0.0);
        let mut push = |x: f64, wk: f64, wg: f64| {
            let f = w(x);
            let s = (x - y0) / h;
            let mut sk = 1.0;
            for k in 0..=k_max {
                kron[k] += wk * f * sk;
                if wg != 0.0 {
                    gauss[k] += wg * f * sk;
                }
                sk *= s;
            }
        };
        push(c, K15_WEIGHTS[0] * half, G7_WEIGHTS[0] * half);
        for i in 1..4 {
            let x = half * G7_NODES[i];
            push(c + x, K15_WEIGHTS[2 * i] * half, G7_WEIGHTS[i] * half);
            push(c - x, K15_WEIGHTS[2 * i] * half, G7_WEIGHTS[i] * half);
        }
        for i in 0..4 {
            let x = half * K15_NODES[2 * i + 1];
            push(c + x, K15_WEIGHTS[2 * i + 1] * half, 0.0);
            push(c - x, K15_WEIGHTS[2 * i + 1] * half, 0.0);
        }
    }

    fn rec(
        w: &dyn Fn(f64) -> f64,
        y0: f64,
        h: f64,
        a: f64,
        b: f64,
        k_max: usize,
        abs_tol: f64,
        depth: usize,
        out: &mut [f64],
        scratch: &mut [f64],
    ) {
        let n = k_max + 1;
        let c = 0.5 * (a + b);
        let (kl, rest) = scratch.split_at_mut(n);
        let (gl, rest) = rest.split_at_mut(n);
        let (kr, gr) = rest.split_at_mut(n);
        eval(w, y0, h, a, c, k_max, kl, gl);
        eval(w, y0, h, c, b, k_max, kr, gr);
        let mut err = 0.0f64;
        for k in 0..n {
            err = err.max((kl[k] + kr[k] - gl[k] - gr[k]).abs());
        }
        if err <= abs_tol || depth >= 48 {
            for k in 0..n {
                out[k] += kl[k] + kr[k];
            }
            return;
        }
        let mut sub = vec![0.0; 4 * n];
        rec(w, y0, h, a, c, k_max, 0.5 * abs_tol, depth + 1, out, &mut sub);
        rec(w, y0, h, c, b, k_max, 0.5 * abs_tol, depth + 1, out, &mut sub);
    }

    let n = k_max + 1;
    let mut first_k = vec![0.0; n];
    let mut first_g = vec![0.0; n];
    eval(w, y0, h, y0, y0 + h, k_max, &mut first_k, &mut first_g);
    let scale = first_k
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1e-300);
    let mut out = vec![0.0; n];
    let mut scratch = vec![0.0; 4 * n];
    rec(
        w,
        y0,
        h,
        y0,
        y0 + h,
        k_max,
        rel_tol * scale,
        0,
        &mut out,
        &mut scratch,
    );
    out
}

/// Gauss–Legendre nodes/weights on [-1,1] for small fixed orders.
pub fn gauss_legendre(n: usize) -> (&'static [f64], &'static [f64]) {
    match n {
        1 => (&[0.0], &[2.0]),
        2 => {
            const X: [f64; 2] = [-0.5773502691896257645091488, 0.5773502691896257645091488];
            const W: [f64; 2] = [1.0, 1.0];
            (&X, &W)
        }
        3 => {
            const X: [f64; 3] = [-0.7745966692414833770358531, 0.0, 0.7745966692414833770358531];
            const W: [f64; 3] = [
                0.5555555555555555555555556,
                0.8888888888888888888888889,
                0.5555555555555555555555556,
            ];
            (&X, &W)
        }
        4 => {
            const X: [f64; 4] = [
                -0.8611363115940525752239465,
                -0.3399810435848562648026658,
                0.3399810435848562648026658,
                0.8611363115940525752239465,
            ];
            const W: [f64; 4] = [
                0.3478548451374538573730639,
                0.6521451548625461426269361,
                0.6521451548625461426269361,
                0.3478548451374538573730639,
            ];
            (&X, &W)
        }
        5 => {
            const X: [f64; 5] = [
                -0.9061798459386639927976269,
                -0.5384693101056830910363144,
                0.0,
                0.5384693101056830910363144,
                0.9061798459386639927976269,
            ];
            const W: [f64; 5] = [
                0.2369268850561890875142640,
                0.4786286704993664680412915,
                0.5688888888888888888888889,
                0.4786286704993664680412915,
                0.2369268850561890875142640,
            ];
            (&X, &W)
        }
        _ => {
            const X: [f64; 8] = [
                -0.9602898564975362316835609,
                -0.7966664774136267395915539,
                -0.5255324099163289858177390,
                -0.1834346424956498049394761,
                0.1834346424956498049394761,
                0.5255324099163289858177390,
                0.7966664774136267395915539,
                0.9602898564975362316835609,
            ];
            const W: [f64; 8] = [
                0.1012285362903762591525314,
                0.2223810344533744705443560,
                0.3137066458778872873379622,
                0.3626837833783619829651504,
                0.3626837833783619829651504,
                0.3137066458778872873379622,
                0.2223810344533744705443560,
                0.1012285362903762591525314,
            ];
            (&X, &W)
        }
    }
}

/// Exact `∫_c^d y^e dy` for `0 <= c < d`, with the logarithmic branch at
/// `e = -1`. Closed-form antiderivative; `c = 0` requires `e > -1`.
pub fn power_integral(e: f64, c: f64, d: f64) -> f64 {
    debug_assert!(c >= 0.0 && d > c);
    if (e + 1.0).abs() < 1e-14 {
        // treat as exactly the log case
        return (d / c).ln();
    }
    let p = e + 1.0;
    (d.powf(p) - c.powf(p)) / p
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gk_polynomial_is_exact() {
        let v = adaptive(&|x: f64| 3.0 * x * x, 0.0, 2.0, 1e-13);
        assert!((v - 8.0).abs() < 1e-12, "got {v}");
    }

    #[test]
    fn gk_smooth_matches_closed_form() {
        let v = adaptive(&|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-13);
        assert!((v - 2.0).abs() < 1e-12, "got {v}");
    }

    #[test]
    fn gk_integrable_endpoint_singularity() {
        // ∫_0^1 y^{-1/2} dy = 2
        let v = adaptive(&|x: f64| x.powf(-0.5), 1e-300, 1.0, 1e-12);
        assert!((v - 2.0).abs() < 1e-8, "got {v}");
    }

    #[test]
    fn power_integral_log_branch() {
        let v = power_integral(-1.0, 0.5, 1.0);
        assert!((v - std::f64::consts::LN_2).abs() < 1e-14);
    }

    #[test]
    fn gauss_orders_integrate_their_degree() {
        for n in [2usize, 3, 4, 5, 8] {
            let (x, w) = gauss_legendre(n);
            // exactness up to degree 2n-1 on [-1,1]
            let deg = 2 * n - 1;
            let num: f64 = x.iter().zip(w).map(|(&xi, &wi)| wi * xi.powi(deg as i32 - 1)).sum();
            let exact = 2.0 / (deg as f64); // ∫ x^{deg-1}, deg-1 even
            assert!((num - exact).abs() < 1e-13, "n={n} got {num} want {exact}");
        }
    }
}
