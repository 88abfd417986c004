//! Quadrature rules: Gauss–Legendre, probabilists' Gauss–Hermite (both by the
//! Golub–Welsch eigenvalue construction) and adaptive Gauss–Kronrod for
//! vector-valued integrands.

use nalgebra::DMatrix;

/// Nodes and weights of an `n`-point Gauss rule for a Jacobi matrix with
/// zero diagonal and off-diagonal `beta(k)`, `k = 1..n`, and total mass `mu0`.
fn golub_welsch(n: usize, beta: impl Fn(usize) -> f64, mu0: f64) -> (Vec<f64>, Vec<f64>) {
    let mut j = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = beta(k);
        j[(k - 1, k)] = b;
        j[(k, k - 1)] = b;
    }
    let eig = j.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    golub_welsch(n, |k| {
        let k = k as f64;
        k / (4.0 * k * k - 1.0).sqrt()
    }, 2.0)
}

/// Gauss–Hermite rule for the standard normal density: `Σ w_i f(x_i) ≈ E f(ξ)`,
/// `ξ ~ N(0, 1)`. Weights sum to one; exact for polynomials of degree `< 2n`.
pub fn gauss_hermite_normal(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    golub_welsch(n, |k| (k as f64).sqrt(), 1.0)
}

/// Composite Gauss–Legendre over `panels` equal panels.
pub fn composite_gl(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize, order: usize) -> f64 {
    let (x, w) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut acc = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let mid = lo + 0.5 * h;
        for (xi, wi) in x.iter().zip(&w) {
            acc += wi * f(mid + 0.5 * h * xi);
        }
    }
    acc * 0.5 * h
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15<F: Fn(f64) -> Vec<f64>>(f: &F, a: f64, b: f64) -> (Vec<f64>, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let dim = fc.len();
    let mut kron: Vec<f64> = fc.iter().map(|v| v * WGK[7]).collect();
    let mut gauss: Vec<f64> = fc.iter().map(|v| v * WG[3]).collect();
    for j in 0..7 {
        let dx = h * XGK[j];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        for k in 0..dim {
            let s = f1[k] + f2[k];
            kron[k] += WGK[j] * s;
            if j % 2 == 1 {
                gauss[k] += WG[j / 2] * s;
            }
        }
    }
    let mut err = 0.0_f64;
    for k in 0..dim {
        kron[k] *= h;
        gauss[k] *= h;
        err = err.max((kron[k] - gauss[k]).abs());
    }
    (kron, err)
}

/// Adaptive Gauss–Kronrod (7/15) for vector-valued integrands. The error
/// estimate is the max-norm Gauss/Kronrod gap; intervals are bisected until
/// the summed estimate drops below `max(abs_tol, rel_tol * |I|)`.
pub fn adaptive_vec<F: Fn(f64) -> Vec<f64>>(
    f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_intervals: usize,
) -> (Vec<f64>, f64) {
    if a == b {
        let dim = f(a).len();
        return (vec![0.0; dim], 0.0);
    }
    let (v0, e0) = gk15(&f, a, b);
    let mut intervals = vec![(a, b, v0, e0)];
    loop {
        let dim = intervals[0].2.len();
        let mut total = vec![0.0; dim];
        let mut err = 0.0;
        for (_, _, v, e) in &intervals {
            for k in 0..dim {
                total[k] += v[k];
            }
            err += e;
        }
        let scale = total.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        if err <= abs_tol.max(rel_tol * scale) || intervals.len() >= max_intervals {
            return (total, err);
        }
        let (idx, _) = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (lo, hi, _, _) = intervals.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        let (vl, el) = gk15(&f, lo, mid);
        let (vr, er) = gk15(&f, mid, hi);
        intervals.push((lo, mid, vl, el));
        intervals.push((mid, hi, vr, er));
    }
}

/// Scalar convenience wrapper over [`adaptive_vec`].
pub fn adaptive(f: impl Fn(f64) -> f64, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> f64 {
    adaptive_vec(|x| vec![f(x)], a, b, abs_tol, rel_tol, 4096).0[0]
}
