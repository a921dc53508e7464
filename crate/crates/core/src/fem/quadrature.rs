//! One-dimensional Gauss rules and Lagrange interpolation on [-1, 1].

/// Legendre polynomial `P_n(x)` and its derivative.
pub fn legendre(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    let dp = if (1.0 - x * x).abs() < 1e-14 {
        // endpoint limit P'_n(±1) = ±n(n+1)/2
        let s = if x > 0.0 { 1.0 } else if n % 2 == 0 { -1.0 } else { 1.0 };
        s * nf * (nf + 1.0) / 2.0
    } else {
        nf * (p0 - x * p1) / (1.0 - x * x)
    };
    (p1, dp)
}

/// Gauss-Legendre rule with `n` points, exact for polynomials of degree
/// `2n - 1`. Points ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut pts = vec![0.0; n];
    let mut wts = vec![0.0; n];
    for i in 0..n {
        let mut x = -(std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        pts[i] = x;
        wts[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (pts, wts)
}

/// Gauss-Lobatto-Legendre nodes for degree `p` (`p + 1` points including
/// the endpoints) and their quadrature weights.
pub fn gauss_lobatto(p: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(p >= 1);
    let n = p + 1;
    let pf = p as f64;
    let mut x: Vec<f64> = (0..n)
        .map(|i| -(std::f64::consts::PI * i as f64 / pf).cos())
        .collect();
    for xi in x.iter_mut().take(n - 1).skip(1) {
        for _ in 0..100 {
            // Newton on (1 - x^2) P'_p(x) via the recurrence form
            let (pp, _) = legendre(p, *xi);
            let (pm, _) = legendre(p - 1, *xi);
            let dx = (*xi * pp - pm) / (n as f64 * pp);
            *xi -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
    }
    x[0] = -1.0;
    x[n - 1] = 1.0;
    let w = x
        .iter()
        .map(|&xi| {
            let (pp, _) = legendre(p, xi);
            2.0 / (pf * (pf + 1.0) * pp * pp)
        })
        .collect();
    (x, w)
}

/// Values and derivatives of the Lagrange polynomials on `nodes` at `x`.
pub fn lagrange(nodes: &[f64], x: f64) -> (Vec<f64>, Vec<f64>) {
    let n = nodes.len();
    let mut val = vec![0.0; n];
    let mut der = vec![0.0; n];
    for j in 0..n {
        let mut v = 1.0;
        for m in 0..n {
            if m != j {
                v *= (x - nodes[m]) / (nodes[j] - nodes[m]);
            }
        }
        val[j] = v;
        let mut d = 0.0;
        for k in 0..n {
            if k == j {
                continue;
            }
            let mut t = 1.0 / (nodes[j] - nodes[k]);
            for m in 0..n {
                if m != j && m != k {
                    t *= (x - nodes[m]) / (nodes[j] - nodes[m]);
                }
            }
            d += t;
        }
        der[j] = d;
    }
    (val, der)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gll_nodes_match_known_roots() {
        let (x, _) = gauss_lobatto(2);
        assert!((x[1]).abs() < 1e-15);
        let (x, w) = gauss_lobatto(3);
        let r = (1.0f64 / 5.0).sqrt();
        assert!((x[1] + r).abs() < 1e-14 && (x[2] - r).abs() < 1e-14);
        assert!((w[0] - 1.0 / 6.0).abs() < 1e-14 && (w[1] - 5.0 / 6.0).abs() < 1e-14);
        let (x, _) = gauss_lobatto(4);
        let r = (3.0f64 / 7.0).sqrt();
        assert!((x[1] + r).abs() < 1e-14 && x[2].abs() < 1e-14 && (x[3] - r).abs() < 1e-14);
    }

    #[test]
    fn gauss_legendre_is_exact_to_degree_2n_minus_1() {
        for n in 1..8 {
            let (x, w) = gauss_legendre(n);
            for deg in 0..2 * n {
                let approx: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((approx - exact).abs() <= 1e-13 * exact.abs().max(1.0), "n={n} deg={deg}");
            }
        }
    }

    #[test]
    fn lagrange_partition_of_unity_and_derivative() {
        let (nodes, _) = gauss_lobatto(4);
        for &x in &[-0.9, -0.3, 0.2, 0.77] {
            let (v, d) = lagrange(&nodes, x);
            assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-13);
            assert!(d.iter().sum::<f64>().abs() < 1e-12);
            // reproduces x^3
            let cubic: f64 = nodes.iter().zip(&v).map(|(n, l)| n.powi(3) * l).sum();
            let dcubic: f64 = nodes.iter().zip(&d).map(|(n, l)| n.powi(3) * l).sum();
            assert!((cubic - x.powi(3)).abs() < 1e-13);
            assert!((dcubic - 3.0 * x * x).abs() < 1e-12);
        }
    }
}
