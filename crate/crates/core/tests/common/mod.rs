#![allow(dead_code, clippy::excessive_precision)]

//! Independent numerical oracles shared by the integration tests.

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

/// One Gauss-Kronrod 15 panel: (kronrod estimate, |kronrod - gauss|).
fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

fn adapt(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let (whole, err) = gk15(f, a, b);
    if err <= tol || err <= 1e-14 * whole.abs() || depth == 0 {
        return whole;
    }
    let m = 0.5 * (a + b);
    adapt(f, a, m, tol / 2.0, depth - 1) + adapt(f, m, b, tol / 2.0, depth - 1)
}

/// Adaptive Gauss-Kronrod quadrature of `f` on `[a, b]` to absolute tolerance `tol`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    adapt(&f, a, b, tol, 30)
}

/// Modified Bessel function of the second kind, `int_0^inf e^{-x cosh t} cosh(nu t) dt`.
pub fn bessel_k(nu: f64, x: f64) -> f64 {
    // e^{-x cosh t} < 1e-300 well before x cosh t = 700
    let upper = (700.0 / x).max(1.0).acosh() + 1.0;
    let f = |t: f64| ((-x * t.cosh() + nu * t).exp() + (-x * t.cosh() - nu * t).exp()) * 0.5;
    let panels = 64;
    let h = upper / panels as f64;
    let rough: f64 = (0..panels)
        .map(|i| gk15(&f, i as f64 * h, (i + 1) as f64 * h).0)
        .sum();
    integrate(f, 0.0, upper, 1e-15 * rough)
}

/// VG density in its Bessel form with shape `c` and rates `g`, `m`.
pub fn vg_bessel_density(c: f64, g: f64, m: f64, x: f64) -> f64 {
    let ax = x.abs();
    let ln_pref = c * (g * m).ln() - 0.5 * std::f64::consts::PI.ln() - ln_gamma(c)
        + (g - m) * x / 2.0
        + (c - 0.5) * (ax / (g + m)).ln();
    ln_pref.exp() * bessel_k(c - 0.5, (g + m) * ax / 2.0)
}

pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

/// Sample cumulants 1..=4 from raw central moments.
pub fn sample_cumulants(data: &[f64]) -> [f64; 4] {
    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in data {
        let d = x - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    [mean, m2, m3, m4 - 3.0 * m2 * m2]
}

/// Standard error of each sample cumulant from `batches` contiguous batches.
pub fn cumulant_stderr(data: &[f64], batches: usize) -> [f64; 4] {
    let size = data.len() / batches;
    let per: Vec<[f64; 4]> = data.chunks_exact(size).map(sample_cumulants).collect();
    let mut out = [0.0; 4];
    for (k, o) in out.iter_mut().enumerate() {
        let vals: Vec<f64> = per.iter().map(|c| c[k]).collect();
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        let v = vals.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (vals.len() as f64 - 1.0);
        *o = (v / vals.len() as f64).sqrt();
    }
    out
}

/// Empirical chf at `u` and its componentwise standard errors.
pub fn empirical_chf(data: &[f64], u: f64) -> ((f64, f64), (f64, f64)) {
    let n = data.len() as f64;
    let (mut c, mut s, mut c2, mut s2) = (0.0, 0.0, 0.0, 0.0);
    for &x in data {
        let (sn, cs) = (u * x).sin_cos();
        c += cs;
        s += sn;
        c2 += cs * cs;
        s2 += sn * sn;
    }
    let (mc, ms) = (c / n, s / n);
    let se_c = ((c2 / n - mc * mc) / n).sqrt();
    let se_s = ((s2 / n - ms * ms) / n).sqrt();
    ((mc, ms), (se_c, se_s))
}
