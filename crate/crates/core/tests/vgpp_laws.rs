mod common;

use common::{empirical_chf, integrate};
use num_complex::Complex64;
use proptest::prelude::*;
use vgpp_core::distributions::{polya_sample, RngStream};
use vgpp_core::gammapp::{gpp_chf, gpp_cumulant};
use vgpp_core::mc::sample_vec;
use vgpp_core::path::uniform_grid;
use vgpp_core::stats::{binomial_ci, ks_two_sample, mean_stderr};
use vgpp_core::vgpp::*;

fn table3() -> VGPPParams {
    VGPPParams::new(1.025, 0.2, 0.7, 5.0, 15.0).unwrap()
}

fn table4() -> VGPPParams {
    VGPPParams::new(-0.1436, 0.2, 0.5, 10.0, 5.0).unwrap()
}

fn vg_chf(theta: f64, sigma: f64, alpha: f64, beta: f64, t: f64, u: f64) -> Complex64 {
    let w = Complex64::new(theta * u, u * u * sigma * sigma / 2.0);
    (alpha * t * (beta / (beta - Complex64::i() * w)).ln()).exp()
}

#[test]
fn small_a_recovers_variance_gamma() {
    for (a, tol) in [(1e-8, 1e-6), (1e-12, 1e-9)] {
        let p = VGPPParams::new(-0.1436, 0.2, a, 10.0, 5.0).unwrap();
        for i in -20..=20 {
            let u = i as f64;
            let d = (vgpp_chf(&p, 1.0, u) - vg_chf(-0.1436, 0.2, 10.0, 5.0, 1.0, u)).norm();
            assert!(d < tol, "a={a} u={u}: {d}");
        }
    }
}

#[test]
fn chf_matches_simulation() {
    let p = table4();
    let xs = sample_vec(1_000_000, &RngStream::new(61, 0), |r| vgpp_sample(&p, 1.0, r));
    for u in [-2.0, 0.5, 2.0, 6.0] {
        let c = vgpp_chf(&p, 1.0, u);
        let ((re, im), (se_re, se_im)) = empirical_chf(&xs, u);
        assert!((re - c.re).abs() < 3.0 * se_re, "u={u}");
        assert!((im - c.im).abs() < 3.0 * se_im, "u={u}");
    }
}

#[test]
fn decomposition_constraints_and_factorization() {
    for p in [table3(), table4(), VGPPParams::new(0.39, 0.2, 0.54, 650.71, 650.71).unwrap()] {
        let d = vgpp_decompose(&p);
        let s2 = p.sigma() * p.sigma();
        assert!((d.beta_p * d.beta_n - 2.0 * p.beta() / s2).abs() < 1e-10 * d.beta_p * d.beta_n);
        assert!((1.0 / d.beta_n - 1.0 / d.beta_p + p.theta() / p.beta()).abs() < 1e-12);
        let tb = p.beta() / p.a();
        assert!((d.tbeta_p * d.tbeta_n - 2.0 * tb / s2).abs() < 1e-10 * d.tbeta_p * d.tbeta_n);
        assert!(d.tbeta_p > d.beta_p && d.tbeta_n > d.beta_n);
        assert!(d.a_p > 0.0 && d.a_p < 1.0 && d.a_n > 0.0 && d.a_n < 1.0);
        let (zp, zn) = (d.positive_side(p.alpha()), d.negative_side(p.alpha()));
        for i in -30..=30 {
            let u = i as f64 * 0.7;
            let lhs = vgpp_chf(&p, 1.0, u);
            let rhs = gpp_chf(&zp, 1.0, u) * gpp_chf(&zn, 1.0, -u);
            assert!((lhs - rhs).norm() < 1e-12, "u={u}");
        }
    }
}

#[test]
fn levy_mass_matches_jump_intensity() {
    let p = table3();
    let nu = |x: f64| vgpp_levy_density(&p, x).unwrap();
    let mass = integrate(nu, -5.0, -1e-300, 1e-12) + integrate(nu, 1e-300, 5.0, 1e-12);
    assert!((mass - 5.0 * (1.0 / 0.7f64).ln()).abs() < 1e-8, "{mass}");
}

#[test]
fn cumulants_match_subordination_route() {
    for p in [table3(), table4()] {
        let z = p.subordinator();
        let k: Vec<f64> = (1..=4).map(|n| gpp_cumulant(&z, 1.0, n).unwrap()).collect();
        let (th, s2) = (p.theta(), p.sigma() * p.sigma());
        let alt = [
            th * k[0],
            s2 * k[0] + th * th * k[1],
            th.powi(3) * k[2] + 3.0 * th * s2 * k[1],
            th.powi(4) * k[3] + 6.0 * th * th * s2 * k[2] + 3.0 * s2 * s2 * k[1],
        ];
        for n in 1..=4u32 {
            let c = vgpp_cumulant(&p, 1.0, n).unwrap();
            let e = alt[n as usize - 1];
            assert!((c - e).abs() < 1e-10 * e.abs(), "n={n}: {c} vs {e}");
        }
    }
}

#[test]
fn atom_at_zero_by_simulation() {
    let p = table4();
    let n = 10_000_000;
    let atom = prob_zero_increment(&p, 1.0);
    assert!((atom - 0.5f64.powi(10)).abs() < 1e-15);
    let zeros: usize = vgpp_core::mc::run_chunks(n, &RngStream::new(62, 0), |len, r| {
        (0..len).filter(|_| vgpp_sample(&p, 1.0, r) == 0.0).count()
    })
    .into_iter()
    .sum();
    let frac = zeros as f64 / n as f64;
    let (lo, hi) = binomial_ci(atom, n as u64, 0.99);
    assert!(frac > lo && frac < hi, "{frac} vs {atom}");
}

#[test]
fn density_has_unit_mass_and_symmetry() {
    let p = table3();
    let d = |x: f64| vgpp_density(&p, 1.0, x).continuous;
    let atom = vgpp_density(&p, 1.0, 0.0).atom_weight;
    let mass = integrate(d, -2.0, 0.0, 1e-11) + integrate(d, 0.0, 4.0, 1e-11);
    assert!((atom + mass - 1.0).abs() < 1e-7, "{}", atom + mass);
    let sym = VGPPParams::new(0.0, 0.3, 0.6, 4.0, 8.0).unwrap();
    for x in [0.01, 0.1, 0.4, 1.0] {
        let (l, r) = (vgpp_density(&sym, 0.5, -x).continuous, vgpp_density(&sym, 0.5, x).continuous);
        assert!((l - r).abs() < 1e-12 * l.max(1e-300), "x={x}");
    }
}

#[test]
fn compound_sampler_matches_subordination() {
    let p = table3();
    let a = sample_vec(200_000, &RngStream::new(63, 0), |r| vgpp_sample(&p, 1.0, r));
    let b = sample_vec(200_000, &RngStream::new(64, 0), |r| vgpp_sample_compound(&p, 1.0, r));
    let nonzero = |v: &[f64]| v.iter().copied().filter(|&x| x != 0.0).collect::<Vec<_>>();
    let res = ks_two_sample(&nonzero(&a), &nonzero(&b));
    assert!(res.p_value > 0.01, "{res:?}");
    let (m, se) = mean_stderr(&b);
    assert!((m - vgpp_cumulant(&p, 1.0, 1).unwrap()).abs() < 3.0 * se);
}

#[test]
fn backward_paths_match_forward_in_law() {
    let p = table4();
    let grid = uniform_grid(1.0, 4);
    let n = 50_000;
    let mut rf = RngStream::new(65, 0);
    let mut rb = RngStream::new(66, 0);
    let fwd: Vec<Vec<f64>> = (0..n)
        .map(|_| vgpp_path_forward(&p, &grid, &mut rf).unwrap().x.unwrap())
        .collect();
    let bwd: Vec<Vec<f64>> = (0..n)
        .map(|_| vgpp_path_backward(&p, &grid, &mut rb).unwrap().x.unwrap())
        .collect();
    for i in 1..=4 {
        let a: Vec<f64> = fwd.iter().map(|x| x[i]).collect();
        let b: Vec<f64> = bwd.iter().map(|x| x[i]).collect();
        let res = ks_two_sample(&a, &b);
        assert!(res.p_value > 0.01, "index {i}: {res:?}");
    }
    // Increments between interior points, which the bridge must also get right.
    let a: Vec<f64> = fwd.iter().map(|x| x[2] - x[1]).collect();
    let b: Vec<f64> = bwd.iter().map(|x| x[2] - x[1]).collect();
    assert!(ks_two_sample(&a, &b).p_value > 0.01);
}

#[test]
fn backward_slices_match_direct_marginals() {
    let p = table4();
    let mut r = RngStream::new(67, 0);
    let end = BackwardSlice::terminal(&p, 1.0, 100_000, &mut r).unwrap();
    let mid = end.step_back(&p, 0.5, &mut r).unwrap();
    let direct = sample_vec(100_000, &RngStream::new(68, 0), |r| vgpp_sample(&p, 0.5, r));
    assert!(ks_two_sample(&mid.x, &direct).p_value > 0.01);
    let origin = mid.step_back(&p, 0.0, &mut r).unwrap();
    assert!(origin.x.iter().all(|&x| x == 0.0));
    assert!(mid.step_back(&p, 0.7, &mut r).is_err());
}

#[test]
fn printed_zero_probabilities() {
    // Printed to two decimals.
    let t5 = VGPPParams::new(0.18, 0.16, 0.46, 1255.7, 1255.7).unwrap();
    assert!((prob_zero_increment(&t5, 1.0 / 252.0) - 0.02).abs() < 5e-3);
    let t6 = VGPPParams::new(0.02, 0.24, 0.27, 872.83, 872.83).unwrap();
    assert!((prob_zero_increment(&t6, 1.0 / 252.0) - 0.01).abs() < 1e-2);
    let t7_nlls = VGPPParams::new(0.83, 0.13, 0.49, 616.35, 616.35).unwrap();
    assert!((prob_zero_increment(&t7_nlls, 1.0 / 252.0) - 0.18).abs() < 1e-2);
}

#[test]
fn zero_fraction_across_step_sizes() {
    let p = VGPPParams::new(0.39, 0.2, 0.54, 650.71, 650.71).unwrap();
    let n = 1_000_000;
    for (i, dt) in [1.0 / 252.0, 1.0 / 52.0, 1.0 / 12.0].into_iter().enumerate() {
        let atom = prob_zero_increment(&p, dt);
        let xs = sample_vec(n, &RngStream::new(69, i as u64), |r| vgpp_sample(&p, dt, r));
        let frac = xs.iter().filter(|&&x| x == 0.0).count() as f64 / n as f64;
        let (lo, hi) = binomial_ci(atom, n as u64, 0.99);
        assert!(frac > lo && frac < hi, "dt={dt}: {frac} vs {atom}");
    }
}

#[test]
fn a_near_one_kills_the_process() {
    let p = VGPPParams::new(0.3, 0.2, 1.0 - 1e-9, 5.0, 5.0).unwrap();
    for n in 1..=4 {
        assert!(vgpp_cumulant(&p, 1.0, n).unwrap().abs() < 1e-8);
    }
    assert!(prob_zero_increment(&p, 1.0) > 1.0 - 1e-7);
}

#[test]
fn polya_counter_mean() {
    let p = table3();
    let counter = p.subordinator().counter(1.0);
    let xs = sample_vec(500_000, &RngStream::new(70, 0), |r| polya_sample(counter, r) as f64);
    let (m, se) = mean_stderr(&xs);
    let expect = 5.0 * 0.3 / 0.7;
    assert!((counter.mean() - expect).abs() < 1e-12);
    assert!((m - expect).abs() < 3.0 * se);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn chf_is_bounded_and_hermitian(theta in -1.0f64..1.0, sigma in 0.05f64..1.0, a in 0.01f64..0.99,
                                    alpha in 0.1f64..50.0, beta in 0.1f64..50.0, u in -50.0f64..50.0) {
        let p = VGPPParams::new(theta, sigma, a, alpha, beta).unwrap();
        let c = vgpp_chf(&p, 1.0, u);
        prop_assert!(c.norm() <= 1.0 + 1e-12);
        prop_assert!((c.conj() - vgpp_chf(&p, 1.0, -u)).norm() < 1e-12);
    }

    #[test]
    fn decomposition_factorizes_chf(theta in -1.0f64..1.0, sigma in 0.05f64..1.0, a in 0.01f64..0.99,
                                    alpha in 0.1f64..50.0, beta in 0.1f64..50.0, u in -20.0f64..20.0) {
        let p = VGPPParams::new(theta, sigma, a, alpha, beta).unwrap();
        let d = vgpp_decompose(&p);
        let rhs = gpp_chf(&d.positive_side(alpha), 1.0, u) * gpp_chf(&d.negative_side(alpha), 1.0, -u);
        prop_assert!((vgpp_chf(&p, 1.0, u) - rhs).norm() < 1e-10);
    }

    #[test]
    fn levy_density_nonnegative(theta in -1.0f64..1.0, sigma in 0.05f64..1.0, a in 0.01f64..0.99, x in -10.0f64..10.0) {
        prop_assume!(x != 0.0);
        let p = VGPPParams::new(theta, sigma, a, 3.0, 4.0).unwrap();
        prop_assert!(vgpp_levy_density(&p, x).unwrap() >= 0.0);
    }

    #[test]
    fn even_cumulants_positive(theta in -1.0f64..1.0, sigma in 0.05f64..1.0, a in 0.01f64..0.99) {
        let p = VGPPParams::new(theta, sigma, a, 3.0, 4.0).unwrap();
        prop_assert!(vgpp_cumulant(&p, 1.0, 2).unwrap() > 0.0);
        prop_assert!(vgpp_cumulant(&p, 1.0, 4).unwrap() > 0.0);
    }
}
