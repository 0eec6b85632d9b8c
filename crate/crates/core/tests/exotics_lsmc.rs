use vgpp_core::distributions::RngStream;
use vgpp_core::ept::{vg_ept_call, CGMParams};
use vgpp_core::exotics::*;
use vgpp_core::pricing::{price_call_closed, MarketModel};
use vgpp_core::vgpp::VGPPParams;

fn fitted() -> VGPPParams {
    let (a, alpha) = (0.54, 650.71);
    VGPPParams::new(0.39, 0.20, a, alpha, (1.0 - a) * alpha).unwrap()
}

fn cfg(direction: Direction) -> LSMCConfig {
    LSMCConfig {
        n_paths: 20_000,
        n_steps: 8,
        basis_degree: 3,
        direction,
    }
}

#[test]
fn american_put_bounds() {
    for f0 in [45.0, 56.0, 65.0] {
        let m = MarketModel::new(f0, 0.015).unwrap();
        let p = price_american_put_lsmc(&fitted(), &m, 56.0, 0.26, &cfg(Direction::Backward), &RngStream::new(1, 0)).unwrap();
        assert!(p.price >= (56.0 - f0).max(0.0), "F0={f0}: {p:?}");
        assert!(p.price >= p.european - 2.0 * p.european_stderr, "F0={f0}: {p:?}");
    }
}

#[test]
fn deep_in_the_money_exercises_now() {
    let m = MarketModel::new(30.0, 0.015).unwrap();
    let p = price_american_put_lsmc(&fitted(), &m, 56.0, 0.26, &cfg(Direction::Forward), &RngStream::new(2, 0)).unwrap();
    assert!(p.exercise_now);
    assert_eq!(p.price, 26.0);
}

#[test]
fn directions_agree() {
    let m = MarketModel::new(55.0, 0.015).unwrap();
    let f = price_american_put_lsmc(&fitted(), &m, 56.0, 0.26, &cfg(Direction::Forward), &RngStream::new(3, 0)).unwrap();
    let b = price_american_put_lsmc(&fitted(), &m, 56.0, 0.26, &cfg(Direction::Backward), &RngStream::new(4, 0)).unwrap();
    let se = (f.stderr * f.stderr + b.stderr * b.stderr).sqrt();
    assert!((f.price - b.price).abs() < 2.0 * se, "{f:?} vs {b:?}");
}

#[test]
fn short_maturity_tends_to_intrinsic() {
    let m = MarketModel::new(50.0, 0.015).unwrap();
    let p = price_american_put_lsmc(&fitted(), &m, 56.0, 1e-4, &cfg(Direction::Backward), &RngStream::new(5, 0)).unwrap();
    assert!((p.price - 6.0).abs() < 0.05, "{p:?}");
}

#[test]
fn config_is_checked() {
    let m = MarketModel::new(50.0, 0.015).unwrap();
    let bad = LSMCConfig { n_steps: 1, ..cfg(Direction::Forward) };
    assert!(price_american_put_lsmc(&fitted(), &m, 56.0, 0.26, &bad, &RngStream::new(6, 0)).is_err());
}

#[test]
fn lookback_increases_with_monitoring() {
    let p = VGPPParams::new(-0.1436, 0.2, 0.5, 10.0, 5.0).unwrap();
    let m = MarketModel::new(100.0, 0.01).unwrap();
    let ladder = price_lookback_ladder(&p, &m, 100.0, 1.0, &[1, 4, 12, 48], 50_000, &RngStream::new(7, 0)).unwrap();
    assert!(ladder.windows(2).all(|w| w[1].price >= w[0].price), "{ladder:?}");
    assert!(price_lookback_ladder(&p, &m, 100.0, 1.0, &[5, 12], 1000, &RngStream::new(7, 0)).is_err());
}

#[test]
fn single_date_lookback_is_european() {
    let p = VGPPParams::new(-0.1436, 0.2, 0.5, 10.0, 5.0).unwrap();
    let m = MarketModel::new(100.0, 0.01).unwrap();
    let mc = price_lookback_call_max(&p, &m, 100.0, 1.0, 1, 400_000, &RngStream::new(8, 0)).unwrap();
    let closed = price_call_closed(&p, &m, 100.0, 1.0, 1e-8).unwrap();
    assert!((mc.price - closed).abs() < 3.0 * mc.stderr, "{mc:?} vs {closed}");
}

#[test]
fn vg_simulation_matches_integer_shape_formula() {
    let vg = VGParams::new(-0.14, 0.2, 2.0, 2.0).unwrap();
    let (g, mm) = vg.cgm_rates();
    let m = MarketModel::new(100.0, 0.01).unwrap();
    let omega = vg.omega().unwrap();
    for k in [90.0, 100.0, 110.0] {
        let exact = vg_ept_call(&CGMParams::new(2, g, mm).unwrap(), 100.0, k, 0.01, 1.0, omega).unwrap();
        let mc = price_european_vg_mc(&vg, &m, k, 1.0, 400_000, &RngStream::new(9, 0)).unwrap();
        assert!((mc.price - exact).abs() < 3.0 * mc.stderr, "K={k}: {mc:?} vs {exact}");
    }
}

#[test]
fn vg_has_no_zero_increments() {
    let vg = vg_matched_to(&fitted());
    let mut r = RngStream::new(10, 0);
    assert!((0..100_000).all(|_| vg.sample(1.0 / 252.0, &mut r) != 0.0));
}
