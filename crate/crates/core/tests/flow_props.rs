use aniso_core::baselines::{run_baseline, BaselineKind};
use aniso_core::init::{add_noise, init_h0, rescale, unrescale, NoiseSpec};
use aniso_core::integrator::run;
use aniso_core::mollifier::{convolve, grad_sigma, Kernel};
use aniso_core::{FilterParams, GridSpec, ImageField, ResponseParams, TraceRecord};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_image(grid: &GridSpec, seed: u64) -> ImageField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ImageField::from_fn(grid, |_, _| rng.random_range(-1.0..1.0))
}

fn small_grid() -> impl Strategy<Value = GridSpec> {
    (prop::sample::select(vec![1usize, 3]), 1usize..=2)
        .prop_flat_map(|(k, d)| (Just(k), prop::collection::vec(6usize..=10, d)))
        .prop_map(|(k, dims)| GridSpec::new(&dims, k).unwrap())
}

fn grad_norm(u: &ImageField, sigma: f64, grid: &GridSpec) -> f64 {
    let g = grad_sigma(u, &Kernel::gaussian(sigma).unwrap(), grid).unwrap();
    g.values().iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn assert_conservative(u0: &ImageField, trace: &[TraceRecord], grid: &GridSpec) {
    let mass0: Vec<f64> = (0..grid.channels()).map(|c| u0.channel_sum(c)).collect();
    for r in trace {
        for (m, m0) in r.mass_per_channel.iter().zip(&mass0) {
            assert!((m - m0).abs() <= 1e-8 * (1.0 + m0.abs()), "mass {m} vs {m0} at t={}", r.t);
        }
    }
    for w in trace.windows(2) {
        assert!(
            w[1].l2_norm_u <= w[0].l2_norm_u * (1.0 + 1e-9),
            "L2 grew from {} to {} at t={}",
            w[0].l2_norm_u,
            w[1].l2_norm_u,
            w[1].t
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn convolution_is_linear(
        g in small_grid(),
        (sa, sb) in (any::<u64>(), any::<u64>()),
        (a, b) in (-2.0..2.0f64, -2.0..2.0f64),
        sigma in 0.3..3.0f64,
    ) {
        let (u, v) = (random_image(&g, sa), random_image(&g, sb));
        let kern = Kernel::gaussian(sigma).unwrap();
        let lhs = convolve(&u.lin_comb(a, &v, b).unwrap(), &kern).unwrap();
        let rhs = convolve(&u, &kern).unwrap().lin_comb(a, &convolve(&v, &kern).unwrap(), b).unwrap();
        for (x, y) in lhs.values().iter().zip(rhs.values()) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn convolution_is_a_local_average(g in small_grid(), seed in any::<u64>(), sigma in 0.3..3.0f64, bump in any::<bool>()) {
        let u = random_image(&g, seed);
        let kern = if bump { Kernel::compact_bump(sigma) } else { Kernel::gaussian(sigma) }.unwrap();
        let out = convolve(&u, &kern).unwrap();
        let (lo, hi) = u.values().iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
        prop_assert!(out.values().iter().all(|&v| v >= lo - 1e-12 && v <= hi + 1e-12));
        let c = convolve(&ImageField::constant(&g, 0.7), &kern).unwrap();
        prop_assert!(c.values().iter().all(|&v| (v - 0.7).abs() <= 1e-14));
    }

    #[test]
    fn smoothed_gradient_is_bounded(g in small_grid(), seed in any::<u64>(), sigma in 0.3..3.0f64) {
        let u = random_image(&g, seed);
        let sup = u.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let grad = grad_sigma(&u, &Kernel::gaussian(sigma).unwrap(), &g).unwrap();
        // each entry is a difference of two averages of u over unit spacing
        prop_assert!(grad.values().iter().all(|v| v.abs() <= 2.0 * sup + 1e-12));
    }

    #[test]
    fn initial_diffusivity_has_floor_alpha(g in small_grid(), seed in any::<u64>(), alpha in 0.01..1.0f64) {
        let u = random_image(&g, seed);
        let h = init_h0(&u, &g, 3, alpha).unwrap();
        prop_assert!(h.check_symmetric().is_ok());
        let (lo, _) = h.min_eigenvalue();
        prop_assert!(lo >= alpha - 1e-10, "min eigenvalue {lo} below {alpha}");
    }

    #[test]
    fn noise_scales_with_std(g in small_grid(), seed in any::<u64>(), std in 0.01..0.5f64) {
        let u = random_image(&g, 1);
        let once = add_noise(&u, &NoiseSpec::gaussian(std, seed)).unwrap();
        let twice = add_noise(&u, &NoiseSpec::gaussian(2.0 * std, seed)).unwrap();
        for ((a, b), v) in once.values().iter().zip(twice.values()).zip(u.values()) {
            prop_assert!(((b - v) - 2.0 * (a - v)).abs() <= 1e-12);
        }
    }

    #[test]
    fn rescale_round_trips(g in small_grid(), seed in any::<u64>(), lo in -5.0..0.0f64, width in 0.1..10.0f64) {
        let u = random_image(&g, seed).lin_comb(0.5 * width, &ImageField::constant(&g, 1.0), lo + 0.5 * width).unwrap();
        let back = unrescale(&rescale(&u, lo, lo + width).unwrap(), lo, lo + width).unwrap();
        for (a, b) in u.values().iter().zip(back.values()) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn relaxed_flow_conserves_mass_and_dissipates(
        g in small_grid(),
        seed in any::<u64>(),
        tau in 0.1..2.0f64,
        s in 0.05..1.0f64,
    ) {
        let u0 = random_image(&g, seed);
        let p = FilterParams {
            tau,
            t_end: 1.0,
            response: ResponseParams::thresholded(s, 0.05),
            ..FilterParams::default()
        };
        let h0 = init_h0(&u0, &g, 3, p.alpha).unwrap();
        let (_, trace) = run(&u0, &h0, &p, &g).unwrap();
        assert_conservative(&u0, &trace, &g);
    }

    #[test]
    fn baselines_conserve_mass_and_dissipate(g in small_grid(), seed in any::<u64>(), pm in any::<bool>()) {
        let u0 = random_image(&g, seed);
        let p = FilterParams { t_end: 1.0, ..FilterParams::default() };
        let kind = if pm { BaselineKind::PeronaMalik { lambda: 0.2 } } else { BaselineKind::CatteRegularized };
        let (_, trace) = run_baseline(&u0, &p, kind, &g).unwrap();
        assert_conservative(&u0, &trace, &g);
    }
}

/// Larger bandwidths damp the smoothed gradient of a noise field. Not a
/// theorem on a bounded grid, so a few violations are tolerated.
#[test]
fn smoothing_damps_gradients_in_sigma() {
    let g = GridSpec::new(&[24, 24], 3).unwrap();
    let sigmas = [0.5, 1.0, 2.0, 4.0];
    let (mut pairs, mut violations) = (0, 0);
    for seed in 0..24 {
        let u = random_image(&g, seed);
        let norms: Vec<f64> = sigmas.iter().map(|&s| grad_norm(&u, s, &g)).collect();
        for w in norms.windows(2) {
            pairs += 1;
            if w[1] > w[0] {
                violations += 1;
            }
        }
    }
    assert!(violations * 20 <= pairs, "{violations} of {pairs} pairs grew");
}
