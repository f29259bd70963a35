use geocorr_core::fitting::{hough_fit, identify_model, refine_flow, DEFAULT_CELLS};
use geocorr_core::models::{flow_field, DistortionParams, DistortionType, ParamRange};
use geocorr_core::{epe, FlowField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Replaces `fraction` of the vectors with uniform noise in [-20, 20] px.
fn corrupt(flow: &FlowField, fraction: f64, seed: u64) -> FlowField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vectors = flow
        .vectors()
        .iter()
        .map(|v| {
            if rng.gen_bool(fraction) {
                [rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0)]
            } else {
                *v
            }
        })
        .collect();
    FlowField::new(flow.width(), flow.height(), vectors).unwrap()
}

fn cell_width(ranges: &ParamRange, kind: DistortionType, dim: usize) -> f64 {
    let b = ranges.voting_bounds(kind)[dim];
    (b.1 - b.0) / DEFAULT_CELLS as f64
}

#[test]
fn noisy_barrel_fit_stays_within_one_cell() {
    let ranges = ParamRange::default();
    let truth = DistortionParams::barrel(-0.2).unwrap();
    let clean = flow_field(&truth, 256, 256);
    let noisy = corrupt(&clean, 0.1, 7);
    let fit = hough_fit(&noisy, DistortionType::Barrel, &ranges, DEFAULT_CELLS).unwrap();
    assert!((fit.params.rho()[0] + 0.2).abs() <= cell_width(&ranges, DistortionType::Barrel, 0));
    let regenerated = refine_flow(&fit, 256, 256);
    assert!(fit.refit_epe > epe(&regenerated, &clean).unwrap());
    let exact = hough_fit(&clean, DistortionType::Barrel, &ranges, DEFAULT_CELLS).unwrap();
    assert!(epe(&refine_flow(&exact, 256, 256), &clean).unwrap() < 1e-5);
    // Refinement from the noisy fit beats the noisy input.
    assert!(epe(&regenerated, &clean).unwrap() < epe(&noisy, &clean).unwrap());
}

#[test]
fn exact_fit_refines_to_ground_truth() {
    for params in [
        DistortionParams::rotation(-12.5).unwrap(),
        DistortionParams::shear(0.31).unwrap(),
        DistortionParams::pincushion(0.17).unwrap(),
    ] {
        let flow = flow_field(&params, 128, 96);
        let fit = hough_fit(&flow, params.kind(), &ParamRange::default(), DEFAULT_CELLS).unwrap();
        assert!(
            epe(&refine_flow(&fit, 128, 96), &flow).unwrap() < 1e-4,
            "{params:?}"
        );
    }
}

#[test]
fn pincushion_with_outliers_is_identified() {
    let clean = flow_field(&DistortionParams::pincushion(0.25).unwrap(), 128, 128);
    let noisy = corrupt(&clean, 0.05, 11);
    let ranked = identify_model(&noisy, &ParamRange::default()).unwrap();
    assert_eq!(ranked[0].kind(), DistortionType::Pincushion);
    assert!(ranked.windows(2).all(|w| w[0].refit_epe <= w[1].refit_epe));
}

#[test]
fn fit_is_consistent_across_resolutions() {
    let ranges = ParamRange::default();
    let draws = [
        DistortionParams::barrel(-0.27).unwrap(),
        DistortionParams::pincushion(0.12).unwrap(),
        DistortionParams::rotation(21.0).unwrap(),
        DistortionParams::shear(-0.18).unwrap(),
        DistortionParams::perspective(0.2, -0.1).unwrap(),
    ];
    for params in draws {
        let small = hough_fit(
            &flow_field(&params, 64, 64),
            params.kind(),
            &ranges,
            DEFAULT_CELLS,
        )
        .unwrap();
        let large = hough_fit(
            &flow_field(&params, 256, 256),
            params.kind(),
            &ranges,
            DEFAULT_CELLS,
        )
        .unwrap();
        for dim in 0..params.kind().param_count() {
            let diff = (small.params.rho()[dim] - large.params.rho()[dim]).abs();
            assert!(
                diff <= cell_width(&ranges, params.kind(), dim),
                "{params:?}: {diff}"
            );
        }
    }
}

#[test]
fn refinement_never_worse_than_corrupted_input() {
    let ranges = ParamRange::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for trial in 0..12 {
        let kind = DistortionType::ALL[trial % 6];
        let params = geocorr_core::models::sample_params_with(kind, &ranges, &mut rng);
        let clean = flow_field(&params, 96, 96);
        let noisy = corrupt(&clean, 0.2, trial as u64);
        let fit = hough_fit(&noisy, kind, &ranges, DEFAULT_CELLS).unwrap();
        let refined = refine_flow(&fit, 96, 96);
        assert!(
            epe(&refined, &clean).unwrap() <= epe(&noisy, &clean).unwrap(),
            "{params:?}"
        );
    }
}
