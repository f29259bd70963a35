use geocorr_core::models::{flow_field, DistortionParams};
use geocorr_core::resample::{resample, solve_pixel, InitStrategy, ResampleOptions};
use geocorr_core::synth::distort_image;
use geocorr_core::{sample_flow_bilinear, FlowField, ImageBuffer, Point};

fn ramp(w: usize, h: usize) -> ImageBuffer {
    ImageBuffer::from_fn(w, h, 3, |x, y| {
        [x as f32 / w as f32, y as f32 / h as f32, 0.5, 1.0]
    })
    .unwrap()
}

fn textured(w: usize, h: usize) -> ImageBuffer {
    ImageBuffer::from_fn(w, h, 3, |x, y| {
        let (xf, yf) = (x as f32, y as f32);
        [
            0.5 + 0.45 * (xf * 0.05).sin() * (yf * 0.04).cos(),
            0.5 + 0.4 * ((xf + yf) * 0.03).sin(),
            (yf / h as f32),
            1.0,
        ]
    })
    .unwrap()
}

/// Positional errors of the valid output pixels, read back from a corrected ramp.
fn ramp_errors(corrected: &ImageBuffer) -> Vec<f64> {
    let (w, h) = corrected.dims();
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if corrected.is_valid(x, y) {
                let px = corrected.pixel(x, y);
                let p = Point::new(f64::from(px[0]) * w as f64, f64::from(px[1]) * h as f64);
                out.push(p.distance(Point::new(x as f64, y as f64)));
            }
        }
    }
    out
}

fn mid_range() -> [DistortionParams; 6] {
    [
        DistortionParams::barrel(-0.2).unwrap(),
        DistortionParams::pincushion(0.2).unwrap(),
        DistortionParams::rotation(15.0).unwrap(),
        DistortionParams::shear(0.2).unwrap(),
        DistortionParams::perspective(0.15, -0.15).unwrap(),
        DistortionParams::wave(5.0, 60.0).unwrap(),
    ]
}

#[test]
fn rotation_solution_matches_brute_force_preimage() {
    let (w, h) = (48, 40);
    let flow = flow_field(&DistortionParams::rotation(10.0).unwrap(), w, h);
    let opts = ResampleOptions::default();
    for (x, y) in [(24, 20), (10, 12), (35, 8), (30, 30), (5, 25)] {
        let s = solve_pixel(&flow, x, y, &opts);
        assert!(s.converged && s.residual < opts.tolerance);
        let q = Point::new(x as f64, y as f64);
        let mut best = (f64::INFINITY, Point::default());
        for j in 0..(4 * (h - 1) + 1) {
            for i in 0..(4 * (w - 1) + 1) {
                let p = Point::new(i as f64 / 4.0, j as f64 / 4.0);
                let f = sample_flow_bilinear(&flow, p).unwrap();
                let err = Point::new(p.x + f[0], p.y + f[1]).distance(q);
                if err < best.0 {
                    best = (err, p);
                }
            }
        }
        assert!(
            s.p.distance(best.1) < 0.25,
            "({x},{y}): {:?} vs {:?}",
            s.p,
            best.1
        );
    }
}

#[test]
fn corrected_ramp_is_within_a_fifth_of_a_pixel_after_five_iterations() {
    let src = ramp(192, 192);
    let opts = ResampleOptions::default().with_max_iterations(5);
    for params in mid_range() {
        let (distorted, flow) = distort_image(&src, &params).unwrap();
        let (corrected, _) = resample(&distorted, &flow, &opts).unwrap();
        let errors = ramp_errors(&corrected);
        let good = errors.iter().filter(|e| **e < 0.2).count() as f64 / errors.len() as f64;
        assert!(good >= 0.95, "{params:?}: {good}");
    }
}

#[test]
fn round_trip_mean_abs_difference_is_small() {
    let src = textured(160, 160);
    for params in mid_range() {
        let (distorted, flow) = distort_image(&src, &params).unwrap();
        let (corrected, _) = resample(&distorted, &flow, &ResampleOptions::default()).unwrap();
        let (mut sum, mut n) = (0.0f64, 0usize);
        for y in 0..160 {
            for x in 0..160 {
                if corrected.is_valid(x, y) {
                    for (a, b) in corrected.pixel(x, y).iter().zip(src.pixel(x, y)) {
                        sum += f64::from((a - b).abs());
                        n += 1;
                    }
                }
            }
        }
        assert!(
            n > 0 && sum / (n as f64) < 0.02,
            "{params:?}: {}",
            sum / n as f64
        );
    }
}

#[test]
fn derivative_init_needs_no_more_iterations_than_plain() {
    let levels: Vec<f64> = (1..=10).map(|i| -0.04 * i as f64).collect();
    let img = textured(128, 128);
    let mut gaps = Vec::new();
    for lambda in &levels {
        let flow = flow_field(&DistortionParams::barrel(*lambda).unwrap(), 128, 128);
        let mean = |init| {
            let opts = ResampleOptions {
                init,
                ..ResampleOptions::default()
            };
            resample(&img, &flow, &opts).unwrap().1.mean_iterations()
        };
        let (deriv, plain) = (mean(InitStrategy::Derivative), mean(InitStrategy::Plain));
        assert!(deriv <= plain, "lambda {lambda}: {deriv} > {plain}");
        gaps.push(plain - deriv);
    }
    assert!(*gaps.last().unwrap() > 0.0);
}

#[test]
fn zero_flow_solves_in_one_iteration() {
    let flow = FlowField::zeros(16, 12);
    let s = solve_pixel(&flow, 7, 5, &ResampleOptions::default());
    assert_eq!(
        (s.p, s.iterations, s.converged),
        (Point::new(7.0, 5.0), 1, true)
    );
}
