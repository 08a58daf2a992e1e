use hbpt_core::geometry::{Mask, Rect};
use hbpt_core::imageio::Frame;
use hbpt_core::maskops::{connected_components, Connectivity};
use hbpt_core::tracker::{detect_person, mean_shift, mspf_track, MspfParams, ParticleSet, WeightImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bump(w: usize, h: usize, cx: f64, cy: f64, s2: f64) -> WeightImage {
    let data = (0..w * h)
        .map(|i| {
            let (x, y) = ((i % w) as f64, (i / w) as f64);
            (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * s2)).exp() as f32
        })
        .collect();
    WeightImage { width: w, height: h, data }
}

#[test]
fn weight_sum_never_decreases_on_200_images() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for i in 0..200 {
        let (w, h) = (rng.random_range(20..80), rng.random_range(20..80));
        let mut data: Vec<f32> = (0..w * h).map(|_| if rng.random_bool(0.3) { rng.random() } else { 0.0 }).collect();
        // a few bumps so the search has somewhere to go
        for _ in 0..3 {
            let (bx, by) = (rng.random_range(0..w) as f64, rng.random_range(0..h) as f64);
            for (k, d) in data.iter_mut().enumerate() {
                let (x, y) = ((k % w) as f64, (k / w) as f64);
                *d += 3.0 * (-((x - bx).powi(2) + (y - by).powi(2)) / 30.0).exp() as f32;
            }
        }
        let img = WeightImage { width: w, height: h, data };
        let win = Rect::new(rng.random_range(0..w as i32 - 5), rng.random_range(0..h as i32 - 5), rng.random_range(3..15), rng.random_range(3..15));
        let r = mean_shift(&img, win, 20, 1.0);
        for pair in r.trace.windows(2) {
            assert!(pair[1] >= pair[0], "image {i}: {:?}", r.trace);
        }
    }
}

#[test]
fn offset_bump_converges_to_exhaustive_maximum() {
    for (dx, dy) in [(5, 0), (0, -5), (4, 3), (-3, -4), (-5, 0)] {
        let (w, h) = (80, 80);
        let (px, py) = (40.0 + dx as f64, 40.0 + dy as f64);
        let img = bump(w, h, px, py, 16.0);
        let size = 15;
        let start = Rect::centered_at(40.0, 40.0, size, size);
        let r = mean_shift(&img, start, 20, 1.0);
        let mut best = (f64::MIN, start);
        for y in 0..=(h as i32 - size) {
            for x in 0..=(w as i32 - size) {
                let cand = Rect::new(x, y, size, size);
                let s = img.window_sum(cand);
                if s > best.0 {
                    best = (s, cand);
                }
            }
        }
        let (ox, oy) = best.1.center();
        let (mx, my) = r.window.center();
        assert!((mx - ox).hypot(my - oy) <= 1.0, "offset ({dx},{dy}): {:?} vs {:?}", r.window, best.1);
    }
}

/// Solid person-colored rectangle on a gray frame.
fn scene(w: usize, h: usize, rect: Rect) -> (Frame, Mask) {
    let mask = Mask::from_fn(w, h, |x, y| rect.contains(x as i32, y as i32));
    let rgb = mask.bits.iter().map(|&b| if b { [200, 40, 40] } else { [120, 120, 120] }).collect();
    (Frame::from_rgb(0, w, h, rgb).unwrap(), mask)
}

#[test]
fn static_target_is_a_fixed_point_without_noise() {
    let (frame, fg) = scene(160, 120, Rect::new(60, 30, 20, 50));
    let cc = connected_components(&fg, Connectivity::Eight);
    let p0 = detect_person(&cc, &frame, 10).unwrap();
    let params = MspfParams { sigma_xy: 0.0, sigma_scale: 0.0, ..MspfParams::default() };
    let mut ps = ParticleSet::new(params.n_particles, p0.bbox.center(), 1);
    let p1 = mspf_track(&p0, &mut ps, &frame, &fg, &params).unwrap();
    assert_eq!(p1.bbox, p0.bbox);
    assert!((p1.centroid.0 - p0.centroid.0).abs() < 1e-9);
    assert!((p1.centroid.1 - p0.centroid.1).abs() < 1e-9);
    assert!((p1.confidence - 1.0).abs() < 1e-12);
    assert_eq!(p1.velocity, (0.0, 0.0));
}

#[test]
fn empty_foreground_coasts() {
    let (frame, fg) = scene(160, 120, Rect::new(60, 30, 20, 50));
    let cc = connected_components(&fg, Connectivity::Eight);
    let mut p = detect_person(&cc, &frame, 10).unwrap();
    p.velocity = (2.0, -1.0);
    p.confidence = 0.9;
    let start = p.clone();
    let mut ps = ParticleSet::new(100, p.bbox.center(), 1);
    let empty = Mask::new(160, 120);
    for _ in 0..5 {
        p = mspf_track(&p, &mut ps, &frame, &empty, &MspfParams::default()).unwrap();
    }
    assert_eq!(p.centroid, (start.centroid.0 + 10.0, start.centroid.1 - 5.0));
    assert!((p.confidence - 0.9 * 0.8f64.powi(5)).abs() < 1e-12);
}

#[test]
fn tracking_is_deterministic_for_a_seed() {
    let run = || {
        let (frame, fg) = scene(160, 120, Rect::new(30, 30, 20, 50));
        let cc = connected_components(&fg, Connectivity::Eight);
        let mut p = detect_person(&cc, &frame, 10).unwrap();
        let mut ps = ParticleSet::new(100, p.bbox.center(), 42);
        let mut out = Vec::new();
        for k in 1..20 {
            let (frame, fg) = scene(160, 120, Rect::new(30 + 3 * k, 30, 20, 50));
            p = mspf_track(&p, &mut ps, &frame, &fg, &MspfParams::default()).unwrap();
            out.push((p.centroid.0.to_bits(), p.centroid.1.to_bits(), p.bbox, p.confidence.to_bits()));
        }
        (out, ps.particles.iter().map(|q| (q.x.to_bits(), q.y.to_bits())).collect::<Vec<_>>())
    };
    assert_eq!(run(), run());
}

#[test]
fn moving_rectangle_is_followed() {
    let (frame, fg) = scene(200, 120, Rect::new(20, 30, 20, 50));
    let cc = connected_components(&fg, Connectivity::Eight);
    let mut p = detect_person(&cc, &frame, 10).unwrap();
    let mut ps = ParticleSet::new(100, p.bbox.center(), 5);
    for k in 1..40 {
        let r = Rect::new(20 + 3 * k, 30, 20, 50);
        let (frame, fg) = scene(200, 120, r);
        p = mspf_track(&p, &mut ps, &frame, &fg, &MspfParams::default()).unwrap();
        let (cx, cy) = r.center();
        assert!((p.centroid.0 - cx).hypot(p.centroid.1 - cy) < 1.0, "frame {k}: {:?}", p.centroid);
    }
    assert!((p.velocity.0 - 3.0).abs() < 0.1, "{:?}", p.velocity);
}
