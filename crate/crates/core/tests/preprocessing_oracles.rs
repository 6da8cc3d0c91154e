use hsd::preprocessing::{
    detect_pois, detect_pois_for_patches, dog_response, extract_patch, load_gray, saliency_map, saliency_unnormalized,
    whiten, DetectorConfig,
};
use hsd::GrayImage;
use proptest::prelude::*;

fn clamp_get(img: &[f64], w: usize, h: usize, x: isize, y: isize) -> f64 {
    let x = x.clamp(0, w as isize - 1) as usize;
    let y = y.clamp(0, h as isize - 1) as usize;
    img[y * w + x]
}

/// Direct 2-D convolution with a normalized sampled Gaussian of radius ceil(3σ).
fn blur_2d(img: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let mut kernel = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            kernel.push((dx, dy, (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp()));
        }
    }
    let total: f64 = kernel.iter().map(|k| k.2).sum();
    let mut out = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            out[y as usize * w + x as usize] = kernel
                .iter()
                .map(|&(dx, dy, k)| k / total * clamp_get(img, w, h, x + dx, y + dy))
                .sum();
        }
    }
    out
}

fn sobel_magnitude(img: &[f64], w: usize, h: usize) -> Vec<f64> {
    const KX: [[f64; 3]; 3] = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
    let mut out = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let (mut gx, mut gy) = (0.0, 0.0);
            for j in 0..3 {
                for i in 0..3 {
                    let v = clamp_get(img, w, h, x + i as isize - 1, y + j as isize - 1);
                    gx += KX[j][i] * v;
                    gy += KX[i][j] * v;
                }
            }
            out[y as usize * w + x as usize] = (gx * gx + gy * gy).sqrt();
        }
    }
    out
}

#[test]
fn step_edge_matches_brute_force_saliency() {
    let (w, h) = (16, 16);
    let img = GrayImage::from_fn(w, h, |x, _| if x >= 8 { 1.0 } else { 0.0 });
    let sal = saliency_unnormalized(&img, 1.0, 2.0).unwrap();

    let energy = sobel_magnitude(img.data(), w, h);
    let a = blur_2d(&energy, w, h, 1.0);
    let b = blur_2d(&energy, w, h, 2.0);
    let border = 6;
    for y in 0..h {
        for x in 0..w {
            let inside = x >= border && y >= border && x + border < w && y + border < h;
            let expected = if inside { (a[y * w + x] - b[y * w + x]).abs() } else { 0.0 };
            assert!((sal.get(x, y) - expected).abs() < 1e-12, "({x},{y})");
        }
    }
    // the ridge sits on the two columns either side of the step
    for y in border..h - border {
        let row: Vec<f64> = (0..w).map(|x| sal.get(x, y)).collect();
        let best = (0..w).max_by(|&i, &j| row[i].total_cmp(&row[j])).unwrap();
        assert!(best == 7 || best == 8, "row {y} peaks at {best}");
    }
}

#[test]
fn impulse_dog_matches_direct_kernel_difference() {
    let n = 33;
    let c = 16isize;
    let img = GrayImage::from_fn(n, n, |x, y| if x == 16 && y == 16 { 1.0 } else { 0.0 });
    let dog = dog_response(&img, 1.0, 2.0);
    let g = |s: f64, d: isize| {
        let r = (3.0 * s).ceil() as isize;
        if d.abs() > r {
            return 0.0;
        }
        let total: f64 = (-r..=r).map(|i| (-((i * i) as f64) / (2.0 * s * s)).exp()).sum();
        (-((d * d) as f64) / (2.0 * s * s)).exp() / total
    };
    for y in 0..n as isize {
        for x in 0..n as isize {
            let expected = g(1.0, x - c) * g(1.0, y - c) - g(2.0, x - c) * g(2.0, y - c);
            assert!((dog[y as usize * n + x as usize] - expected).abs() < 1e-12);
        }
    }
    // centre-surround: positive centre, negative ring
    assert!(dog[16 * n + 16] > 0.0);
    assert!(dog[16 * n + 19] < 0.0);
}

#[test]
fn load_gray_resizes_and_normalizes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("frame.png");
    image::GrayImage::from_fn(1242, 375, |x, _| image::Luma([(x % 256) as u8])).save(&path).unwrap();
    let img = load_gray(&path, 642, 188).unwrap();
    assert_eq!((img.width(), img.height()), (642, 188));
    assert!(img.data().iter().all(|v| (0.0..=1.0).contains(v)));

    let white = dir.path().join("white.png");
    image::GrayImage::from_pixel(20, 10, image::Luma([255])).save(&white).unwrap();
    let img = load_gray(&white, 7, 5).unwrap();
    assert!(img.data().iter().all(|&v| v == 1.0));

    assert!(load_gray(&dir.path().join("missing.png"), 7, 5).is_err());
    assert!(load_gray(&white, 0, 5).is_err());
}

#[test]
fn landmarks_stay_inside_and_sorted() {
    let img = GrayImage::from_fn(120, 80, |x, y| {
        let (fx, fy) = (x as f64, y as f64);
        0.5 + 0.2 * (fx * 0.31).sin() * (fy * 0.17).cos() + 0.1 * ((fx * fy) * 0.01).sin()
    });
    let cfg = DetectorConfig::default();
    let sal = saliency_map(&img, cfg.dog_sigma_small, cfg.dog_sigma_large).unwrap();
    let pois = detect_pois_for_patches(&sal, cfg.max_pois, cfg.nms_radius, cfg.patch_side).unwrap();
    assert!(!pois.is_empty());
    for w in pois.windows(2) {
        assert!(w[0].saliency >= w[1].saliency);
    }
    for p in &pois {
        let patch = extract_patch(&img, p, cfg.patch_side).unwrap();
        assert!(hsd::linalg::mean(patch.data()).abs() < 1e-6);
    }
}

fn saliency_grid() -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
    (8usize..24, 8usize..24).prop_flat_map(|(w, h)| (Just(w), Just(h), prop::collection::vec(0.0f64..1.0, w * h)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pois_respect_min_separation((w, h, data) in saliency_grid(), sep in 1.0f64..8.0, max in 1usize..30) {
        let sal = GrayImage::new(w, h, data).unwrap();
        let pois = detect_pois(&sal, max, sep).unwrap();
        prop_assert!(pois.len() <= max);
        for (i, a) in pois.iter().enumerate() {
            for b in &pois[i + 1..] {
                let d = ((a.x as f64 - b.x as f64).powi(2) + (a.y as f64 - b.y as f64).powi(2)).sqrt();
                prop_assert!(d >= sep);
            }
        }
        for w in pois.windows(2) {
            prop_assert!(w[0].saliency >= w[1].saliency);
        }
    }

    #[test]
    fn nms_matches_brute_force((w, h, data) in saliency_grid(), sep in 1.0f64..6.0) {
        let sal = GrayImage::new(w, h, data.clone()).unwrap();
        let got = detect_pois(&sal, 5, sep).unwrap();
        // reference: repeatedly take the first global maximum among points
        // not within `sep` of an earlier pick
        let mut picked: Vec<(usize, usize)> = Vec::new();
        while picked.len() < 5 {
            let mut best: Option<(usize, usize, f64)> = None;
            for y in 0..h {
                for x in 0..w {
                    let blocked = picked.iter().any(|&(px, py)| {
                        let d2 = (px as f64 - x as f64).powi(2) + (py as f64 - y as f64).powi(2);
                        d2 < sep * sep
                    });
                    let v = data[y * w + x];
                    if !blocked && best.map_or(true, |b| v > b.2) {
                        best = Some((x, y, v));
                    }
                }
            }
            match best {
                Some((x, y, v)) if v >= 1e-4 => picked.push((x, y)),
                _ => break,
            }
        }
        let got: Vec<(usize, usize)> = got.iter().map(|p| (p.x, p.y)).collect();
        prop_assert_eq!(got, picked);
    }

    #[test]
    fn whitening_is_linear(
        p in prop::collection::vec(-1.0f64..1.0, 64),
        q in prop::collection::vec(-1.0f64..1.0, 64),
        alpha in -3.0f64..3.0,
        beta in -3.0f64..3.0,
    ) {
        let mix: Vec<f64> = p.iter().zip(&q).map(|(a, b)| alpha * a + beta * b).collect();
        let lhs = whiten(&mix, 8).unwrap();
        let (wp, wq) = (whiten(&p, 8).unwrap(), whiten(&q, 8).unwrap());
        for i in 0..64 {
            let rhs = alpha * wp.data()[i] + beta * wq.data()[i];
            prop_assert!((lhs.data()[i] - rhs).abs() < 1e-9);
        }
    }

    #[test]
    fn saliency_invariant_to_brightness(
        data in prop::collection::vec(0.0f64..0.5, 20 * 20),
        offset in 0.0f64..0.5,
    ) {
        let a = GrayImage::new(20, 20, data.clone()).unwrap();
        let b = GrayImage::new(20, 20, data.iter().map(|v| v + offset).collect()).unwrap();
        let sa = saliency_unnormalized(&a, 1.0, 2.0).unwrap();
        let sb = saliency_unnormalized(&b, 1.0, 2.0).unwrap();
        for (x, y) in sa.data().iter().zip(sb.data()) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }
}
