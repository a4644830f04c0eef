//! Synthetic dataset contracts and on-disk roundtrips.

use contourrend::data::*;
use contourrend::geometry::{mask_iou, rasterize_polygon, resample_contour, signed_area};
use contourrend::{Contour, Error, Point01};

fn segments_cross(a: Point01, b: Point01, c: Point01, d: Point01) -> bool {
    let orient = |p: Point01, q: Point01, r: Point01| (q.x - p.x) * (r.y - p.y) - (q.y - p.y) * (r.x - p.x);
    let (d1, d2) = (orient(c, d, a), orient(c, d, b));
    let (d3, d4) = (orient(a, b, c), orient(a, b, d));
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

fn is_simple(c: &Contour) -> bool {
    let v = c.vertices();
    let n = v.len();
    for i in 0..n {
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            if segments_cross(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]) {
                return false;
            }
        }
    }
    true
}

#[test]
fn samples_satisfy_shape_invariants() {
    for seed in 0..80u64 {
        let cat = Category::ALL[seed as usize % 8];
        let s = gen_sample(seed, cat, 64).unwrap();
        assert_eq!(s.category, cat);
        assert_eq!(s.image.shape(), &[3, 64, 64]);
        assert!(s.image.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(s.gt_mask, rasterize_polygon(&s.gt_contour, 64, 64).unwrap());
        assert!(s.gt_contour.len() >= 60, "{cat}: {} points", s.gt_contour.len());
        assert!(signed_area(&s.gt_contour) > 0.005, "{cat} seed {seed} not clockwise or too small");
        assert!(is_simple(&s.gt_contour), "{cat} seed {seed} self-intersects");
        let m = s.gt_contour.centroid();
        assert!((m.x - 0.5).hypot(m.y - 0.5) < 0.1, "{cat} centroid {m:?}");
    }
}

#[test]
fn generation_is_deterministic() {
    for cat in Category::ALL {
        assert_eq!(gen_sample(42, cat, 32).unwrap(), gen_sample(42, cat, 32).unwrap());
    }
    assert_ne!(gen_sample(1, Category::Star, 32).unwrap().image, gen_sample(2, Category::Star, 32).unwrap().image);
}

#[test]
fn small_sizes_rejected() {
    assert!(gen_sample(0, Category::Triangle, 15).is_err());
    assert!(gen_sample(0, Category::Triangle, 16).is_ok());
}

#[test]
fn convex_shapes_survive_twenty_point_resampling() {
    for seed in 0..60u64 {
        for cat in Category::ALL.into_iter().filter(|c| c.is_convex()) {
            let s = gen_sample(seed, cat, 64).unwrap();
            let coarse = resample_contour(&s.gt_contour, 20).unwrap();
            let iou = mask_iou(&s.gt_mask, &rasterize_polygon(&coarse, 64, 64).unwrap()).unwrap();
            assert!(iou >= 0.95, "{cat} seed {seed}: IoU {iou}");
        }
    }
}

#[test]
fn splits_are_balanced_and_disjoint() {
    let d = generate_dataset(3, 32, SplitCounts { train: 24, val: 8, test: 16 }).unwrap();
    for kind in SplitKind::ALL {
        for (i, s) in d.split(kind).iter().enumerate() {
            assert_eq!(s.category, Category::ALL[i % 8]);
        }
    }
    for a in &d.train {
        assert!(d.test.iter().all(|b| a.image != b.image));
        assert!(d.val.iter().all(|b| a.image != b.image));
    }
}

#[test]
fn dataset_roundtrip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let counts = SplitCounts { train: 10, val: 3, test: 5 };
    let d = generate_dataset(11, 32, counts).unwrap();
    write_dataset(&d, dir.path()).unwrap();
    for kind in SplitKind::ALL {
        let text = std::fs::read_to_string(dir.path().join(format!("{}.jsonl", kind.name()))).unwrap();
        assert_eq!(text.lines().count(), d.split(kind).len());
    }
    let back = read_dataset(dir.path()).unwrap();
    assert_eq!(back.counts(), counts);
    for kind in SplitKind::ALL {
        for (a, b) in d.split(kind).iter().zip(back.split(kind)) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.category, b.category);
            assert_eq!(a.image, b.image);
            assert_eq!(a.gt_mask, b.gt_mask);
            for (p, q) in a.gt_contour.vertices().iter().zip(b.gt_contour.vertices()) {
                assert!((p.x - q.x).abs() <= 1e-9 && (p.y - q.y).abs() <= 1e-9);
            }
        }
    }
}

#[test]
fn missing_image_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let d = generate_dataset(0, 16, SplitCounts { train: 2, val: 1, test: 1 }).unwrap();
    write_dataset(&d, dir.path()).unwrap();
    let victim = dir.path().join("images").join(format!("{}.ppm", d.val[0].id));
    std::fs::remove_file(&victim).unwrap();
    let err = read_dataset(dir.path()).unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
    assert!(err.to_string().contains(&format!("{}.ppm", d.val[0].id)), "{err}");
}

#[test]
fn malformed_record_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let d = generate_dataset(0, 16, SplitCounts { train: 3, val: 1, test: 1 }).unwrap();
    write_dataset(&d, dir.path()).unwrap();
    let path = dir.path().join("train.jsonl");
    let mut lines: Vec<String> = std::fs::read_to_string(&path).unwrap().lines().map(str::to_string).collect();
    lines[1] = "{\"id\": \"broken\"".into();
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    match read_dataset(dir.path()).unwrap_err() {
        Error::Parse { line, .. } => assert_eq!(line, 2),
        other => panic!("unexpected error {other}"),
    }
}

#[test]
fn image_roundtrip_within_half_step() {
    let dir = tempfile::tempdir().unwrap();
    let s = gen_sample(9, Category::Blob, 24).unwrap();
    let mut img = s.image.clone();
    // off-grid values exercise the quantization bound
    img.data_mut().iter_mut().enumerate().for_each(|(i, v)| *v = (*v * 0.77 + i as f64 * 1e-4).min(1.0));
    let path = dir.path().join("x.ppm");
    write_image_ppm(&img, &path).unwrap();
    let back = read_image_ppm(&path).unwrap();
    for (a, b) in img.data().iter().zip(back.data()) {
        assert!((a - b).abs() <= 1.0 / 510.0 + 1e-15);
    }
    let mpath = dir.path().join("m.pgm");
    write_mask_pgm(&s.gt_mask, &mpath).unwrap();
    assert_eq!(read_mask_pgm(&mpath).unwrap(), s.gt_mask);
}
