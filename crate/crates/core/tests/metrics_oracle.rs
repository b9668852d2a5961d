use mieval::metrics::{dice3d, hausdorff3d_mm, rvd, summarize, CaseReport, StdKind, StructureScores};
use mieval::{Dims, Spacing, StructureMask};
use proptest::prelude::*;

fn brute_hd(a: &StructureMask, b: &StructureMask) -> Option<f64> {
    let pts = |m: &StructureMask| -> Vec<[f64; 3]> {
        let d = m.dims();
        let s = m.spacing();
        m.bits()
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| {
                let (z, y, x) = d.coords(i);
                [z as f64 * s.dz, y as f64 * s.dy, x as f64 * s.dx]
            })
            .collect()
    };
    let (pa, pb) = (pts(a), pts(b));
    if pa.is_empty() || pb.is_empty() {
        return None;
    }
    let dist = |p: &[f64; 3], q: &[f64; 3]| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt();
    let directed = |from: &[[f64; 3]], to: &[[f64; 3]]| {
        from.iter()
            .map(|p| to.iter().map(|q| dist(p, q)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    Some(directed(&pa, &pb).max(directed(&pb, &pa)))
}

fn brute_dice(a: &StructureMask, b: &StructureMask) -> f64 {
    let sa: std::collections::BTreeSet<usize> = a.bits().iter().enumerate().filter(|p| *p.1).map(|p| p.0).collect();
    let sb: std::collections::BTreeSet<usize> = b.bits().iter().enumerate().filter(|p| *p.1).map(|p| p.0).collect();
    if sa.is_empty() && sb.is_empty() {
        return 1.0;
    }
    2.0 * sa.intersection(&sb).count() as f64 / (sa.len() + sb.len()) as f64
}

fn mask_pair() -> impl Strategy<Value = (StructureMask, StructureMask)> {
    (1usize..=6, 1usize..=6, 1usize..=6, 0.5f64..5.0, 0.5f64..3.0, 0.5f64..3.0, 0.0f64..1.0).prop_flat_map(
        |(s, h, w, dz, dy, dx, density)| {
            let n = s * h * w;
            let bits = prop::collection::vec(prop::bool::weighted(density.clamp(0.05, 0.95)), n);
            (bits.clone(), bits).prop_map(move |(a, b)| {
                let d = Dims::new(s, h, w).unwrap();
                let sp = Spacing::new(dz, dy, dx).unwrap();
                (StructureMask::new(d, sp, a).unwrap(), StructureMask::new(d, sp, b).unwrap())
            })
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn dice_matches_set_oracle((a, b) in mask_pair()) {
        let d = dice3d(&a, &b).unwrap();
        prop_assert_eq!(d, brute_dice(&a, &b));
        prop_assert_eq!(d, dice3d(&b, &a).unwrap());
        prop_assert!((0.0..=1.0).contains(&d));
    }

    #[test]
    fn hausdorff_matches_all_pairs((a, b) in mask_pair()) {
        let hd = hausdorff3d_mm(&a, &b).unwrap();
        let oracle = brute_hd(&a, &b);
        match (hd, oracle) {
            (Some(x), Some(y)) => prop_assert!((x - y).abs() <= 1e-9, "{} vs {}", x, y),
            (None, None) => {}
            other => prop_assert!(false, "{:?}", other),
        }
        prop_assert_eq!(hd, hausdorff3d_mm(&b, &a).unwrap());
        if !a.is_empty() {
            prop_assert_eq!(hausdorff3d_mm(&a, &a).unwrap(), Some(0.0));
        }
    }

    #[test]
    fn rvd_non_negative_and_scale_free((a, b) in mask_pair()) {
        let v = rvd(&a, &b).unwrap();
        if let Some(v) = v {
            prop_assert!(v >= 0.0);
            // refine the grid by 2 along x: both counts double
            let refine = |m: &StructureMask| {
                let d = m.dims();
                let bits: Vec<bool> = m.bits().iter().flat_map(|&b| [b, b]).collect();
                StructureMask::new(Dims::new(d.slices, d.height, d.width * 2).unwrap(), m.spacing(), bits).unwrap()
            };
            let r = rvd(&refine(&a), &refine(&b)).unwrap().unwrap();
            prop_assert!((r - v).abs() < 1e-12);
        } else {
            prop_assert!(b.is_empty());
        }
    }

    #[test]
    fn summary_bounds(values in prop::collection::vec(prop::option::of(0.0f64..100.0), 1..20)) {
        let reports: Vec<CaseReport> = values.iter().enumerate().map(|(i, v)| CaseReport {
            case_id: format!("c{i}"),
            structures: vec![StructureScores { structure: "s".into(), scores: [("m".to_string(), *v)].into_iter().collect() }],
            predicted_class: None,
            truth_class: None,
        }).collect();
        let s = summarize(&reports, StdKind::Sample).unwrap();
        let m = &s.structures[0].metrics["m"];
        prop_assert_eq!(m.n + m.n_missing, values.len());
        if let (Some(lo), Some(mean), Some(hi)) = (m.min, m.mean, m.max) {
            prop_assert!(lo <= mean + 1e-9 && mean <= hi + 1e-9);
            prop_assert!(m.std.unwrap() >= 0.0);
        } else {
            prop_assert_eq!(m.n, 0);
        }
    }
}
