mod common;

use std::f64::consts::TAU;

use common::oracle::{gaussian, rng};
use nalgebra::DMatrix;
use proptest::prelude::*;
use sensolab_core::dataset::{Dataset, Role};
use sensolab_core::latent::{fit_plsr, Block, PreprocessSpec};
use sensolab_core::prefmap::{assign_sectors, build_prefmap, Direction, Engine, PrefmapSpec};

fn dataset(name: &str, role: Role, m: &DMatrix<f64>) -> Dataset {
    Dataset::from_dense(name, role, m).unwrap()
}

fn pair(seed: u64) -> (Dataset, Dataset) {
    let mut r = rng(seed);
    let liking = gaussian(&mut r, 5, 12).map(|v| (5.0 + 2.0 * v).round());
    let desc = gaussian(&mut r, 5, 4);
    (dataset("liking", Role::Liking, &liking), dataset("descriptive", Role::Descriptive, &desc))
}

#[test]
fn internal_map_uses_liking_as_x() {
    let (liking, desc) = pair(1);
    let m = build_prefmap(&liking, &desc, PrefmapSpec::default()).unwrap();
    assert_eq!(m.model.x_labels.len(), 12);
    assert_eq!(m.model.y_labels.len(), 4);
    assert_eq!(m.consumer_loadings().labels.len(), 12);
    assert_eq!(m.attribute_loadings().labels.len(), 4);

    let ext = PrefmapSpec {
        direction: Direction::External,
        ..PrefmapSpec::default()
    };
    let m = build_prefmap(&liking, &desc, ext).unwrap();
    assert_eq!(m.model.x_labels.len(), 4);
    assert_eq!(m.consumer_loadings().labels.len(), 12);
}

#[test]
fn row_count_mismatch() {
    let (liking, _) = pair(2);
    let desc = dataset("d", Role::Descriptive, &DMatrix::from_element(8, 3, 1.0));
    let err = build_prefmap(&liking, &desc, PrefmapSpec::default()).unwrap_err();
    assert_eq!(err.to_string(), "row counts differ (5 vs 8)");
}

#[test]
fn delegation_is_bit_identical() {
    let (liking, desc) = pair(3);
    let spec = PrefmapSpec {
        validate: false,
        standardise_y: true,
        ..PrefmapSpec::default()
    };
    let m = build_prefmap(&liking, &desc, spec).unwrap();
    let direct = fit_plsr(
        &Block::from_dataset(&liking).unwrap(),
        &Block::from_dataset(&desc).unwrap(),
        PreprocessSpec { standardise: false },
        PreprocessSpec { standardise: true },
        2,
    )
    .unwrap();
    assert_eq!(m.model.export(), direct.export());
}

#[test]
fn sector_payload_counts_consumers() {
    let (liking, desc) = pair(4);
    let spec = PrefmapSpec {
        engine: Engine::Pcr,
        ..PrefmapSpec::default()
    };
    let m = build_prefmap(&liking, &desc, spec).unwrap();
    let s = m.sectors(4, (0, 1)).unwrap();
    assert_eq!(s.sector_counts.iter().sum::<usize>(), 12);
    assert_eq!(s.point_sector.len(), 12);
    assert!(m.sectors(4, (0, 2)).is_err());
    let json = serde_json::to_value(&s).unwrap();
    for key in ["sector_boundaries", "sector_counts", "point_sector"] {
        assert!(json.get(key).is_some());
    }
}

fn away_from_boundaries(theta: f64, n: usize) -> bool {
    let w = TAU / n as f64;
    let f = (theta / w).fract();
    f > 1e-6 && f < 1.0 - 1e-6
}

proptest! {
    #[test]
    fn counts_sum_to_point_count(
        pts in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 0..60),
        n in 2usize..=12,
    ) {
        let s = assign_sectors(&pts, n).unwrap();
        prop_assert_eq!(s.counts.iter().sum::<usize>(), pts.len());
        prop_assert!(s.point_sector.iter().all(|&k| k < n));
    }

    #[test]
    fn rotation_shifts_counts(
        polar in prop::collection::vec((0.05f64..1.0, 0.0f64..TAU), 1..60),
        n in 2usize..=12,
    ) {
        let polar: Vec<_> = polar.into_iter().filter(|&(_, t)| away_from_boundaries(t, n)).collect();
        let w = TAU / n as f64;
        let pts: Vec<_> = polar.iter().map(|&(r, t)| (r * t.cos(), r * t.sin())).collect();
        let rot: Vec<_> = polar.iter().map(|&(r, t)| (r * (t + w).cos(), r * (t + w).sin())).collect();
        let a = assign_sectors(&pts, n).unwrap().counts;
        let b = assign_sectors(&rot, n).unwrap().counts;
        for k in 0..n {
            prop_assert_eq!(b[(k + 1) % n], a[k]);
        }
    }
}
