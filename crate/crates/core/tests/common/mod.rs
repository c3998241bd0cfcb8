#![allow(dead_code)]

use rand::Rng;
use skcv_core::{Coord, GeoDataset, ResponseKind, RngSeed};

/// Random point table; when `snap` is set coordinates lie on a 5 m lattice so
/// that exact distance ties and boundary cases occur.
pub fn random_dataset(seed: u64, m: usize, side: f64, dim: usize, snap: bool, kind: ResponseKind) -> GeoDataset {
    let mut rng = RngSeed(seed).rng();
    let rows = (0..m)
        .map(|_| {
            let mut c = Coord::new(rng.random_range(0.0..side), rng.random_range(0.0..side));
            if snap {
                c = Coord::new((c.x / 5.0).round() * 5.0, (c.y / 5.0).round() * 5.0);
            }
            let f: Vec<f64> = (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect();
            let y = match kind {
                ResponseKind::Continuous => f.iter().sum::<f64>() + rng.random_range(-1.0..1.0),
                ResponseKind::Categorical => rng.random_range(0..3u32) as f64,
            };
            (c, f, y)
        })
        .collect();
    let names = (0..dim).map(|i| format!("f{i}")).collect();
    GeoDataset::new(names, kind, rows).unwrap()
}

pub fn brute_within(ds: &GeoDataset, c: Coord, r: f64) -> Vec<usize> {
    ds.records().iter().filter(|p| skcv_core::spatial_distance(p.coord, c) <= r).map(|p| p.id).collect()
}
