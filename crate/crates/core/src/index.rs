//! Uniform-grid spatial index over record coordinates.
//!
//! Results are exactly those of a brute-force scan using
//! [`spatial_distance`]; the grid only prunes candidates.

use crate::data::{spatial_distance, Coord, GeoDataset};
use crate::error::{Error, Result};

const TARGET_PER_CELL: f64 = 2.0;
const MAX_CELLS: f64 = 4.0e6;

#[derive(Debug, Clone)]
pub struct SpatialIndex {
    coords: Vec<Coord>,
    origin: Coord,
    cell: f64,
    nx: usize,
    ny: usize,
    /// Record ids per cell, row-major, ascending within a cell.
    cells: Vec<Vec<usize>>,
}

impl SpatialIndex {
    pub fn build(ds: &GeoDataset) -> Self {
        Self::from_coords(ds.coords())
    }

    pub fn from_coords(coords: Vec<Coord>) -> Self {
        let (mut min_x, mut min_y) = (f64::INFINITY, f64::INFINITY);
        let (mut max_x, mut max_y) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for c in &coords {
            min_x = min_x.min(c.x);
            min_y = min_y.min(c.y);
            max_x = max_x.max(c.x);
            max_y = max_y.max(c.y);
        }
        if coords.is_empty() {
            (min_x, min_y, max_x, max_y) = (0.0, 0.0, 0.0, 0.0);
        }
        let w = max_x - min_x;
        let h = max_y - min_y;
        let n = coords.len().max(1) as f64;
        let mut cell = ((w.max(f64::MIN_POSITIVE) * h.max(f64::MIN_POSITIVE)) * TARGET_PER_CELL / n).sqrt();
        // Degenerate extents (points on a line or a single spot).
        if !(cell.is_finite() && cell > 0.0) || w.max(h) / cell > MAX_CELLS.sqrt() {
            cell = (w.max(h) / n * TARGET_PER_CELL).max(1e-9);
        }
        if (w / cell + 1.0) * (h / cell + 1.0) > MAX_CELLS {
            cell = ((w + cell) * (h + cell) / MAX_CELLS).sqrt().max(cell);
        }
        let nx = (w / cell).floor() as usize + 1;
        let ny = (h / cell).floor() as usize + 1;
        let mut cells = vec![Vec::new(); nx * ny];
        let origin = Coord::new(min_x, min_y);
        let mut index = Self { coords: Vec::new(), origin, cell, nx, ny, cells: Vec::new() };
        for (id, c) in coords.iter().enumerate() {
            let (ix, iy) = index.cell_of(*c);
            cells[iy * nx + ix].push(id);
        }
        index.coords = coords;
        index.cells = cells;
        index
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coord(&self, id: usize) -> Coord {
        self.coords[id]
    }

    /// Cell of a point inside the bounding box.
    fn cell_of(&self, c: Coord) -> (usize, usize) {
        let ix = ((c.x - self.origin.x) / self.cell).floor().max(0.0) as usize;
        let iy = ((c.y - self.origin.y) / self.cell).floor().max(0.0) as usize;
        (ix.min(self.nx - 1), iy.min(self.ny - 1))
    }

    /// Visits ids in every grid cell overlapping the axis-aligned box
    /// `center ± r`.
    fn for_each_in_box(&self, center: Coord, r: f64, mut f: impl FnMut(usize)) {
        // Widen slightly so rounding in the cell arithmetic never drops a
        // point lying exactly on the radius; the caller filters exactly.
        let r = r + 1e-9 * (r + self.cell);
        let lo_x = ((center.x - r - self.origin.x) / self.cell).floor().max(0.0);
        let lo_y = ((center.y - r - self.origin.y) / self.cell).floor().max(0.0);
        let hi_x = ((center.x + r - self.origin.x) / self.cell).floor().min(self.nx as f64 - 1.0);
        let hi_y = ((center.y + r - self.origin.y) / self.cell).floor().min(self.ny as f64 - 1.0);
        if !(lo_x <= hi_x && lo_y <= hi_y) {
            return;
        }
        for iy in lo_y as usize..=hi_y as usize {
            for ix in lo_x as usize..=hi_x as usize {
                for &id in &self.cells[iy * self.nx + ix] {
                    f(id);
                }
            }
        }
    }

    /// Ids with `spatial_distance(coord, center) <= r`, ascending.
    pub fn within_radius(&self, center: Coord, r: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.for_each_in_box(center, r, |id| {
            if spatial_distance(self.coords[id], center) <= r {
                out.push(id);
            }
        });
        out.sort_unstable();
        out
    }

    /// The `k` nearest ids to `center` that are not excluded, by ascending
    /// distance with ties broken by ascending id.
    pub fn k_nearest_coords(
        &self,
        center: Coord,
        k: usize,
        exclude: impl Fn(usize) -> bool,
    ) -> Result<Vec<usize>> {
        if k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        let mut cand: Vec<(f64, usize)> = Vec::new();
        let (cx, cy) = self.cell_of_unclamped(center);
        let max_ring = self.ring_bound(cx, cy);
        // First ring that touches the grid at all.
        let nx = self.nx as i64;
        let ny = self.ny as i64;
        let mut ring: i64 = (-cx).max(cx - (nx - 1)).max(-cy).max(cy - (ny - 1)).max(0);
        loop {
            self.for_each_in_ring(cx, cy, ring, |id| {
                if !exclude(id) {
                    cand.push((spatial_distance(self.coords[id], center), id));
                }
            });
            // Every unvisited point is at least `ring * cell` away.
            if cand.len() >= k {
                cand.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                cand.truncate(k);
                let kth = cand[k - 1].0;
                if kth < ring as f64 * self.cell {
                    break;
                }
            }
            if ring >= max_ring {
                break;
            }
            ring += 1;
        }
        if cand.len() < k {
            return Err(Error::InsufficientCandidates { requested: k, available: cand.len() });
        }
        cand.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        Ok(cand.into_iter().take(k).map(|(_, id)| id).collect())
    }

    fn cell_of_unclamped(&self, c: Coord) -> (i64, i64) {
        let ix = ((c.x - self.origin.x) / self.cell).floor().clamp(-1e12, 1e12) as i64;
        let iy = ((c.y - self.origin.y) / self.cell).floor().clamp(-1e12, 1e12) as i64;
        (ix, iy)
    }

    /// Smallest ring that reaches every grid cell from `(cx, cy)`.
    fn ring_bound(&self, cx: i64, cy: i64) -> i64 {
        let dx = cx.max(self.nx as i64 - 1 - cx).max(-cx).max(cx - (self.nx as i64 - 1));
        let dy = cy.max(self.ny as i64 - 1 - cy).max(-cy).max(cy - (self.ny as i64 - 1));
        dx.max(dy).max(0)
    }

    /// Visits ids in the cells at Chebyshev distance exactly `ring` from
    /// `(cx, cy)`.
    fn for_each_in_ring(&self, cx: i64, cy: i64, ring: i64, mut f: impl FnMut(usize)) {
        let nx = self.nx as i64;
        let ny = self.ny as i64;
        let mut visit_row = |iy: i64, x0: i64, x1: i64| {
            if iy < 0 || iy >= ny {
                return;
            }
            for ix in x0.max(0)..=x1.min(nx - 1) {
                for &id in &self.cells[iy as usize * self.nx + ix as usize] {
                    f(id);
                }
            }
        };
        if ring == 0 {
            visit_row(cy, cx, cx);
            return;
        }
        visit_row(cy - ring, cx - ring, cx + ring);
        visit_row(cy + ring, cx - ring, cx + ring);
        for iy in (cy - ring + 1).max(0)..=(cy + ring - 1).min(ny - 1) {
            visit_row(iy, cx - ring, cx - ring);
            visit_row(iy, cx + ring, cx + ring);
        }
    }

    /// Every unordered pair `(i, j)`, `i < j`, with
    /// `low <= spatial_distance <= high`, sorted lexicographically.
    pub fn pairs_in_band(&self, low: f64, high: f64) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.coords.len() {
            let ci = self.coords[i];
            let start = out.len();
            self.for_each_in_box(ci, high, |j| {
                if j > i {
                    let d = spatial_distance(ci, self.coords[j]);
                    if d >= low && d <= high {
                        out.push((i, j));
                    }
                }
            });
            out[start..].sort_unstable();
        }
        out
    }

    /// Calls `f(i, j, d)` for every unordered pair with `d <= high`, `i < j`.
    /// Used by the diagnostics to bin all lags in a single pass.
    pub fn for_each_pair_within(&self, high: f64, mut f: impl FnMut(usize, usize, f64)) {
        for i in 0..self.coords.len() {
            let ci = self.coords[i];
            self.for_each_in_box(ci, high, |j| {
                if j > i {
                    let d = spatial_distance(ci, self.coords[j]);
                    if d <= high {
                        f(i, j, d);
                    }
                }
            });
        }
    }
}
