//! Uniform-grid nearest-neighbour index.
//!
//! Results are exact: ties in distance resolve to the lowest point index,
//! the same rule a brute-force scan applies.

#[derive(Clone, Debug)]
pub struct NearestGrid<const D: usize> {
    points: Vec<[f64; D]>,
    lo: [f64; D],
    cell: f64,
    dims: [usize; D],
    starts: Vec<u32>,
    items: Vec<u32>,
}

impl<const D: usize> NearestGrid<D> {
    pub fn new(points: Vec<[f64; D]>) -> Self {
        let n = points.len().max(1);
        let mut lo = [f64::INFINITY; D];
        let mut hi = [f64::NEG_INFINITY; D];
        for p in &points {
            for d in 0..D {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        if points.is_empty() {
            lo = [0.0; D];
            hi = [0.0; D];
        }
        let extent: Vec<f64> = (0..D).map(|d| (hi[d] - lo[d]).max(1e-9)).collect();
        let volume: f64 = extent.iter().product();
        // about two points per cell
        let mut cell = (2.0 * volume / n as f64).powf(1.0 / D as f64);
        let max_extent = extent.iter().cloned().fold(0.0, f64::max);
        cell = cell.max(max_extent / 1024.0).max(1e-12);
        let mut dims = [1usize; D];
        for d in 0..D {
            dims[d] = ((extent[d] / cell).floor() as usize + 1).min(1025);
        }
        let total: usize = dims.iter().product();
        let mut counts = vec![0u32; total + 1];
        let cell_ids: Vec<usize> = points
            .iter()
            .map(|p| Self::flat(&dims, &Self::cell_of(&lo, cell, &dims, p)))
            .collect();
        for &c in &cell_ids {
            counts[c + 1] += 1;
        }
        for i in 0..total {
            counts[i + 1] += counts[i];
        }
        let starts = counts.clone();
        let mut fill = counts;
        let mut items = vec![0u32; points.len()];
        for (i, &c) in cell_ids.iter().enumerate() {
            items[fill[c] as usize] = i as u32;
            fill[c] += 1;
        }
        NearestGrid {
            points,
            lo,
            cell,
            dims,
            starts,
            items,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[f64; D]] {
        &self.points
    }

    fn cell_of(lo: &[f64; D], cell: f64, dims: &[usize; D], p: &[f64; D]) -> [usize; D] {
        let mut c = [0usize; D];
        for d in 0..D {
            let v = ((p[d] - lo[d]) / cell).floor();
            c[d] = if v <= 0.0 {
                0
            } else {
                (v as usize).min(dims[d] - 1)
            };
        }
        c
    }

    fn flat(dims: &[usize; D], c: &[usize; D]) -> usize {
        let mut idx = 0;
        for d in (0..D).rev() {
            idx = idx * dims[d] + c[d];
        }
        idx
    }

    /// Index of the nearest point and its squared distance.
    pub fn nearest(&self, q: &[f64; D]) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let center = Self::cell_of(&self.lo, self.cell, &self.dims, q);
        let max_ring = self.dims.iter().copied().max().unwrap_or(1);
        let mut best: Option<(usize, f64)> = None;
        for ring in 0..=max_ring {
            let inside = self.visit_ring(&center, ring, &mut |i| {
                let p = &self.points[i];
                let d2: f64 = (0..D).map(|d| (p[d] - q[d]).powi(2)).sum();
                best = match best {
                    Some((bi, bd)) if bd < d2 || (bd == d2 && bi < i) => Some((bi, bd)),
                    _ => Some((i, d2)),
                };
            });
            if !inside {
                break;
            }
            if let Some((_, bd)) = best {
                // Any cell in a later ring is at least `ring` whole cells away.
                let bound = ring as f64 * self.cell;
                if bound * bound > bd {
                    break;
                }
            }
        }
        best
    }

    /// Visits the cells at Chebyshev distance `ring` from `center`, clipped
    /// to the grid. Returns false once the ring lies entirely outside.
    fn visit_ring(&self, center: &[usize; D], ring: usize, f: &mut impl FnMut(usize)) -> bool {
        let mut lo = [0usize; D];
        let mut hi = [0usize; D];
        let mut reaches = false;
        for d in 0..D {
            lo[d] = center[d].saturating_sub(ring);
            hi[d] = (center[d] + ring).min(self.dims[d] - 1);
            reaches |= center[d] >= ring || center[d] + ring < self.dims[d];
        }
        if !reaches {
            return false;
        }
        let mut cell = lo;
        loop {
            if (0..D).any(|d| cell[d].abs_diff(center[d]) == ring) {
                let c = Self::flat(&self.dims, &cell);
                for &i in &self.items[self.starts[c] as usize..self.starts[c + 1] as usize] {
                    f(i as usize);
                }
            }
            let mut d = 0;
            loop {
                if d == D {
                    return true;
                }
                if cell[d] < hi[d] {
                    cell[d] += 1;
                    break;
                }
                cell[d] = lo[d];
                d += 1;
            }
        }
    }
}

/// Brute-force nearest neighbour with the same tie rule as the grid.
pub fn nearest_brute<const D: usize>(points: &[[f64; D]], q: &[f64; D]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in points.iter().enumerate() {
        let d2: f64 = (0..D).map(|d| (p[d] - q[d]).powi(2)).sum();
        if best.is_none_or(|(_, bd)| d2 < bd) {
            best = Some((i, d2));
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn grid_matches_brute_force_2d(
            pts in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 1..200),
            qs in prop::collection::vec((-80.0f64..80.0, -80.0f64..80.0), 1..20),
        ) {
            let points: Vec<[f64; 2]> = pts.iter().map(|&(x, y)| [x, y]).collect();
            let grid = NearestGrid::new(points.clone());
            for (x, y) in qs {
                prop_assert_eq!(grid.nearest(&[x, y]), nearest_brute(&points, &[x, y]));
            }
        }

        #[test]
        fn grid_matches_brute_force_3d_integer_ties(
            pts in prop::collection::vec((0i32..6, 0i32..6, 0i32..3), 1..80),
            qs in prop::collection::vec((0i32..12, 0i32..12, 0i32..6), 1..20),
        ) {
            let points: Vec<[f64; 3]> = pts.iter().map(|&(x, y, z)| [x as f64, y as f64, z as f64]).collect();
            let grid = NearestGrid::new(points.clone());
            for (x, y, z) in qs {
                let q = [x as f64 * 0.5, y as f64 * 0.5, z as f64 * 0.5];
                prop_assert_eq!(grid.nearest(&q), nearest_brute(&points, &q));
            }
        }
    }

    #[test]
    fn empty_and_degenerate_sets() {
        let g: NearestGrid<2> = NearestGrid::new(vec![]);
        assert_eq!(g.nearest(&[0.0, 0.0]), None);
        let same = NearestGrid::new(vec![[1.0, 1.0]; 5]);
        assert_eq!(same.nearest(&[3.0, 1.0]), Some((0, 4.0)));
    }
}
