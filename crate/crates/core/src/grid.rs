use serde::{Deserialize, Serialize};

/// Rectangular cell grid over the mission area.
///
/// Row index `m` runs along +y and column index `n` along +x; indices are
/// zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub rows: usize,
    pub cols: usize,
    pub cell: f64,
    pub origin: (f64, f64),
}

/// A `(row, col)` cell index.
pub type Cell = (usize, usize);

impl GridGeometry {
    pub fn new(rows: usize, cols: usize, cell: f64, origin: (f64, f64)) -> Self {
        assert!(rows >= 1 && cols >= 1, "grid must have at least one cell");
        assert!(cell > 0.0, "cell size must be positive");
        Self { rows, cols, cell, origin }
    }

    /// Smallest grid of `cell`-sized squares covering a `width x height` area.
    pub fn covering(width: f64, height: f64, cell: f64) -> Self {
        let cols = (width / cell).ceil().max(1.0) as usize;
        let rows = (height / cell).ceil().max(1.0) as usize;
        Self::new(rows, cols, cell, (0.0, 0.0))
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, (m, n): Cell) -> usize {
        m * self.cols + n
    }

    pub fn center(&self, (m, n): Cell) -> (f64, f64) {
        (
            self.origin.0 + (n as f64 + 0.5) * self.cell,
            self.origin.1 + (m as f64 + 0.5) * self.cell,
        )
    }

    /// Center of a possibly out-of-grid cell given by signed indices.
    pub fn center_signed(&self, m: i64, n: i64) -> (f64, f64) {
        (
            self.origin.0 + (n as f64 + 0.5) * self.cell,
            self.origin.1 + (m as f64 + 0.5) * self.cell,
        )
    }

    pub fn contains_signed(&self, m: i64, n: i64) -> bool {
        m >= 0 && n >= 0 && (m as usize) < self.rows && (n as usize) < self.cols
    }

    /// Cell containing `(x, y)`, or `None` outside the grid.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<Cell> {
        let fm = ((y - self.origin.1) / self.cell).floor();
        let fn_ = ((x - self.origin.0) / self.cell).floor();
        if fm < 0.0 || fn_ < 0.0 {
            return None;
        }
        let (m, n) = (fm as usize, fn_ as usize);
        (m < self.rows && n < self.cols).then_some((m, n))
    }

    /// Nearest in-grid cell to `(x, y)`.
    pub fn clamped_cell(&self, x: f64, y: f64) -> Cell {
        let fm = ((y - self.origin.1) / self.cell).floor();
        let fn_ = ((x - self.origin.0) / self.cell).floor();
        (
            fm.clamp(0.0, (self.rows - 1) as f64) as usize,
            fn_.clamp(0.0, (self.cols - 1) as f64) as usize,
        )
    }

    /// Calls `f(cell, distance)` for every in-grid cell whose center lies
    /// within `radius` of `(x, y)`.
    pub fn for_each_in_disk(&self, x: f64, y: f64, radius: f64, mut f: impl FnMut(Cell, f64)) {
        let r2 = radius * radius;
        let lo_m = ((y - radius - self.origin.1) / self.cell - 0.5).ceil().max(0.0);
        let hi_m = ((y + radius - self.origin.1) / self.cell - 0.5).floor();
        let lo_n = ((x - radius - self.origin.0) / self.cell - 0.5).ceil().max(0.0);
        let hi_n = ((x + radius - self.origin.0) / self.cell - 0.5).floor();
        if hi_m < 0.0 || hi_n < 0.0 {
            return;
        }
        let hi_m = hi_m.min((self.rows - 1) as f64) as usize;
        let hi_n = hi_n.min((self.cols - 1) as f64) as usize;
        let (lo_m, lo_n) = (lo_m as usize, lo_n as usize);
        for m in lo_m..=hi_m {
            let cy = self.origin.1 + (m as f64 + 0.5) * self.cell;
            let dy2 = (cy - y) * (cy - y);
            if dy2 > r2 {
                continue;
            }
            for n in lo_n..=hi_n {
                let cx = self.origin.0 + (n as f64 + 0.5) * self.cell;
                let d2 = dy2 + (cx - x) * (cx - x);
                if d2 <= r2 {
                    f((m, n), d2.sqrt());
                }
            }
        }
    }

    /// Offsets `(dm, dn)` of all cells whose centers lie within `radius` of
    /// the center of a reference cell, independent of grid bounds.
    pub fn disk_offsets(&self, radius: f64) -> Vec<(i64, i64)> {
        let k = (radius / self.cell).floor() as i64 + 1;
        let r2 = radius * radius;
        let mut out = Vec::new();
        for dm in -k..=k {
            for dn in -k..=k {
                let d2 = ((dm * dm + dn * dn) as f64) * self.cell * self.cell;
                if d2 <= r2 {
                    out.push((dm, dn));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disk_scan_matches_exhaustive() {
        let g = GridGeometry::new(20, 20, 10.0, (0.0, 0.0));
        for &(x, y, r) in &[(55.0, 47.0, 33.0), (0.0, 0.0, 50.0), (199.0, 3.0, 71.5), (-30.0, 100.0, 45.0)] {
            let mut fast = Vec::new();
            g.for_each_in_disk(x, y, r, |c, _| fast.push(c));
            let mut slow = Vec::new();
            for m in 0..20 {
                for n in 0..20 {
                    let (cx, cy) = g.center((m, n));
                    if (cx - x).hypot(cy - y) <= r {
                        slow.push((m, n));
                    }
                }
            }
            assert_eq!(fast, slow, "disk at ({x},{y}) r={r}");
        }
    }

    #[test]
    fn cell_lookup() {
        let g = GridGeometry::new(3, 4, 20.0, (0.0, 0.0));
        assert_eq!(g.cell_of(25.0, 45.0), Some((2, 1)));
        assert_eq!(g.cell_of(-1.0, 5.0), None);
        assert_eq!(g.cell_of(81.0, 5.0), None);
        assert_eq!(g.clamped_cell(500.0, -3.0), (0, 3));
    }
}
