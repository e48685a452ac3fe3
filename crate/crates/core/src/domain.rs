//! Study region, point patterns and the two-resolution block partition.
//!
//! A [`BlockPartition`] tiles the domain with `M` coarse blocks. Each block is
//! further split into a sub-grid of representative points; all of those points
//! together form the fine grid that both the moment quadrature and the
//! grid-approximated likelihood use. Fine points sit on a regular lattice, so
//! pairwise offsets can be expressed in integer lattice steps.

use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned rectangle `[x_min, x_max) × [y_min, y_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        let all_finite = [x_min, x_max, y_min, y_max].iter().all(|v| v.is_finite());
        if !all_finite || x_min >= x_max || y_min >= y_max {
            return Err(Error::InvalidDomain(format!(
                "need x_min < x_max and y_min < y_max, got [{x_min}, {x_max}] x [{y_min}, {y_max}]"
            )));
        }
        Ok(Self { x_min, x_max, y_min, y_max })
    }

    pub fn unit() -> Self {
        Self { x_min: 0.0, x_max: 1.0, y_min: 0.0, y_max: 1.0 }
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Closed containment test (the outer boundary belongs to the rectangle).
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }
}

/// Inside-indicator raster over the bounding rectangle of a domain.
///
/// Cell `(row, col)` covers the `col`-th column from the left and the `row`-th
/// row from the bottom; storage is row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mask {
    pub rows: usize,
    pub cols: usize,
    pub inside: Vec<bool>,
}

impl Mask {
    pub fn new(rows: usize, cols: usize, inside: Vec<bool>) -> Result<Self> {
        if rows == 0 || cols == 0 || inside.len() != rows * cols {
            return Err(Error::InvalidDomain(format!(
                "mask of {rows}x{cols} needs {} cells, got {}",
                rows * cols,
                inside.len()
            )));
        }
        if !inside.iter().any(|&b| b) {
            return Err(Error::InvalidDomain("mask has no inside cell".into()));
        }
        Ok(Self { rows, cols, inside })
    }

    fn fraction_inside(&self) -> f64 {
        self.inside.iter().filter(|&&b| b).count() as f64 / self.inside.len() as f64
    }
}

/// The study region: a bounding rectangle with an optional inside mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub bounds: Rect,
    pub mask: Option<Mask>,
}

impl Domain {
    pub fn rectangle(bounds: Rect) -> Self {
        Self { bounds, mask: None }
    }

    pub fn unit_square() -> Self {
        Self::rectangle(Rect::unit())
    }

    pub fn with_mask(bounds: Rect, mask: Mask) -> Self {
        Self { bounds, mask: Some(mask) }
    }

    /// Area of the region, counting only inside mask cells when masked.
    pub fn area(&self) -> f64 {
        match &self.mask {
            Some(mask) => self.bounds.area() * mask.fraction_inside(),
            None => self.bounds.area(),
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        if !self.bounds.contains(x, y) {
            return false;
        }
        match &self.mask {
            Some(mask) => {
                let col = cell_index(x, self.bounds.x_min, self.bounds.width(), mask.cols);
                let row = cell_index(y, self.bounds.y_min, self.bounds.height(), mask.rows);
                mask.inside[row * mask.cols + col]
            }
            None => true,
        }
    }
}

/// Index of the half-open cell holding `v`; the closing edge maps to the last cell.
fn cell_index(v: f64, origin: f64, extent: f64, n: usize) -> usize {
    let idx = ((v - origin) / extent * n as f64).floor();
    if idx < 0.0 {
        0
    } else {
        (idx as usize).min(n - 1)
    }
}

/// Observed event locations with zero-based component labels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointPattern {
    pub points: Vec<[f64; 2]>,
    pub labels: Vec<usize>,
    pub n_components: usize,
}

impl PointPattern {
    pub fn new(points: Vec<[f64; 2]>, labels: Vec<usize>, n_components: usize) -> Result<Self> {
        if n_components == 0 {
            return Err(Error::Config("a pattern needs at least one component".into()));
        }
        if labels.len() != points.len() {
            return Err(Error::DimensionMismatch { expected: points.len(), got: labels.len() });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_components) {
            return Err(Error::Config(format!("label {} out of range 1..={n_components}", bad + 1)));
        }
        Ok(Self { points, labels, n_components })
    }

    /// Single-component pattern.
    pub fn unlabeled(points: Vec<[f64; 2]>) -> Self {
        let labels = vec![0; points.len()];
        Self { points, labels, n_components: 1 }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Number of points per component.
    pub fn component_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_components];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    /// Checks that every point lies inside `domain`.
    pub fn validate(&self, domain: &Domain) -> Result<()> {
        match self.points.iter().find(|p| !domain.contains(p[0], p[1])) {
            Some(p) => Err(Error::OutOfDomain(p[0], p[1])),
            None => Ok(()),
        }
    }

    /// Reads a `x,y[,label]` CSV. Labels are one-based in the file; missing
    /// labels default to 1. `n_components` is the largest label seen unless a
    /// larger value is requested.
    pub fn read_csv(path: impl AsRef<Path>, min_components: usize) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
        let headers = reader.headers()?.clone();
        let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
        let (ix, iy) = match (col("x"), col("y")) {
            (Some(ix), Some(iy)) => (ix, iy),
            _ => return Err(Error::Parse("pattern CSV needs x and y columns".into())),
        };
        let il = col("label");
        let mut points = Vec::new();
        let mut labels = Vec::new();
        for record in reader.records() {
            let record = record?;
            let x = parse_f64(&record[ix])?;
            let y = parse_f64(&record[iy])?;
            let label = match il.map(|i| record.get(i).unwrap_or("")) {
                Some(s) if !s.is_empty() => s.parse::<usize>().map_err(|_| Error::Parse(format!("bad label {s:?}")))?,
                _ => 1,
            };
            if label == 0 {
                return Err(Error::Parse("labels are one-based".into()));
            }
            points.push([x, y]);
            labels.push(label - 1);
        }
        let n_components = labels.iter().map(|l| l + 1).max().unwrap_or(1).max(min_components);
        Self::new(points, labels, n_components)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut writer = csv::Writer::from_path(path)?;
        writer.write_record(["x", "y", "label"])?;
        for (p, l) in self.points.iter().zip(&self.labels) {
            writer.write_record(&[p[0].to_string(), p[1].to_string(), (l + 1).to_string()])?;
        }
        writer.flush()?;
        Ok(())
    }
}

pub(crate) fn parse_f64(s: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| Error::Parse(format!("not a number: {s:?}")))
}

/// One coarse block of the partition.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    /// Coarse cell `(row, col)`.
    pub cell: (usize, usize),
    pub rect: Rect,
    /// Inside area; equals `rect.area()` unless the block is clipped by a mask.
    pub area: f64,
    /// Range of this block's representative points in the fine grid.
    pub points: Range<usize>,
}

/// Two-resolution partition: `M` coarse blocks, each with a sub-grid of
/// representative points.
#[derive(Debug, Clone)]
pub struct BlockPartition {
    pub domain: Domain,
    pub coarse_dims: (usize, usize),
    pub fine_dims: (usize, usize),
    pub blocks: Vec<Block>,
    /// Representative points (cell centers), block-contiguous.
    pub fine_points: Vec<[f64; 2]>,
    /// Cell area of each representative point.
    pub fine_areas: Vec<f64>,
    /// Lattice coordinates `(col, row)` of each representative point.
    pub lattice: Vec<(usize, usize)>,
    /// Lattice spacing `(hx, hy)`.
    pub spacing: (f64, f64),
    /// Lattice extent `(n_cols, n_rows)`.
    pub lattice_dims: (usize, usize),
    coarse_to_block: Vec<Option<usize>>,
    lattice_to_fine: Vec<Option<usize>>,
}

impl BlockPartition {
    /// Builds the partition. `coarse_dims` and `fine_dims` are `(rows, cols)`;
    /// `fine_dims` is the sub-grid inside each block.
    pub fn build(domain: &Domain, coarse_dims: (usize, usize), fine_dims: (usize, usize)) -> Result<Self> {
        let (cr, cc) = coarse_dims;
        let (fr, fc) = fine_dims;
        if cr == 0 || cc == 0 || fr == 0 || fc == 0 {
            return Err(Error::Config(format!(
                "grid dims must be positive, got coarse {coarse_dims:?} fine {fine_dims:?}"
            )));
        }
        let b = domain.bounds;
        let (nx, ny) = (cc * fc, cr * fr);
        let hx = b.width() / nx as f64;
        let hy = b.height() / ny as f64;
        let cell_area = hx * hy;

        let mut blocks = Vec::new();
        let mut fine_points = Vec::new();
        let mut fine_areas = Vec::new();
        let mut lattice = Vec::new();
        let mut coarse_to_block = vec![None; cr * cc];
        let mut lattice_to_fine = vec![None; nx * ny];

        for row in 0..cr {
            for col in 0..cc {
                let start = fine_points.len();
                for j in 0..fr {
                    for i in 0..fc {
                        let li = col * fc + i;
                        let lj = row * fr + j;
                        let x = b.x_min + (li as f64 + 0.5) * hx;
                        let y = b.y_min + (lj as f64 + 0.5) * hy;
                        if !domain.contains(x, y) {
                            continue;
                        }
                        lattice_to_fine[lj * nx + li] = Some(fine_points.len());
                        fine_points.push([x, y]);
                        fine_areas.push(cell_area);
                        lattice.push((li, lj));
                    }
                }
                let end = fine_points.len();
                if end == start {
                    continue;
                }
                let rect = Rect {
                    x_min: b.x_min + (col * fc) as f64 * hx,
                    x_max: b.x_min + ((col + 1) * fc) as f64 * hx,
                    y_min: b.y_min + (row * fr) as f64 * hy,
                    y_max: b.y_min + ((row + 1) * fr) as f64 * hy,
                };
                coarse_to_block[row * cc + col] = Some(blocks.len());
                blocks.push(Block {
                    cell: (row, col),
                    rect,
                    area: (end - start) as f64 * cell_area,
                    points: start..end,
                });
            }
        }
        if blocks.is_empty() {
            return Err(Error::EmptyDomain);
        }
        Ok(Self {
            domain: domain.clone(),
            coarse_dims,
            fine_dims,
            blocks,
            fine_points,
            fine_areas,
            lattice,
            spacing: (hx, hy),
            lattice_dims: (nx, ny),
            coarse_to_block,
            lattice_to_fine,
        })
    }

    /// Number of blocks `M`.
    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Number of representative points `K`.
    pub fn n_fine(&self) -> usize {
        self.fine_points.len()
    }

    /// Block index of each representative point.
    pub fn fine_block_index(&self) -> Vec<usize> {
        let mut out = vec![0; self.n_fine()];
        for (m, block) in self.blocks.iter().enumerate() {
            for k in block.points.clone() {
                out[k] = m;
            }
        }
        out
    }

    /// Block containing `(x, y)` under the half-open (left/bottom closed) convention.
    pub fn block_of(&self, x: f64, y: f64) -> Option<usize> {
        let b = self.domain.bounds;
        if !b.contains(x, y) {
            return None;
        }
        let (cr, cc) = self.coarse_dims;
        let col = cell_index(x, b.x_min, b.width(), cc);
        let row = cell_index(y, b.y_min, b.height(), cr);
        self.coarse_to_block[row * cc + col]
    }

    /// Representative point whose fine cell contains `(x, y)`.
    pub fn fine_cell_of(&self, x: f64, y: f64) -> Option<usize> {
        let b = self.domain.bounds;
        if !b.contains(x, y) {
            return None;
        }
        let (nx, ny) = self.lattice_dims;
        let li = cell_index(x, b.x_min, b.width(), nx);
        let lj = cell_index(y, b.y_min, b.height(), ny);
        self.lattice_to_fine[lj * nx + li]
    }

    /// Per-fine-cell event counts, component-major (`ℓ·K + k`).
    pub fn fine_counts(&self, pattern: &PointPattern) -> Vec<f64> {
        let k = self.n_fine();
        let mut counts = vec![0.0; k * pattern.n_components];
        for (p, &l) in pattern.points.iter().zip(&pattern.labels) {
            if let Some(idx) = self.fine_cell_of(p[0], p[1]) {
                counts[l * k + idx] += 1.0;
            }
        }
        counts
    }
}

/// Block counts `T_m^ℓ`, stored component-major (`ℓ·M + m`).
#[derive(Debug, Clone, PartialEq)]
pub struct CountSummary {
    pub counts: Vec<u64>,
    pub n_blocks: usize,
    pub n_components: usize,
}

impl CountSummary {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64).collect()
    }

    pub fn component(&self, l: usize) -> &[u64] {
        &self.counts[l * self.n_blocks..(l + 1) * self.n_blocks]
    }
}

/// Counts the pattern's points per block and component.
pub fn count_points(pattern: &PointPattern, partition: &BlockPartition) -> CountSummary {
    let m = partition.n_blocks();
    let mut counts = vec![0u64; m * pattern.n_components];
    for (p, &l) in pattern.points.iter().zip(&pattern.labels) {
        if let Some(block) = partition.block_of(p[0], p[1]) {
            counts[l * m + block] += 1;
        }
    }
    CountSummary { counts, n_blocks: m, n_components: pattern.n_components }
}

/// Covariate values on a regular grid of cell centers; row-major from the bottom row.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateRaster {
    /// Center of the bottom-left cell.
    pub origin: [f64; 2],
    pub spacing: [f64; 2],
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<f64>,
}

impl CovariateRaster {
    pub fn new(origin: [f64; 2], spacing: [f64; 2], nx: usize, ny: usize, values: Vec<f64>) -> Result<Self> {
        if nx == 0 || ny == 0 || values.len() != nx * ny {
            return Err(Error::DimensionMismatch { expected: nx * ny, got: values.len() });
        }
        if !(spacing[0] > 0.0 && spacing[1] > 0.0) {
            return Err(Error::Config("raster spacing must be positive".into()));
        }
        Ok(Self { origin, spacing, nx, ny, values })
    }

    /// Raster whose values are `f` evaluated at the cell centers of `bounds`.
    pub fn from_fn(bounds: Rect, nx: usize, ny: usize, f: impl Fn(f64, f64) -> f64) -> Self {
        let dx = bounds.width() / nx as f64;
        let dy = bounds.height() / ny as f64;
        let origin = [bounds.x_min + 0.5 * dx, bounds.y_min + 0.5 * dy];
        let mut values = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                values.push(f(origin[0] + i as f64 * dx, origin[1] + j as f64 * dy));
            }
        }
        Self { origin, spacing: [dx, dy], nx, ny, values }
    }

    /// Extent covered by the raster cells.
    pub fn extent(&self) -> Rect {
        Rect {
            x_min: self.origin[0] - 0.5 * self.spacing[0],
            x_max: self.origin[0] + (self.nx as f64 - 0.5) * self.spacing[0],
            y_min: self.origin[1] - 0.5 * self.spacing[1],
            y_max: self.origin[1] + (self.ny as f64 - 0.5) * self.spacing[1],
        }
    }

    /// Nearest-cell-center lookup.
    pub fn value_at(&self, x: f64, y: f64) -> Result<f64> {
        let extent = self.extent();
        // Small tolerance so locations on the domain edge still resolve.
        let tol = 1e-9 * (extent.width() + extent.height());
        if x < extent.x_min - tol || x > extent.x_max + tol || y < extent.y_min - tol || y > extent.y_max + tol {
            return Err(Error::OutOfDomain(x, y));
        }
        let i = ((x - self.origin[0]) / self.spacing[0]).round().clamp(0.0, (self.nx - 1) as f64) as usize;
        let j = ((y - self.origin[1]) / self.spacing[1]).round().clamp(0.0, (self.ny - 1) as f64) as usize;
        Ok(self.values[j * self.nx + i])
    }

    /// Reads a complete regular grid from a `x,y,value` CSV.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record?;
            if record.len() < 3 {
                return Err(Error::Parse("raster CSV rows need x,y,value".into()));
            }
            rows.push([parse_f64(&record[0])?, parse_f64(&record[1])?, parse_f64(&record[2])?]);
        }
        Self::from_triples(&rows)
    }

    /// Infers the grid from unordered `(x, y, value)` triples.
    pub fn from_triples(rows: &[[f64; 3]]) -> Result<Self> {
        let unique = |idx: usize| {
            let mut v: Vec<f64> = rows.iter().map(|r| r[idx]).collect();
            v.sort_by(|a, b| a.total_cmp(b));
            v.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * (1.0 + b.abs()));
            v
        };
        let xs = unique(0);
        let ys = unique(1);
        let (nx, ny) = (xs.len(), ys.len());
        if nx < 2 || ny < 2 || nx * ny != rows.len() {
            return Err(Error::Parse(format!(
                "raster is not a complete grid: {} rows for {nx} x {ny} centers",
                rows.len()
            )));
        }
        let dx = (xs[nx - 1] - xs[0]) / (nx - 1) as f64;
        let dy = (ys[ny - 1] - ys[0]) / (ny - 1) as f64;
        let mut values = vec![f64::NAN; nx * ny];
        for r in rows {
            let i = ((r[0] - xs[0]) / dx).round() as usize;
            let j = ((r[1] - ys[0]) / dy).round() as usize;
            values[j * nx + i] = r[2];
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::Parse("raster grid is irregular".into()));
        }
        Self::new([xs[0], ys[0]], [dx, dy], nx, ny, values)
    }
}

/// Value of a covariate raster at `s` (nearest cell center).
pub fn covariate_at(raster: &CovariateRaster, s: [f64; 2]) -> Result<f64> {
    raster.value_at(s[0], s[1])
}
