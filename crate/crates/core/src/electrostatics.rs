//! Induced island charge from charges landing in the island-groundplane gap.
//!
//! One Laplace solve with the island at unit potential and everything else
//! grounded gives, by reciprocity, the induced island charge `−q·φ(r)` for a
//! point charge `q` at any position `r`.

use std::collections::VecDeque;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::io::write_csv_file;
use crate::model::alias_charge_delta;
use crate::noise::JumpSizeSampler;
use crate::rng::{stream, Substream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cell {
    Island,
    Ground,
    Gap,
}

/// Planar geometry in µm: a rectangular island centred in a rectangular
/// cavity cut into the groundplane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySpec {
    pub island_width_um: f64,
    pub island_length_um: f64,
    pub gap_um: f64,
    pub pitch_um: f64,
}

impl Default for GeometrySpec {
    fn default() -> Self {
        Self {
            island_width_um: 40.0,
            island_length_um: 180.0,
            gap_um: 20.0,
            pitch_um: 1.0,
        }
    }
}

impl GeometrySpec {
    pub fn build(&self) -> Result<GeometryGrid> {
        GeometryGrid::planar(
            self.island_width_um,
            self.island_length_um,
            self.gap_um,
            self.pitch_um,
        )
    }
}

/// Node grid with spacing `h`; node (i, j) sits at (i·h, j·h).
#[derive(Debug, Clone, PartialEq)]
pub struct GeometryGrid {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub mask: Vec<Cell>,
}

impl GeometryGrid {
    pub fn new(nx: usize, ny: usize, h: f64, mask: Vec<Cell>) -> Result<Self> {
        let g = Self { nx, ny, h, mask };
        g.validate()?;
        Ok(g)
    }

    /// Island of `width × length` surrounded by a gap of `gap` on every side,
    /// with the groundplane forming the outer boundary.
    pub fn planar(width: f64, length: f64, gap: f64, h: f64) -> Result<Self> {
        if !(h > 0.0 && width > 0.0 && length > 0.0 && gap > 0.0) {
            return Err(Error::InvalidGeometry(
                "dimensions and pitch must be positive".into(),
            ));
        }
        let cells = |len: f64| -> Result<usize> {
            let n = len / h;
            if (n - n.round()).abs() > 1e-9 {
                return Err(Error::InvalidGeometry(format!(
                    "{len} µm is not a multiple of the {h} µm pitch"
                )));
            }
            Ok(n.round() as usize)
        };
        let (w, l, g) = (cells(width)?, cells(length)?, cells(gap)?);
        let nx = w + 2 * g + 1;
        let ny = l + 2 * g + 1;
        let mut mask = vec![Cell::Gap; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let island = (g..=g + w).contains(&i) && (g..=g + l).contains(&j);
                let ground = i == 0 || j == 0 || i == nx - 1 || j == ny - 1;
                mask[j * nx + i] = if island {
                    Cell::Island
                } else if ground {
                    Cell::Ground
                } else {
                    Cell::Gap
                };
            }
        }
        Self::new(nx, ny, h, mask)
    }

    /// Island column at x = 0 and ground column at x = `gap`, insulating
    /// (reflecting) edges at the top and bottom: the 1D capacitor.
    pub fn parallel_strip(gap_cells: usize, ny: usize, h: f64) -> Result<Self> {
        let nx = gap_cells + 1;
        let mut mask = vec![Cell::Gap; nx * ny];
        for j in 0..ny {
            mask[j * nx] = Cell::Island;
            mask[j * nx + nx - 1] = Cell::Ground;
        }
        Self::new(nx, ny, h, mask)
    }

    pub fn cell(&self, i: usize, j: usize) -> Cell {
        self.mask[j * self.nx + i]
    }

    fn neighbours(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        let (i, j) = (idx % self.nx, idx / self.nx);
        let left = (i > 0).then(|| idx - 1);
        let right = (i + 1 < self.nx).then(|| idx + 1);
        let down = (j > 0).then(|| idx - self.nx);
        let up = (j + 1 < self.ny).then(|| idx + self.nx);
        [left, right, down, up].into_iter().flatten()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidGeometry(m.into()));
        if self.nx < 2 || self.ny < 1 || !(self.h > 0.0) || self.mask.len() != self.nx * self.ny {
            return bad("grid dimensions do not match the mask");
        }
        if !self.mask.contains(&Cell::Island) {
            return bad("mask has no island nodes");
        }
        if !self.mask.contains(&Cell::Ground) {
            return bad("mask has no ground nodes");
        }
        for (idx, &c) in self.mask.iter().enumerate() {
            if c == Cell::Island && self.neighbours(idx).any(|n| self.mask[n] == Cell::Ground) {
                return bad("island touches ground; the gap must be at least one cell");
            }
        }
        // every gap region must see an electrode, otherwise its potential floats
        let mut anchored = vec![false; self.mask.len()];
        let mut queue: VecDeque<usize> = (0..self.mask.len())
            .filter(|&i| self.mask[i] != Cell::Gap)
            .collect();
        for &i in &queue {
            anchored[i] = true;
        }
        while let Some(idx) = queue.pop_front() {
            for n in self.neighbours(idx) {
                if !anchored[n] {
                    anchored[n] = true;
                    queue.push_back(n);
                }
            }
        }
        if anchored.iter().any(|a| !a) {
            return bad("a gap region is not connected to any electrode");
        }
        Ok(())
    }

    fn extent(&self) -> (f64, f64) {
        ((self.nx - 1) as f64 * self.h, (self.ny - 1) as f64 * self.h)
    }

    /// Region containing (x, y) in µm: an electrode when every corner of the
    /// enclosing grid square belongs to it, gap otherwise.
    pub fn cell_at(&self, x: f64, y: f64) -> Option<Cell> {
        let (xm, ym) = self.extent();
        if !(0.0..=xm).contains(&x) || !(0.0..=ym).contains(&y) {
            return None;
        }
        let i = ((x / self.h).floor() as usize).min(self.nx - 2);
        let j = ((y / self.h).floor() as usize).min(self.ny.saturating_sub(2));
        let jj = (j + 1).min(self.ny - 1);
        let corners = [
            self.cell(i, j),
            self.cell(i + 1, j),
            self.cell(i, jj),
            self.cell(i + 1, jj),
        ];
        Some(if corners.iter().all(|&c| c == corners[0]) {
            corners[0]
        } else {
            Cell::Gap
        })
    }

    pub fn gap_area_um2(&self) -> f64 {
        self.mask.iter().filter(|&&c| c == Cell::Gap).count() as f64 * self.h * self.h
    }
}

/// Potential with the island at 1 and ground at 0.
#[derive(Debug, Clone)]
pub struct PotentialField {
    pub grid: GeometryGrid,
    pub phi: Vec<f64>,
    pub iterations: usize,
    pub max_residual: f64,
}

/// Conjugate gradients on the 5-point Laplacian of the gap nodes. Edges of the
/// array that are not electrodes are insulating. Converged when the largest
/// nodal residual `deg·φ − Σφ_nb` is at most `tol`.
pub fn solve_laplace(grid: &GeometryGrid, tol: f64, max_iter: usize) -> Result<PotentialField> {
    grid.validate()?;
    if !(tol > 0.0) {
        return Err(invalid("solver tolerance must be positive"));
    }
    let n_nodes = grid.mask.len();
    let mut unknown = vec![usize::MAX; n_nodes];
    let gap: Vec<usize> = (0..n_nodes)
        .filter(|&i| grid.mask[i] == Cell::Gap)
        .collect();
    for (k, &idx) in gap.iter().enumerate() {
        unknown[idx] = k;
    }
    let m = gap.len();
    let mut diag = vec![0.0; m];
    let mut b = vec![0.0; m];
    let mut links: Vec<Vec<usize>> = vec![Vec::new(); m];
    for (k, &idx) in gap.iter().enumerate() {
        for nb in grid.neighbours(idx) {
            diag[k] += 1.0;
            match grid.mask[nb] {
                Cell::Island => b[k] += 1.0,
                Cell::Ground => {}
                Cell::Gap => links[k].push(unknown[nb]),
            }
        }
    }
    let apply = |x: &[f64], out: &mut [f64]| {
        for k in 0..m {
            out[k] = diag[k] * x[k] - links[k].iter().map(|&q| x[q]).sum::<f64>();
        }
    };
    let max_abs = |v: &[f64]| v.iter().fold(0.0_f64, |a, &x| a.max(x.abs()));
    let dot = |a: &[f64], c: &[f64]| a.iter().zip(c).map(|(x, y)| x * y).sum::<f64>();

    // Jacobi-preconditioned CG from φ = ½
    let mut x = vec![0.5; m];
    let mut ax = vec![0.0; m];
    apply(&x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(ri, d)| ri / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; m];
    let mut iterations = 0;
    let mut residual = max_abs(&r);
    while residual > tol && iterations < max_iter {
        apply(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for k in 0..m {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
            z[k] = r[k] / diag[k];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for k in 0..m {
            p[k] = z[k] + beta * p[k];
        }
        iterations += 1;
        residual = max_abs(&r);
        if residual <= tol {
            // the recursive residual drifts; confirm against the true one
            apply(&x, &mut ax);
            residual = b
                .iter()
                .zip(&ax)
                .map(|(bi, ai)| (bi - ai).abs())
                .fold(0.0, f64::max);
        }
    }
    if residual > tol {
        return Err(Error::NotConverged {
            iterations,
            residual,
        });
    }
    let mut phi: Vec<f64> = grid
        .mask
        .iter()
        .map(|c| if *c == Cell::Island { 1.0 } else { 0.0 })
        .collect();
    for (k, &idx) in gap.iter().enumerate() {
        phi[idx] = x[k];
    }
    log::debug!("laplace: {m} unknowns, {iterations} CG iterations, residual {residual:.2e}");
    Ok(PotentialField {
        grid: grid.clone(),
        phi,
        iterations,
        max_residual: residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InducedCharge {
    pub charge_e: f64,
    /// Set when the position lies on an electrode rather than in the gap.
    pub on_electrode: Option<Cell>,
}

impl PotentialField {
    /// Bilinear interpolation of φ at (x, y) in µm.
    pub fn potential_at(&self, x: f64, y: f64) -> Result<f64> {
        let g = &self.grid;
        let (xm, ym) = g.extent();
        if !(0.0..=xm).contains(&x) || !(0.0..=ym).contains(&y) {
            return Err(invalid(format!("position ({x}, {y}) µm outside the grid")));
        }
        let (u, v) = (x / g.h, y / g.h);
        let i = (u.floor() as usize).min(g.nx.saturating_sub(2));
        let j = if g.ny > 1 {
            (v.floor() as usize).min(g.ny - 2)
        } else {
            0
        };
        let (fx, fy) = (u - i as f64, if g.ny > 1 { v - j as f64 } else { 0.0 });
        let at = |ii: usize, jj: usize| self.phi[jj.min(g.ny - 1) * g.nx + ii];
        Ok((1.0 - fx) * (1.0 - fy) * at(i, j)
            + fx * (1.0 - fy) * at(i + 1, j)
            + (1.0 - fx) * fy * at(i, j + 1)
            + fx * fy * at(i + 1, j + 1))
    }
}

/// Island charge induced by a +1e charge at (x, y) µm.
pub fn induced_charge(field: &PotentialField, x: f64, y: f64) -> Result<InducedCharge> {
    match field.grid.cell_at(x, y) {
        None => Err(invalid(format!("position ({x}, {y}) µm outside the grid"))),
        Some(Cell::Island) => Ok(InducedCharge {
            charge_e: -1.0,
            on_electrode: Some(Cell::Island),
        }),
        Some(Cell::Ground) => Ok(InducedCharge {
            charge_e: 0.0,
            on_electrode: Some(Cell::Ground),
        }),
        Some(Cell::Gap) => Ok(InducedCharge {
            charge_e: -field.potential_at(x, y)?,
            on_electrode: None,
        }),
    }
}

/// Uniform gap position and random polarity; returns the unaliased induced
/// charge in [−1, 1] e.
fn draw_induced<R: Rng + ?Sized>(field: &PotentialField, rng: &mut R) -> f64 {
    let (xm, ym) = field.grid.extent();
    loop {
        let x = rng.random::<f64>() * xm;
        let y = rng.random::<f64>() * ym;
        if field.grid.cell_at(x, y) != Some(Cell::Gap) {
            continue;
        }
        let polarity = if rng.random::<bool>() { 1.0 } else { -1.0 };
        // potential_at cannot fail inside the extent
        return -polarity * field.potential_at(x, y).unwrap_or(0.0);
    }
}

/// Impingement-size sampler for [`crate::noise::synth_jumps`].
#[derive(Debug, Clone, Copy)]
pub struct InducedChargeSampler<'a> {
    pub field: &'a PotentialField,
}

impl JumpSizeSampler for InducedChargeSampler<'_> {
    fn sample_size(&self, rng: &mut dyn rand::RngCore) -> f64 {
        draw_induced(self.field, rng)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpSizeDistribution {
    /// Aliased induced charges in e.
    pub samples: Vec<f64>,
    pub geometry: String,
    pub seed: u64,
}

impl JumpSizeDistribution {
    pub fn fraction_above(&self, threshold_e: f64) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples
            .iter()
            .filter(|v| v.abs() > threshold_e)
            .count() as f64
            / self.samples.len() as f64
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct Row {
            value_e: f64,
        }
        write_csv_file(
            path,
            &["value_e"],
            self.samples.iter().map(|&value_e| Row { value_e }),
        )
    }
}

pub fn sample_jump_distribution(
    field: &PotentialField,
    n_samples: usize,
    seed: u64,
) -> JumpSizeDistribution {
    let mut rng = stream(seed, Substream::Geometry);
    let samples = (0..n_samples)
        .map(|_| alias_charge_delta(draw_induced(field, &mut rng)))
        .collect();
    let g = &field.grid;
    JumpSizeDistribution {
        samples,
        geometry: format!("{}x{} nodes at {} um", g.nx, g.ny, g.h),
        seed,
    }
}

/// Flux (per cm²·s) that produces `jump_rate` events per second on `area_cm2`.
pub fn rate_to_flux(jump_rate: f64, area_cm2: f64) -> Result<f64> {
    if !(area_cm2 > 0.0) || !(jump_rate >= 0.0) {
        return Err(invalid("rate must be ≥ 0 and area > 0"));
    }
    Ok(jump_rate / area_cm2)
}

pub fn flux_to_rate(flux: f64, area_cm2: f64) -> f64 {
    flux * area_cm2
}

/// Probability that at least one impingement falls within a scan-to-scan window.
pub fn jump_weight(rate: f64, window_s: f64) -> f64 {
    1.0 - (-rate * window_s).exp()
}

/// Probability per bin on [−0.5, 0.5) e.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedCurve {
    pub centers: Vec<f64>,
    pub probability: Vec<f64>,
    pub bin_width: f64,
}

impl BinnedCurve {
    pub fn density(&self) -> Vec<f64> {
        self.probability
            .iter()
            .map(|p| p / self.bin_width)
            .collect()
    }

    pub fn expected_counts(&self, n: usize) -> Vec<f64> {
        self.probability.iter().map(|p| p * n as f64).collect()
    }

    pub fn write_csv(&self, path: &Path, n: usize) -> Result<()> {
        #[derive(Serialize)]
        struct Row {
            bin_center_e: f64,
            count: f64,
        }
        let rows =
            self.centers
                .iter()
                .zip(self.expected_counts(n))
                .map(|(&bin_center_e, count)| Row {
                    bin_center_e,
                    count,
                });
        write_csv_file(path, &["bin_center_e", "count"], rows)
    }
}

pub fn bin_index(value_e: f64, n_bins: usize) -> usize {
    let v = alias_charge_delta(value_e);
    (((v + 0.5) * n_bins as f64).floor() as usize).min(n_bins - 1)
}

/// Scan-to-scan increment histogram: with probability `1 − jump_weight` only
/// fit noise (Gaussian of `gaussian_width` on each increment), otherwise an
/// aliased impingement size blurred by the same Gaussian.
pub fn histogram_model(
    dist: &JumpSizeDistribution,
    gaussian_width: f64,
    jump_weight: f64,
    n_bins: usize,
) -> Result<BinnedCurve> {
    if n_bins == 0 || !(gaussian_width > 0.0) || !(0.0..=1.0).contains(&jump_weight) {
        return Err(invalid(
            "histogram needs bins, a positive width and a weight in [0, 1]",
        ));
    }
    if jump_weight > 0.0 && dist.samples.is_empty() {
        return Err(invalid(
            "non-zero jump weight with an empty size distribution",
        ));
    }
    let width = 1.0 / n_bins as f64;
    let centers: Vec<f64> = (0..n_bins)
        .map(|k| -0.5 + (k as f64 + 0.5) * width)
        .collect();
    // Gaussian mass per bin offset, wrapped onto the 1e circle
    let cdf = |x: f64| 0.5 * (1.0 + libm::erf(x / (gaussian_width * std::f64::consts::SQRT_2)));
    let kernel: Vec<f64> = (0..n_bins)
        .map(|k| {
            let off = k as f64 * width;
            (-3..=3)
                .map(|img| {
                    let c = off + img as f64;
                    cdf(c + 0.5 * width) - cdf(c - 0.5 * width)
                })
                .sum()
        })
        .collect();
    let mut tail = vec![0.0; n_bins];
    for &v in &dist.samples {
        tail[bin_index(v, n_bins)] += 1.0 / dist.samples.len() as f64;
    }
    let mut probability = vec![0.0; n_bins];
    for (k, p) in probability.iter_mut().enumerate() {
        let lo = -0.5 + k as f64 * width;
        let core: f64 = (-3..=3)
            .map(|img| cdf(lo + width + img as f64) - cdf(lo + img as f64))
            .sum();
        let blurred: f64 = tail
            .iter()
            .enumerate()
            .map(|(q, t)| t * kernel[(k + n_bins - q) % n_bins])
            .sum();
        *p = (1.0 - jump_weight) * core + jump_weight * blurred;
    }
    Ok(BinnedCurve {
        centers,
        probability,
        bin_width: width,
    })
}
