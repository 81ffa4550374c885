//! Wigner functions and data-file export.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fock::{DensityMatrix, FockState};

/// Rectangular phase-space grid, endpoints included.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub np: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            x_min: -6.0,
            x_max: 6.0,
            nx: 201,
            p_min: -6.0,
            p_max: 6.0,
            np: 201,
        }
    }
}

impl GridSpec {
    fn axis(min: f64, max: f64, count: usize) -> Vec<f64> {
        if count == 1 {
            return vec![min];
        }
        let step = (max - min) / (count - 1) as f64;
        (0..count).map(|i| min + i as f64 * step).collect()
    }

    pub fn x_values(&self) -> Vec<f64> {
        Self::axis(self.x_min, self.x_max, self.nx)
    }

    pub fn p_values(&self) -> Vec<f64> {
        Self::axis(self.p_min, self.p_max, self.np)
    }

    fn validate(&self) -> Result<()> {
        let finite = [self.x_min, self.x_max, self.p_min, self.p_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.x_max < self.x_min || self.p_max < self.p_min {
            return Err(invalid("grid", "bounds must be finite with min <= max"));
        }
        if self.nx == 0 || self.np == 0 {
            return Err(invalid("grid", "need at least one point per axis"));
        }
        Ok(())
    }

    /// Fails unless both quadrature extents reach `5 + 2 sqrt(<n>)`.
    pub fn check_covers(&self, mean_photon_number: f64) -> Result<()> {
        let required = 5.0 + 2.0 * mean_photon_number.max(0.0).sqrt();
        let extent = (self.x_max - self.x_min).min(self.p_max - self.p_min);
        if extent < required {
            return Err(Error::GridTooSmall { extent, required });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WignerGrid {
    pub x_values: Vec<f64>,
    pub p_values: Vec<f64>,
    /// `values[i][j] = W(x_values[i], p_values[j])`.
    pub values: Vec<Vec<f64>>,
}

impl WignerGrid {
    /// Riemann sum of `W dx dp`.
    pub fn integral(&self) -> f64 {
        let dx = spacing(&self.x_values);
        let dp = spacing(&self.p_values);
        self.values.iter().flatten().sum::<f64>() * dx * dp
    }

    pub fn min(&self) -> f64 {
        self.values
            .iter()
            .flatten()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .flatten()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `int W dp` at each `x`.
    pub fn x_marginal(&self) -> Vec<f64> {
        let dp = spacing(&self.p_values);
        self.values
            .iter()
            .map(|row| row.iter().sum::<f64>() * dp)
            .collect()
    }
}

fn spacing(axis: &[f64]) -> f64 {
    if axis.len() < 2 {
        1.0
    } else {
        axis[1] - axis[0]
    }
}

/// Wigner function with `x = (a + a^dag)/sqrt(2)`, normalized to unit integral.
pub fn wigner_density(rho: &DensityMatrix, grid: &GridSpec) -> Result<WignerGrid> {
    grid.validate()?;
    grid.check_covers(rho.mean_photon_number())?;
    wigner_density_unchecked(rho, grid)
}

pub fn wigner(state: &FockState, grid: &GridSpec) -> Result<WignerGrid> {
    wigner_density(&state.to_density(), grid)
}

/// As [`wigner_density`] without the grid-extent check.
pub fn wigner_density_unchecked(rho: &DensityMatrix, grid: &GridSpec) -> Result<WignerGrid> {
    grid.validate()?;
    let x_values = grid.x_values();
    let p_values = grid.p_values();
    let kernel = WignerKernel::new(rho);
    let values = x_values
        .par_iter()
        .map(|&x| p_values.iter().map(|&p| kernel.eval(x, p)).collect())
        .collect();
    Ok(WignerGrid {
        x_values,
        p_values,
        values,
    })
}

/// Expansion `W = sum_{m,n} rho_{mn} W_{mn}` over Fock-basis Wigner functions
///
/// ```text
/// W_{mn}(x, p) = (-1)^n / pi * sqrt(n!/m!) * (sqrt(2) (x - i p))^{m-n}
///                * e^{-r^2} L_n^{(m-n)}(2 r^2),     m >= n,  r^2 = x^2 + p^2
/// ```
/// with `W_{nm} = conj(W_{mn})`.
struct WignerKernel {
    rho: Array2<C64>,
    cutoff: usize,
}

impl WignerKernel {
    fn new(rho: &DensityMatrix) -> Self {
        // drop the empty tail of the basis
        let d = rho.dim();
        let mut cutoff = d - 1;
        while cutoff > 0 && (0..=cutoff).all(|k| rho.elements()[(cutoff, k)].norm() < 1e-300) {
            cutoff -= 1;
        }
        Self {
            rho: rho.elements().clone(),
            cutoff,
        }
    }

    fn eval(&self, x: f64, p: f64) -> f64 {
        let r2 = x * x + p * p;
        let y = 2.0 * r2;
        let z = C64::new(x, -p) * std::f64::consts::SQRT_2;
        let gauss = (-r2).exp() / std::f64::consts::PI;
        let mut total = 0.0;
        let mut z_pow = C64::new(1.0, 0.0);
        for k in 0..=self.cutoff {
            // Laguerre L_n^{(k)}(y) by upward recurrence
            let kf = k as f64;
            let mut l_prev = 0.0;
            let mut l_curr = 1.0;
            // sqrt(n!/(n+k)!) built incrementally
            let mut ratio = 1.0 / (1..=k).map(|j| j as f64).product::<f64>().sqrt();
            for n in 0..=(self.cutoff - k) {
                let m = n + k;
                let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                let w = z_pow * (sign * ratio * l_curr);
                let term = self.rho[(m, n)] * w;
                total += if k == 0 { term.re } else { 2.0 * term.re };
                let nf = n as f64;
                let l_next = ((2.0 * nf + 1.0 + kf - y) * l_curr - (nf + kf) * l_prev) / (nf + 1.0);
                l_prev = l_curr;
                l_curr = l_next;
                ratio *= ((nf + 1.0) / (nf + 1.0 + kf)).sqrt();
            }
            z_pow *= z;
        }
        gauss * total
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
}

fn check_finite(values: impl IntoIterator<Item = f64>) -> Result<()> {
    if values.into_iter().all(f64::is_finite) {
        Ok(())
    } else {
        Err(invalid("points", "non-finite value"))
    }
}

/// Writes `(x, y)` pairs with a two-column header.
///
/// Numbers use the shortest decimal form that parses back to the same
/// `f64`, so files round-trip bit-exactly.
pub fn export_curve(
    points: &[(f64, f64)],
    header: [&str; 2],
    format: Format,
    path: &Path,
) -> Result<()> {
    check_finite(points.iter().flat_map(|&(x, y)| [x, y]))?;
    match format {
        Format::Csv => {
            let rows: Vec<Vec<f64>> = points.iter().map(|&(x, y)| vec![x, y]).collect();
            write_csv(&header, &rows, path)
        }
        Format::Json => {
            let pairs: Vec<[f64; 2]> = points.iter().map(|&(x, y)| [x, y]).collect();
            write_json(&pairs, path)
        }
    }
}

/// Writes serializable rows: CSV with a header taken from the field names,
/// or a JSON array of objects.
pub fn export_records<T: Serialize>(records: &[T], format: Format, path: &Path) -> Result<()> {
    match format {
        Format::Csv => {
            let csv_err = |source| Error::Csv {
                path: path.to_path_buf(),
                source,
            };
            let mut writer = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(create(path)?);
            for record in records {
                writer.serialize(record).map_err(csv_err)?;
            }
            writer.flush().map_err(|source| Error::Io {
                path: path.to_path_buf(),
                source,
            })
        }
        Format::Json => write_json(records, path),
    }
}

/// CSV rows `x,p,w` or JSON `{x_values, p_values, values}`.
pub fn export_grid(grid: &WignerGrid, format: Format, path: &Path) -> Result<()> {
    match format {
        Format::Csv => {
            let rows: Vec<Vec<f64>> = grid
                .x_values
                .iter()
                .zip(&grid.values)
                .flat_map(|(&x, row)| {
                    grid.p_values
                        .iter()
                        .zip(row)
                        .map(move |(&p, &w)| vec![x, p, w])
                })
                .collect();
            write_csv(&["x", "p", "w"], &rows, path)
        }
        Format::Json => write_json(grid, path),
    }
}

fn write_csv<S: AsRef<str>>(header: &[S], rows: &[Vec<f64>], path: &Path) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(create(path)?);
    writer
        .write_record(header.iter().map(|h| h.as_ref()))
        .map_err(csv_err)?;
    for row in rows {
        writer.serialize(row).map_err(csv_err)?;
    }
    writer.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub(crate) fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    out.write_all(b"\n")
        .and_then(|_| out.flush())
        .map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
}

/// Reads back a numeric CSV written by this module.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(String::from)
        .collect();
    let rows = reader
        .deserialize()
        .collect::<std::result::Result<Vec<Vec<f64>>, _>>()
        .map_err(csv_err)?;
    Ok((header, rows))
}
