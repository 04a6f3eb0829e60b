use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Vertical profile `y(x)` sampled on a uniform grid, metres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeCurve {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl ShapeCurve {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::GridMismatch {
                left: x.len(),
                right: y.len(),
            });
        }
        if x.len() < 2 {
            return Err(Error::InvalidParams(
                "a shape needs at least two nodes".into(),
            ));
        }
        if y.iter().chain(&x).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams(
                "shape contains non-finite values".into(),
            ));
        }
        Ok(Self { x, y })
    }

    /// Flat profile on the given grid.
    pub fn flat(x: Vec<f64>) -> Self {
        let y = vec![0.0; x.len()];
        Self { x, y }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn length(&self) -> f64 {
        self.x[self.x.len() - 1] - self.x[0]
    }

    pub fn peak(&self) -> f64 {
        self.y.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn same_grid(&self, other: &ShapeCurve) -> Result<()> {
        if self.len() != other.len()
            || self
                .x
                .iter()
                .zip(&other.x)
                .any(|(a, b)| (a - b).abs() > 1e-9)
        {
            return Err(Error::GridMismatch {
                left: self.len(),
                right: other.len(),
            });
        }
        Ok(())
    }

    /// Linear interpolation at `x` (clamped to the end values outside).
    pub fn interpolate(&self, x: f64) -> f64 {
        interpolate(&self.x, &self.y, x)
    }

    /// Resample onto a new grid by linear interpolation.
    pub fn resample(&self, grid: &[f64]) -> ShapeCurve {
        let y = grid.iter().map(|&g| self.interpolate(g)).collect();
        ShapeCurve {
            x: grid.to_vec(),
            y,
        }
    }

    /// Node-wise sum.
    pub fn offset_by(&self, dy: &[f64]) -> Result<ShapeCurve> {
        if dy.len() != self.len() {
            return Err(Error::GridMismatch {
                left: self.len(),
                right: dy.len(),
            });
        }
        let y = self.y.iter().zip(dy).map(|(a, b)| a + b).collect();
        Ok(ShapeCurve {
            x: self.x.clone(),
            y,
        })
    }

    /// Write as `x_cm,y_cm` CSV.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x_cm,y_cm")?;
        for (x, y) in self.x.iter().zip(&self.y) {
            writeln!(w, "{},{}", x * 100.0, y * 100.0)?;
        }
        Ok(())
    }

    /// Read an `x_cm,y_cm` CSV (header required). The grid is whatever the
    /// file holds; use [`ShapeCurve::resample`] to move it onto a model grid.
    pub fn read_csv<R: BufRead>(r: R, origin: &std::path::Path) -> Result<ShapeCurve> {
        let rows = crate::io::read_two_column_csv(r, origin)?;
        let parse_err = |message: String| Error::Parse {
            path: origin.to_path_buf(),
            message,
        };
        if rows.len() < 2 {
            return Err(parse_err("need at least two rows".into()));
        }
        if rows.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(parse_err("x must be strictly increasing".into()));
        }
        let (x, y) = rows
            .into_iter()
            .map(|(a, b)| (a / 100.0, b / 100.0))
            .unzip();
        ShapeCurve::new(x, y)
    }
}

pub(crate) fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let hi = xs.partition_point(|&k| k <= x);
    let lo = hi - 1;
    if xs[lo] == x {
        return ys[lo];
    }
    let t = (x - xs[lo]) / (xs[hi] - xs[lo]);
    ys[lo] + t * (ys[hi] - ys[lo])
}

/// Horizontal foreshortening of a bent body, `∫ (y')^2 / 2 dx`, in metres.
///
/// Integrates the slope of the piecewise-linear interpolant segment by
/// segment, which is exact for that interpolant.
pub fn chord_shortening(shape: &ShapeCurve) -> f64 {
    shape
        .x
        .windows(2)
        .zip(shape.y.windows(2))
        .map(|(x, y)| {
            let h = x[1] - x[0];
            let slope = (y[1] - y[0]) / h;
            0.5 * slope * slope * h
        })
        .sum()
}

/// Mean squared height difference over the nodes, in cm².
pub fn shape_mse(a: &ShapeCurve, b: &ShapeCurve) -> Result<f64> {
    a.same_grid(b)?;
    let sum: f64 =
        a.y.iter()
            .zip(&b.y)
            .map(|(ya, yb)| {
                let d = (ya - yb) * 100.0;
                d * d
            })
            .sum();
    Ok(sum / a.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, length: f64) -> Vec<f64> {
        (0..n).map(|i| length * i as f64 / (n - 1) as f64).collect()
    }

    fn parabola(h: f64, length: f64, n: usize) -> ShapeCurve {
        let x = grid(n, length);
        let y = x
            .iter()
            .map(|&x| 4.0 * h * x * (length - x) / (length * length))
            .collect();
        ShapeCurve::new(x, y).unwrap()
    }

    #[test]
    fn flat_has_no_shortening() {
        assert_eq!(chord_shortening(&ShapeCurve::flat(grid(201, 0.5))), 0.0);
    }

    #[test]
    fn parabolic_arch_matches_closed_form() {
        // 8 h^2 / (3 L) with h = 1.35 cm over 50 cm
        let exact = 8.0 * 0.0135f64.powi(2) / (3.0 * 0.5);
        assert!((exact - 9.72e-4).abs() < 1e-9);
        let d = chord_shortening(&parabola(0.0135, 0.5, 201));
        assert!((d - exact).abs() / exact < 1e-3, "{d} vs {exact}");
    }

    #[test]
    fn shortening_scales_quadratically() {
        let d1 = chord_shortening(&parabola(0.01, 0.5, 201));
        let d2 = chord_shortening(&parabola(0.02, 0.5, 201));
        assert!((d2 / d1 - 4.0).abs() < 0.04);
    }

    #[test]
    fn mse_of_constant_offsets() {
        let x = grid(201, 0.5);
        let a = ShapeCurve::flat(x.clone());
        assert_eq!(shape_mse(&a, &a).unwrap(), 0.0);
        let b = ShapeCurve::new(x.clone(), vec![0.001; 201]).unwrap();
        assert!((shape_mse(&a, &b).unwrap() - 0.01).abs() < 1e-12);
        let c = ShapeCurve::new(x, vec![0.00224; 201]).unwrap();
        assert!((shape_mse(&a, &c).unwrap() - 0.05).abs() < 2e-4);
    }

    #[test]
    fn mse_rejects_grid_mismatch() {
        let a = ShapeCurve::flat(grid(201, 0.5));
        let b = ShapeCurve::flat(grid(101, 0.5));
        assert!(matches!(shape_mse(&a, &b), Err(Error::GridMismatch { .. })));
    }

    #[test]
    fn csv_round_trip_in_centimetres() {
        let s = parabola(0.0135, 0.5, 51);
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x_cm,y_cm\n"));
        let back = ShapeCurve::read_csv(&buf[..], std::path::Path::new("mem")).unwrap();
        for (a, b) in s.y.iter().zip(&back.y) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn resample_reproduces_knots() {
        let s = parabola(0.01, 0.5, 51);
        let r = s.resample(&s.x);
        assert_eq!(r.y, s.y);
    }
}
