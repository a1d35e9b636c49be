//! Piecewise-linear-in-time sequences of fields: controls and desired states.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{check_same_grid, lp_norm, same_grid, Field, Grid};

#[derive(Debug, Clone, PartialEq)]
pub struct FieldSeries {
    grid: Arc<Grid>,
    times: Vec<f64>,
    fields: Vec<Field>,
}

/// Uniform knots `0, T/n, ..., T`; a zero horizon gives the single knot 0.
pub fn uniform_times(t_final: f64, intervals: usize) -> Vec<f64> {
    if t_final <= 0.0 {
        return vec![0.0];
    }
    let n = intervals.max(1);
    (0..=n).map(|k| t_final * k as f64 / n as f64).collect()
}

impl FieldSeries {
    pub fn new(grid: Arc<Grid>, times: Vec<f64>, fields: Vec<Field>) -> Result<Self> {
        if times.is_empty() || times.len() != fields.len() {
            return Err(Error::Structural(format!(
                "series needs one field per time level ({} times, {} fields)",
                times.len(),
                fields.len()
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Structural(
                "series times must be strictly increasing".into(),
            ));
        }
        if let Some(k) = fields.iter().position(|f| !same_grid(f.grid(), &grid)) {
            return Err(Error::Structural(format!(
                "series level {k} lives on a different grid"
            )));
        }
        Ok(FieldSeries {
            grid,
            times,
            fields,
        })
    }

    pub fn constant_in_time(field: Field, times: Vec<f64>) -> Result<Self> {
        let grid = field.grid().clone();
        let fields = vec![field; times.len()];
        Self::new(grid, times, fields)
    }

    pub fn from_fn(grid: Arc<Grid>, times: Vec<f64>, f: impl Fn(f64, &[f64]) -> f64) -> Result<Self> {
        let fields = times
            .iter()
            .map(|&t| Field::from_fn(grid.clone(), |x| f(t, x)))
            .collect();
        Self::new(grid, times, fields)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn fields(&self) -> &[Field] {
        &self.fields
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Linear interpolation in time, clamped outside the knot range.
    pub fn at(&self, t: f64) -> Field {
        let n = self.times.len();
        if n == 1 || t <= self.times[0] {
            return self.fields[0].clone();
        }
        if t >= self.times[n - 1] {
            return self.fields[n - 1].clone();
        }
        let k = self.times.partition_point(|&s| s <= t) - 1;
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let w = (t - t0) / (t1 - t0);
        if w == 0.0 {
            return self.fields[k].clone();
        }
        let a = self.fields[k].values();
        let b = self.fields[k + 1].values();
        let values = a
            .iter()
            .zip(b)
            .map(|(x, y)| (1.0 - w) * x + w * y)
            .collect();
        Field::from_parts_unchecked(self.grid.clone(), values)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> FieldSeries {
        FieldSeries {
            grid: self.grid.clone(),
            times: self.times.clone(),
            fields: self.fields.iter().map(|x| x.map(&f)).collect(),
        }
    }

    pub fn scale(&self, c: f64) -> FieldSeries {
        self.map(|x| c * x)
    }

    pub fn max_abs(&self) -> f64 {
        self.fields
            .iter()
            .flat_map(|f| f.values().iter())
            .fold(0.0, |m, &x| f64::max(m, x.abs()))
    }
}

/// Trapezoid weights for the knots `times`.
pub fn trapezoid_weights(times: &[f64]) -> Vec<f64> {
    let n = times.len();
    let mut w = vec![0.0; n];
    for k in 0..n.saturating_sub(1) {
        let dt = times[k + 1] - times[k];
        w[k] += 0.5 * dt;
        w[k + 1] += 0.5 * dt;
    }
    w
}

/// `(int_0^T ||phi(t)||_p^p dt)^(1/p)` with the trapezoid rule in time.
pub fn spacetime_lp_norm(series: &FieldSeries, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::Domain(format!("L^p norm needs p >= 1, got {p}")));
    }
    if p.is_infinite() {
        return Ok(series.max_abs());
    }
    Ok(spacetime_lp_power(series, p)?.powf(1.0 / p))
}

/// `int_0^T ||phi(t)||_p^p dt`, trapezoid in time.
pub fn spacetime_lp_power(series: &FieldSeries, p: f64) -> Result<f64> {
    let w = trapezoid_weights(&series.times);
    let mut total = 0.0;
    for (wk, field) in w.iter().zip(&series.fields) {
        if *wk == 0.0 {
            continue;
        }
        total += wk * lp_norm(field, p)?.powf(p);
    }
    Ok(total)
}

/// A space-time control `f`, piecewise linear in time between its knots and
/// identically zero outside the control region.
#[derive(Debug, Clone, PartialEq)]
pub struct Control {
    series: FieldSeries,
}

impl Control {
    /// Wraps a series, zeroing every value outside the control mask.
    pub fn new(series: FieldSeries) -> Self {
        let mask = series.grid.control_mask().to_vec();
        let fields = series
            .fields
            .into_iter()
            .map(|mut f| {
                for (x, &on) in f.values_mut().iter_mut().zip(&mask) {
                    if !on {
                        *x = 0.0;
                    }
                }
                f
            })
            .collect();
        Control {
            series: FieldSeries {
                grid: series.grid,
                times: series.times,
                fields,
            },
        }
    }

    pub fn zero(grid: Arc<Grid>, times: Vec<f64>) -> Self {
        Self::constant(grid, times, 0.0)
    }

    pub fn constant(grid: Arc<Grid>, times: Vec<f64>, value: f64) -> Self {
        let series = FieldSeries::constant_in_time(Field::constant(grid, value), times)
            .expect("uniform knots are increasing");
        Self::new(series)
    }

    pub fn from_fn(grid: Arc<Grid>, times: Vec<f64>, f: impl Fn(f64, &[f64]) -> f64) -> Result<Self> {
        Ok(Self::new(FieldSeries::from_fn(grid, times, f)?))
    }

    pub fn series(&self) -> &FieldSeries {
        &self.series
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.series.grid
    }

    pub fn times(&self) -> &[f64] {
        &self.series.times
    }

    pub fn at(&self, t: f64) -> Field {
        self.series.at(t)
    }

    pub fn scale(&self, c: f64) -> Control {
        Control {
            series: self.series.scale(c),
        }
    }

    /// `||f||_{L^q(Q)}`.
    pub fn norm(&self, q: f64) -> Result<f64> {
        spacetime_lp_norm(&self.series, q)
    }

    pub fn is_zero(&self) -> bool {
        self.series.max_abs() == 0.0
    }

    /// Checks that a field lives on this control's grid.
    pub fn check_grid(&self, f: &Field) -> Result<()> {
        check_same_grid(&self.series.fields[0], f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_line(n: usize) -> Arc<Grid> {
        Arc::new(Grid::on_box(vec![n], &[1.0]).unwrap())
    }

    #[test]
    fn spacetime_norm_examples() {
        let g = unit_line(8);
        let times = uniform_times(1.0, 4);
        let zero = FieldSeries::constant_in_time(Field::zeros(g.clone()), times.clone()).unwrap();
        assert_eq!(spacetime_lp_norm(&zero, 3.0).unwrap(), 0.0);
        for p in [1.0, 2.0, 2.7, 5.0] {
            let c = FieldSeries::constant_in_time(Field::constant(g.clone(), -1.75), times.clone())
                .unwrap();
            assert!((spacetime_lp_norm(&c, p).unwrap() - 1.75).abs() < 1e-14);
        }
        assert!(spacetime_lp_norm(&zero, 0.9).is_err());
    }

    #[test]
    fn two_level_series_matches_hand_trapezoid() {
        let g = unit_line(4);
        let c = 1.3;
        let series = FieldSeries::new(
            g.clone(),
            vec![0.0, 1.0],
            vec![Field::zeros(g.clone()), Field::constant(g, c)],
        )
        .unwrap();
        for p in [1.0, 2.0, 3.0] {
            // 0.5 * (0 + |c|^p * |Omega|), then the p-th root.
            let hand = (0.5 * c.powf(p)).powf(1.0 / p);
            assert!((spacetime_lp_norm(&series, p).unwrap() - hand).abs() < 1e-14);
        }
    }

    #[test]
    fn interpolation_is_linear_and_clamped() {
        let g = unit_line(2);
        let s = FieldSeries::from_fn(g, vec![0.0, 1.0, 3.0], |t, _| t * t).unwrap();
        assert_eq!(s.at(-1.0)[0], 0.0);
        assert_eq!(s.at(0.5)[1], 0.5);
        assert_eq!(s.at(2.0)[0], 5.0);
        assert_eq!(s.at(10.0)[0], 9.0);
    }

    #[test]
    fn control_is_zero_outside_the_mask() {
        let g = Grid::on_box(vec![4], &[1.0])
            .unwrap()
            .with_control_box(&[0.0], &[0.5])
            .unwrap();
        let c = Control::constant(Arc::new(g), uniform_times(1.0, 2), 2.0);
        assert_eq!(c.at(0.3).values(), &[2.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn series_rejects_bad_times() {
        let g = unit_line(2);
        let f = Field::zeros(g.clone());
        assert!(FieldSeries::new(g.clone(), vec![0.0, 0.0], vec![f.clone(), f.clone()]).is_err());
        assert!(FieldSeries::new(g, vec![0.0], vec![]).is_err());
    }
}
