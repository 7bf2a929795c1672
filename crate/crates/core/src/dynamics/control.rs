use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Row sums of a relaxed control must equal one within this tolerance.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Finite set of admissible control points.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlGrid {
    dim: usize,
    points: Vec<f64>,
}

impl ControlGrid {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = points.first() else {
            return Err(Error::EmptyControlGrid);
        };
        let dim = first.len();
        if dim == 0 {
            return Err(Error::InvalidControl("control points need at least one coordinate".into()));
        }
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::InvalidControl("control points differ in dimension".into()));
        }
        if points.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidControl("non-finite control coordinate".into()));
        }
        for a in 0..points.len() {
            for b in a + 1..points.len() {
                if points[a] == points[b] {
                    return Err(Error::InvalidControl(format!("duplicate control point {:?}", points[a])));
                }
            }
        }
        Ok(ControlGrid { dim, points: points.concat() })
    }

    /// `count` equally spaced scalars from `lo` to `hi` inclusive.
    pub fn uniform_1d(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::EmptyControlGrid);
        }
        if count == 1 {
            return Self::new(vec![vec![lo]]);
        }
        let step = (hi - lo) / (count - 1) as f64;
        Self::new((0..count).map(|k| vec![if k + 1 == count { hi } else { lo + step * k as f64 }]).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.dim..(k + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }

    /// Index of the grid point equal to `u`, if any.
    pub fn position(&self, u: &[f64]) -> Option<usize> {
        self.iter().position(|p| p == u)
    }
}

/// A relaxed control held constant on each time step: row `k` is the
/// probability vector over the grid used on `[k·dt, (k+1)·dt)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RelaxedControl {
    dt: f64,
    grid: ControlGrid,
    rows: Vec<f64>,
}

impl RelaxedControl {
    pub fn new(grid: ControlGrid, dt: f64, mut rows: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidControl(format!("time step must be positive, got {dt}")));
        }
        let m = grid.len();
        if !rows.len().is_multiple_of(m) {
            return Err(Error::InvalidControl(format!("{} weights do not fill rows of {m}", rows.len())));
        }
        for (k, row) in rows.chunks_exact_mut(m).enumerate() {
            if row.iter().any(|w| !w.is_finite() || *w < 0.0) {
                return Err(Error::InvalidControl(format!("row {k} has an invalid weight")));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidControl(format!("row {k} sums to {total}")));
            }
            if total != 1.0 {
                row.iter_mut().for_each(|w| *w /= total);
            }
        }
        Ok(RelaxedControl { dt, grid, rows })
    }

    /// Ordinary control: grid index `indices[k]` on step `k`.
    pub fn ordinary(grid: ControlGrid, dt: f64, indices: &[usize]) -> Result<Self> {
        let m = grid.len();
        let mut rows = vec![0.0; indices.len() * m];
        for (k, &idx) in indices.iter().enumerate() {
            if idx >= m {
                return Err(Error::InvalidControl(format!("grid index {idx} out of range")));
            }
            rows[k * m + idx] = 1.0;
        }
        Self::new(grid, dt, rows)
    }

    pub fn constant(grid: ControlGrid, dt: f64, steps: usize, index: usize) -> Result<Self> {
        Self::ordinary(grid, dt, &vec![index; steps])
    }

    /// The same probability vector `zeta` on every step.
    pub fn constant_mixture(grid: ControlGrid, dt: f64, steps: usize, zeta: &[f64]) -> Result<Self> {
        if zeta.len() != grid.len() {
            return Err(Error::InvalidControl("mixture length differs from grid size".into()));
        }
        Self::new(grid, dt, zeta.repeat(steps))
    }

    /// Piecewise-constant ordinary control with `segments[s]` held for `steps_per_segment` steps.
    pub fn segments(grid: ControlGrid, dt: f64, segments: &[usize], steps_per_segment: usize) -> Result<Self> {
        let indices: Vec<usize> = segments.iter().flat_map(|&s| std::iter::repeat_n(s, steps_per_segment)).collect();
        Self::ordinary(grid, dt, &indices)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn grid(&self) -> &ControlGrid {
        &self.grid
    }

    pub fn steps(&self) -> usize {
        self.rows.len() / self.grid.len()
    }

    pub fn horizon(&self) -> f64 {
        self.steps() as f64 * self.dt
    }

    pub fn rows(&self) -> &[f64] {
        &self.rows
    }

    pub fn row(&self, k: usize) -> &[f64] {
        let m = self.grid.len();
        &self.rows[k * m..(k + 1) * m]
    }

    /// Row in force on the step `[t, t + dt)` of an integration grid.
    pub(crate) fn row_for_step(&self, t_start: f64, dt: f64) -> Option<&[f64]> {
        let k = ((t_start + 0.5 * dt) / self.dt).floor() as usize;
        (k < self.steps()).then(|| self.row(k))
    }

    /// Whether the control covers `[0, horizon]` up to rounding.
    pub fn covers(&self, horizon: f64) -> bool {
        self.horizon() >= horizon - 1e-9 * horizon.abs().max(1.0)
    }

    /// Grid index per step if every row is one-hot.
    pub fn ordinary_indices(&self) -> Option<Vec<usize>> {
        (0..self.steps())
            .map(|k| {
                let row = self.row(k);
                let idx = row.iter().position(|&w| w == 1.0)?;
                row.iter().enumerate().all(|(j, &w)| j == idx || w == 0.0).then_some(idx)
            })
            .collect()
    }

    /// `Σ_u ζₖ(u)·u` on step `k`.
    pub fn mean_control(&self, k: usize) -> Vec<f64> {
        let mut acc = vec![0.0; self.grid.dim()];
        for (j, &w) in self.row(k).iter().enumerate() {
            for (a, u) in acc.iter_mut().zip(self.grid.point(j)) {
                *a += w * u;
            }
        }
        acc
    }

    /// Short human-readable description, e.g. `constant -1` or `piecewise 3 segments`.
    pub fn summary(&self) -> String {
        if self.steps() == 0 {
            return "empty".to_string();
        }
        let fmt_point = |p: &[f64]| p.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(" ");
        match self.ordinary_indices() {
            Some(idx) => {
                let mut runs: Vec<(usize, usize)> = Vec::new();
                for i in idx {
                    match runs.last_mut() {
                        Some((j, n)) if *j == i => *n += 1,
                        _ => runs.push((i, 1)),
                    }
                }
                if runs.len() == 1 {
                    format!("constant {}", fmt_point(self.grid.point(runs[0].0)))
                } else {
                    let parts: Vec<String> =
                        runs.iter().map(|&(j, n)| format!("{}x{}", fmt_point(self.grid.point(j)), n)).collect();
                    format!("piecewise {}", parts.join(";"))
                }
            }
            None => format!("relaxed over {} steps", self.steps()),
        }
    }

    /// Header lines `# dt=..` and `# grid=..` (points `;`-separated, coordinates
    /// space-separated) followed by one comma-separated row per step.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# dt={:e}", self.dt)?;
        let pts: Vec<String> =
            self.grid.iter().map(|p| p.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" ")).collect();
        writeln!(out, "# grid={}", pts.join(";"))?;
        for k in 0..self.steps() {
            let row: Vec<String> = self.row(k).iter().map(|w| format!("{w:e}")).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(input: R) -> Result<Self> {
        let mut dt = None;
        let mut grid = None;
        let mut rows = Vec::new();
        for (idx, line) in input.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            let line = line.trim();
            let parse_err = |msg: String| Error::Parse { line: lineno, msg };
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                if let Some(v) = rest.strip_prefix("dt=") {
                    dt = Some(v.trim().parse::<f64>().map_err(|e| parse_err(e.to_string()))?);
                } else if let Some(v) = rest.strip_prefix("grid=") {
                    let pts = v
                        .split(';')
                        .map(|p| {
                            p.split_whitespace().map(|x| x.parse::<f64>()).collect::<std::result::Result<Vec<_>, _>>()
                        })
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|e| parse_err(e.to_string()))?;
                    grid = Some(ControlGrid::new(pts)?);
                }
                continue;
            }
            for cell in line.split(',') {
                rows.push(cell.trim().parse::<f64>().map_err(|e| parse_err(e.to_string()))?);
            }
        }
        let dt = dt.ok_or(Error::Parse { line: 0, msg: "missing dt header".into() })?;
        let grid = grid.ok_or(Error::Parse { line: 0, msg: "missing grid header".into() })?;
        Self::new(grid, dt, rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_validation() {
        assert!(matches!(ControlGrid::new(vec![]), Err(Error::EmptyControlGrid)));
        assert!(ControlGrid::new(vec![vec![0.0], vec![0.0]]).is_err());
        assert!(ControlGrid::new(vec![vec![0.0], vec![0.0, 1.0]]).is_err());
        let g = ControlGrid::uniform_1d(-1.0, 0.0, 11).unwrap();
        assert_eq!(g.len(), 11);
        assert_eq!(g.point(0), &[-1.0]);
        assert_eq!(g.point(10), &[0.0]);
        assert!((g.point(1)[0] + 0.9).abs() < 1e-15);
    }

    #[test]
    fn rows_must_be_probabilities() {
        let g = ControlGrid::uniform_1d(-1.0, 0.0, 2).unwrap();
        assert!(RelaxedControl::new(g.clone(), 0.1, vec![0.5, 0.6]).is_err());
        assert!(RelaxedControl::new(g.clone(), 0.1, vec![1.5, -0.5]).is_err());
        assert!(RelaxedControl::new(g.clone(), 0.0, vec![1.0, 0.0]).is_err());
        assert!(RelaxedControl::new(g.clone(), 0.1, vec![1.0, 0.0, 0.0]).is_err());
        let c = RelaxedControl::new(g, 0.1, vec![0.25, 0.75, 1.0, 0.0]).unwrap();
        assert_eq!(c.steps(), 2);
        assert!((c.horizon() - 0.2).abs() < 1e-15);
        assert_eq!(c.ordinary_indices(), None);
    }

    #[test]
    fn ordinary_controls_are_one_hot() {
        let g = ControlGrid::uniform_1d(-1.0, 0.0, 3).unwrap();
        let c = RelaxedControl::segments(g, 0.1, &[0, 2], 2).unwrap();
        assert_eq!(c.ordinary_indices(), Some(vec![0, 0, 2, 2]));
        assert_eq!(c.summary(), "piecewise -1x2;0x2");
        assert_eq!(c.mean_control(0), vec![-1.0]);
    }

    #[test]
    fn row_lookup_by_time() {
        let g = ControlGrid::uniform_1d(-1.0, 0.0, 2).unwrap();
        let c = RelaxedControl::ordinary(g, 0.1, &[0, 1]).unwrap();
        assert_eq!(c.row_for_step(0.0, 0.05), Some(&[1.0, 0.0][..]));
        assert_eq!(c.row_for_step(0.05, 0.05), Some(&[1.0, 0.0][..]));
        assert_eq!(c.row_for_step(0.1, 0.05), Some(&[0.0, 1.0][..]));
        assert_eq!(c.row_for_step(0.2, 0.05), None);
        assert!(c.covers(0.2));
        assert!(!c.covers(0.25));
    }

    #[test]
    fn text_roundtrip() {
        let g = ControlGrid::new(vec![vec![-1.0, 0.5], vec![0.0, 0.0]]).unwrap();
        let c = RelaxedControl::new(g, 1e-3, vec![0.3, 0.7, 1.0, 0.0]).unwrap();
        let mut buf = Vec::new();
        c.write_text(&mut buf).unwrap();
        assert_eq!(RelaxedControl::read_text(&buf[..]).unwrap(), c);
    }
}
