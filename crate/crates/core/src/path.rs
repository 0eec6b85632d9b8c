use std::io::Write;

use crate::error::{domain, Result};

/// A simulated trajectory on a fixed time grid.
///
/// `z` holds the subordinator (business clock) and `x`, when present, the
/// subordinated Brownian motion. `seed` and `stream_id` identify the random
/// stream that produced the path.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplePath {
    pub grid: Vec<f64>,
    pub z: Vec<f64>,
    pub x: Option<Vec<f64>>,
    pub seed: u64,
    pub stream_id: u64,
}

impl SamplePath {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn terminal_z(&self) -> f64 {
        *self.z.last().expect("non-empty path")
    }

    pub fn terminal_x(&self) -> Option<f64> {
        self.x.as_ref().and_then(|x| x.last().copied())
    }

    /// CSV with header `t,z` or `t,z,x`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        match &self.x {
            None => {
                w.write_record(["t", "z"])?;
                for (t, z) in self.grid.iter().zip(&self.z) {
                    w.write_record([t.to_string(), z.to_string()])?;
                }
            }
            Some(x) => {
                w.write_record(["t", "z", "x"])?;
                for ((t, z), x) in self.grid.iter().zip(&self.z).zip(x) {
                    w.write_record([t.to_string(), z.to_string(), x.to_string()])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

/// Grids start at 0 and increase strictly.
pub fn validate_grid(grid: &[f64]) -> Result<()> {
    match grid.first() {
        None => return domain("time grid is empty"),
        Some(&t0) if t0 != 0.0 => return domain(format!("time grid must start at 0, got {t0}")),
        _ => {}
    }
    if let Some(w) = grid.windows(2).find(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
        return domain(format!(
            "time grid must be strictly increasing, found {} followed by {}",
            w[0], w[1]
        ));
    }
    Ok(())
}

/// `n_steps + 1` equispaced points on `[0, horizon]`.
pub fn uniform_grid(horizon: f64, n_steps: usize) -> Vec<f64> {
    (0..=n_steps)
        .map(|i| horizon * i as f64 / n_steps as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_validation() {
        assert!(validate_grid(&[0.0]).is_ok());
        assert!(validate_grid(&[0.0, 0.5, 1.0]).is_ok());
        assert!(validate_grid(&[]).is_err());
        assert!(validate_grid(&[0.1, 0.5]).is_err());
        assert!(validate_grid(&[0.0, 0.5, 0.5]).is_err());
        assert!(validate_grid(&[0.0, 0.5, 0.2]).is_err());
    }

    #[test]
    fn csv_headers() {
        let p = SamplePath {
            grid: vec![0.0, 1.0],
            z: vec![0.0, 0.25],
            x: None,
            seed: 1,
            stream_id: 0,
        };
        assert_eq!(p.to_csv_string().unwrap(), "t,z\n0,0\n1,0.25\n");
        let p = SamplePath {
            x: Some(vec![0.0, -0.5]),
            ..p
        };
        assert_eq!(p.to_csv_string().unwrap(), "t,z,x\n0,0,0\n1,0.25,-0.5\n");
    }
}
