//! Decision-boundary rasters: predicted class indices over a 2D grid,
//! exportable as CSV and 8-bit PGM.

use std::fs;
use std::path::Path;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::ModelState;
use crate::par;
use crate::train::argmax;

/// Predicted class per grid cell. Row 0 is the top of the image (largest
/// y); cells are sampled at their centers.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryRaster {
    /// `(x_min, x_max, y_min, y_max)`.
    pub bounds: (f64, f64, f64, f64),
    pub resolution: usize,
    pub classes: Vec<Vec<usize>>,
}

impl BoundaryRaster {
    /// Center coordinates of the cell at `(row, col)`.
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        let (x_min, x_max, y_min, y_max) = self.bounds;
        let dx = (x_max - x_min) / self.resolution as f64;
        let dy = (y_max - y_min) / self.resolution as f64;
        (
            x_min + (col as f64 + 0.5) * dx,
            y_max - (row as f64 + 0.5) * dy,
        )
    }
}

/// Rasterize a 2-input model's predictions over `bounds` at
/// `resolution × resolution` cells. Rows are computed in parallel.
pub fn export_boundary_raster(
    state: &ModelState,
    bounds: (f64, f64, f64, f64),
    resolution: usize,
) -> Result<BoundaryRaster> {
    if state.input_dim() != 2 {
        return Err(Error::Parameter(format!(
            "boundary rasters need a 2-input model, this one takes {}",
            state.input_dim()
        )));
    }
    let (x_min, x_max, y_min, y_max) = bounds;
    if !(x_min < x_max && y_min < y_max)
        || [x_min, x_max, y_min, y_max].iter().any(|v| !v.is_finite())
    {
        return Err(Error::Parameter(format!("degenerate raster bounds {bounds:?}")));
    }
    if resolution == 0 {
        return Err(Error::Parameter("raster resolution must be at least 1".into()));
    }
    let raster = BoundaryRaster {
        bounds,
        resolution,
        classes: Vec::new(),
    };
    let rows = par::map_range(resolution, |row| {
        (0..resolution)
            .map(|col| {
                let (x, y) = raster.cell_center(row, col);
                state.forward(&[x, y]).map(|logits| argmax(&logits))
            })
            .collect::<Result<Vec<usize>>>()
    });
    let classes = rows.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(BoundaryRaster { classes, ..raster })
}

/// Axis-aligned bounds of a 2D dataset, padded by 10% of each span (at
/// least 0.1) so the boundary has room around the points.
pub fn dataset_bounds(dataset: &Dataset) -> Result<(f64, f64, f64, f64)> {
    if dataset.feature_len() != 2 {
        return Err(Error::Parameter(format!(
            "bounds need 2D features, shape is {:?}",
            dataset.feature_shape
        )));
    }
    if dataset.is_empty() {
        return Err(Error::Data("cannot take bounds of an empty dataset".into()));
    }
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for s in &dataset.samples {
        for axis in 0..2 {
            lo[axis] = lo[axis].min(s.features[axis]);
            hi[axis] = hi[axis].max(s.features[axis]);
        }
    }
    let pad = |lo: f64, hi: f64| {
        let margin = (0.1 * (hi - lo)).max(0.1);
        (lo - margin, hi + margin)
    };
    let (x_min, x_max) = pad(lo[0], hi[0]);
    let (y_min, y_max) = pad(lo[1], hi[1]);
    Ok((x_min, x_max, y_min, y_max))
}

/// Write the raster as CSV: one row of class indices per grid row, top
/// row first.
pub fn write_boundary_csv(raster: &BoundaryRaster, path: &Path) -> Result<()> {
    let mut out = String::new();
    for row in &raster.classes {
        let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Write the raster as a binary 8-bit PGM, class indices scaled across
/// the gray range.
pub fn write_boundary_pgm(raster: &BoundaryRaster, num_classes: usize, path: &Path) -> Result<()> {
    if num_classes == 0 {
        return Err(Error::Parameter("PGM export needs at least one class".into()));
    }
    let mut bytes = format!("P5\n{} {}\n255\n", raster.resolution, raster.resolution).into_bytes();
    for row in &raster.classes {
        for &class in row {
            if class >= num_classes {
                return Err(Error::ClassIndex {
                    index: class,
                    classes: num_classes,
                });
            }
            let gray = if num_classes == 1 {
                0
            } else {
                (class * 255 / (num_classes - 1)) as u8
            };
            bytes.push(gray);
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imbalance::{ImbalanceKind, ImbalanceSpec};
    use crate::model::{Activation, MlpSpec, OptimSpec};
    use crate::train::{run_training, DatasetKind, Method, TrainPlan};

    fn random_model(seed: u64) -> ModelState {
        ModelState::new(&MlpSpec {
            layer_widths: vec![2, 8, 3],
            activation: Activation::Tanh,
            seed,
        })
        .unwrap()
    }

    #[test]
    fn constant_predictor_gives_uniform_raster() {
        let state = ModelState::from_layers(
            vec![(vec![0.0; 4], vec![0.0, 1.0])],
            Activation::Relu,
        )
        .unwrap();
        let raster = export_boundary_raster(&state, (-1.0, 1.0, -1.0, 1.0), 16).unwrap();
        assert_eq!(raster.classes.len(), 16);
        assert!(raster.classes.iter().flatten().all(|&c| c == 1));
    }

    #[test]
    fn raster_matches_per_point_predictions() {
        let state = random_model(3);
        let raster = export_boundary_raster(&state, (-2.0, 2.0, -1.0, 3.0), 24).unwrap();
        for row in 0..24 {
            for col in 0..24 {
                let (x, y) = raster.cell_center(row, col);
                let want = argmax(&state.forward(&[x, y]).unwrap());
                assert_eq!(raster.classes[row][col], want, "cell ({row}, {col})");
            }
        }
    }

    #[test]
    fn raster_rows_run_top_down() {
        // A predictor that keys on the sign of y: class 1 above zero.
        let state = ModelState::from_layers(
            vec![(vec![0.0, 0.0, 0.0, 1.0], vec![0.1, 0.0])],
            Activation::Relu,
        )
        .unwrap();
        let raster = export_boundary_raster(&state, (-1.0, 1.0, -1.0, 1.0), 8).unwrap();
        assert!(raster.classes[0].iter().all(|&c| c == 1), "top row is high y");
        assert!(raster.classes[7].iter().all(|&c| c == 0), "bottom row is low y");
    }

    #[test]
    fn trained_blobs_raster_contains_both_classes() {
        let plan = TrainPlan {
            method: Method::Erm,
            dataset: DatasetKind::TwoBlobs,
            epochs: 10,
            noise_sd: 0.0,
            imbalance: ImbalanceSpec {
                kind: ImbalanceKind::Step,
                rho: 1.0,
                mu: 0.5,
                classes: 2,
                n_max: 100,
            },
            n_per_class: 100,
            eval_n_per_class: 50,
            hidden: vec![16],
            optim: OptimSpec {
                milestones: vec![],
                ..OptimSpec::default()
            },
            seed: 4,
            ..TrainPlan::default()
        };
        let run = run_training(&plan).unwrap();
        let bounds = dataset_bounds(&run.train).unwrap();
        let raster = export_boundary_raster(&run.state, bounds, 64).unwrap();
        let flat: Vec<usize> = raster.classes.iter().flatten().copied().collect();
        assert!(flat.contains(&0) && flat.contains(&1));
    }

    #[test]
    fn non_2d_model_is_rejected() {
        let state = ModelState::new(&MlpSpec {
            layer_widths: vec![3, 4, 2],
            activation: Activation::Relu,
            seed: 0,
        })
        .unwrap();
        assert!(export_boundary_raster(&state, (-1.0, 1.0, -1.0, 1.0), 8).is_err());
    }

    #[test]
    fn bad_bounds_and_resolution_are_rejected() {
        let state = random_model(5);
        assert!(export_boundary_raster(&state, (1.0, -1.0, 0.0, 1.0), 8).is_err());
        assert!(export_boundary_raster(&state, (0.0, 1.0, 0.0, 1.0), 0).is_err());
        assert!(export_boundary_raster(&state, (0.0, f64::NAN, 0.0, 1.0), 8).is_err());
    }

    #[test]
    fn dataset_bounds_cover_all_points_with_margin() {
        let ds = crate::data::make_two_moons(
            50,
            0.0,
            &mut crate::rng::stream_rng(1, crate::rng::stream::TRAIN_DATA),
        )
        .unwrap();
        let (x_min, x_max, y_min, y_max) = dataset_bounds(&ds).unwrap();
        for s in &ds.samples {
            assert!(s.features[0] > x_min && s.features[0] < x_max);
            assert!(s.features[1] > y_min && s.features[1] < y_max);
        }
    }

    #[test]
    fn writers_emit_expected_shapes() {
        let dir = tempfile::tempdir().unwrap();
        let state = random_model(6);
        let raster = export_boundary_raster(&state, (-1.0, 1.0, -1.0, 1.0), 10).unwrap();

        let csv_path = dir.path().join("boundary.csv");
        write_boundary_csv(&raster, &csv_path).unwrap();
        let text = std::fs::read_to_string(&csv_path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 10);
        assert_eq!(lines[0].split(',').count(), 10);

        let pgm_path = dir.path().join("boundary.pgm");
        write_boundary_pgm(&raster, 3, &pgm_path).unwrap();
        let bytes = std::fs::read(&pgm_path).unwrap();
        let header = b"P5\n10 10\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(bytes.len(), header.len() + 100);
        for b in &bytes[header.len()..] {
            assert!([0u8, 127, 255].contains(b));
        }
    }
}
