//! Density export of single windows.

use std::fs;
use std::path::Path;

use maneuver_forecast::harness::{export_heatmap, HeatmapConfig};
use maneuver_forecast::rnn_imm::{GridSpec, ModelConfig, RnnImmModel};
use maneuver_forecast::sim::{generate_dataset, window, SimConfig, WindowRecord};

fn parse(path: &Path) -> (Vec<f64>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("step,x_min,x_max,y_min,y_max,nx,ny"));
    let header = lines
        .next()
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    let rows = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

fn setup() -> (RnnImmModel, WindowRecord) {
    let config = ModelConfig {
        encoder_hidden: 8,
        decoder_hidden: 8,
        embedding: 6,
        ..ModelConfig::default()
    };
    let model = RnnImmModel::new(config, 21).unwrap();
    let data = generate_dataset(&SimConfig {
        n_trajectories: 4,
        seed: 9,
        ..SimConfig::default()
    })
    .unwrap();
    (model, window(&data.samples[1], 8, 16))
}

#[test]
fn exported_grids_hold_densities_with_bounded_mass() {
    let (model, record) = setup();
    let cfg = HeatmapConfig {
        grid: GridSpec {
            x_min: -6.0,
            x_max: 8.0,
            y_min: -7.0,
            y_max: 7.0,
            nx: 141,
            ny: 141,
        },
        steps: vec![1, 8, 16],
    };
    let dir = tempfile::tempdir().unwrap();
    let paths = export_heatmap(&model, &record, &cfg, dir.path()).unwrap();
    assert_eq!(paths.len(), 3);
    let area = (14.0 / 141.0) * (14.0 / 141.0);
    for (path, step) in paths.iter().zip([1, 8, 16]) {
        let (header, rows) = parse(path);
        assert_eq!(
            header,
            vec![step as f64, -6.0, 8.0, -7.0, 7.0, 141.0, 141.0]
        );
        assert_eq!(rows.len(), 141);
        assert!(rows
            .iter()
            .all(|r| r.len() == 141 && r.iter().all(|v| *v >= 0.0 && v.is_finite())));
        let mass: f64 = rows.iter().flatten().sum::<f64>() * area;
        assert!(mass <= 1.0 + 1e-6, "step {step}: mass {mass}");
    }
}

#[test]
fn export_is_relative_to_the_window() {
    let (model, record) = setup();
    let d = [3.25, -1.5];
    let shift = |p: [f64; 2]| [p[0] + d[0], p[1] + d[1]];
    let moved = WindowRecord {
        features: record
            .features
            .iter()
            .map(|r| [r[0] + d[0], r[1] + d[1], r[2], r[3]])
            .collect(),
        last_obs: shift(record.last_obs),
        first_obs: shift(record.first_obs),
        ..record.clone()
    };
    let cfg = HeatmapConfig::default();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let pa = export_heatmap(&model, &record, &cfg, a.path()).unwrap();
    let pb = export_heatmap(&model, &moved, &cfg, b.path()).unwrap();
    for (x, y) in pa.iter().zip(&pb) {
        let ((_, ra), (_, rb)) = (parse(x), parse(y));
        for (u, v) in ra.iter().flatten().zip(rb.iter().flatten()) {
            assert!(
                (u - v).abs() <= 1e-9 * u.abs().max(1e-300) + 1e-300,
                "{u} vs {v}"
            );
        }
    }
}

#[test]
fn steps_outside_the_horizon_are_rejected() {
    let (model, record) = setup();
    let cfg = HeatmapConfig {
        steps: vec![17],
        ..HeatmapConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    assert!(export_heatmap(&model, &record, &cfg, dir.path()).is_err());
}
