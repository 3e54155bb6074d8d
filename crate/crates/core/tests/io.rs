//! File formats: tube CSV/JSON, SVG plots, measurement CSV and model text.

use mixmono::model::{bundled, bundled_names, read_tube_json, render_svg, tube_to_csv, write_tube_json};
use mixmono::observer::{measurements_to_csv, parse_measurements_csv, Measurement};
use mixmono::reach::{reach_tube, ReachOptions};
use mixmono::{InversionConfig, MethodId, SystemModel};

#[test]
fn one_step_tube_has_header_and_two_rows() {
    let m = bundled("vanderpol").unwrap();
    let t = reach_tube(&m, &MethodId::Remainder, 1, &ReachOptions::default()).unwrap();
    let csv = tube_to_csv(&t);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0], "t,x1_lo,x1_hi,x2_lo,x2_hi");
    let row: Vec<f64> = lines[2].split(',').map(|c| c.parse().unwrap()).collect();
    assert_eq!(row[0], 0.1);
    assert!((row[1] - 1.355).abs() < 1e-12 && (row[2] - 1.63).abs() < 1e-12);
}

#[test]
fn updated_columns_appear_only_with_refinement() {
    let m = bundled("scott_redundant").unwrap();
    let plain = reach_tube(&m, &MethodId::Remainder, 3, &ReachOptions::default()).unwrap();
    assert!(!tube_to_csv(&plain).contains("_upd"));
    let opts = ReachOptions {
        refine: Some(InversionConfig::with_epsilon(1e-3)),
        ..ReachOptions::default()
    };
    let refined = reach_tube(&m, &MethodId::Remainder, 3, &opts).unwrap();
    let csv = tube_to_csv(&refined);
    let header = csv.lines().next().unwrap();
    assert!(header.contains("_lo_upd") && header.contains("_hi_upd"), "{header}");
    let ncols = header.split(',').count();
    assert!(csv.lines().all(|l| l.split(',').count() == ncols));
}

#[test]
fn json_roundtrip_is_exact() {
    let m = bundled("scott_example").unwrap();
    let t = reach_tube(&m, &MethodId::JacobianSign, 5, &ReachOptions::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("tube.json");
    write_tube_json(&t, &p).unwrap();
    assert_eq!(read_tube_json(&p).unwrap(), t);
}

#[test]
fn svg_has_a_panel_per_dimension_and_a_polyline_per_side() {
    let m = bundled("vanderpol").unwrap();
    let tubes: Vec<_> = [MethodId::Natural, MethodId::Remainder]
        .iter()
        .map(|meth| reach_tube(&m, meth, 10, &ReachOptions::default()).unwrap())
        .collect();
    let svg = render_svg(&tubes).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    // 2 dims × 2 tubes × 2 sides.
    assert_eq!(svg.matches("<polyline").count(), 8);
    assert!(svg.contains("natural") && svg.contains("remainder"));
}

#[test]
fn measurement_csv_roundtrip_and_errors() {
    let ms = vec![
        Measurement { t: 0.0, y: vec![1.0, -2.5] },
        Measurement { t: 0.1, y: vec![0.1 + 0.2, 1e-300] },
    ];
    let back = parse_measurements_csv(&measurements_to_csv(&ms)).unwrap();
    assert_eq!(back, ms);
    let err = parse_measurements_csv("t,y1\n0,1\n0.1,abc\n").unwrap_err();
    assert!(err.is_validation() && err.to_string().contains('3'), "{err}");
}

#[test]
fn every_bundled_model_roundtrips_through_text() {
    for name in bundled_names() {
        let m = bundled(name).unwrap();
        let again = SystemModel::parse(&m.to_text()).unwrap();
        assert_eq!(again, m, "{name}");
    }
}

#[test]
fn model_parse_errors_carry_positions() {
    let err = SystemModel::parse("system \"x\" {\n  time: discrete(dt=0.1);\n  state: a;\n  dynamics { a' = a +; }\n  init: [[0, 1]];\n}").unwrap_err();
    assert!(err.is_validation(), "{err}");
    assert!(err.to_string().contains("line 4") || err.to_string().contains("column"), "{err}");
}
