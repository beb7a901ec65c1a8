use std::fs;

use aspectra::{
    fit_linear, group_importance, group_variables, load_table, model_triplot, predict_aspects,
    predict_triplot, render_triplot, save_table, AspectOptions, CorrelationMethod, Grouping,
    LossFn, NumericTable, Observation, PermutationConfig, RenderSpec, TriplotConfig, TriplotResult,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Two tight pairs and one free column; the target uses all of them.
fn write_dataset(path: &std::path::Path) {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut s = String::from("p1,p2,q1,q2,r,target\n");
    for _ in 0..150 {
        let z1: f64 = rng.gen();
        let z2: f64 = rng.gen();
        let row = [
            z1 + 0.05 * rng.gen::<f64>(),
            z1 + 0.05 * rng.gen::<f64>(),
            z2 + 0.05 * rng.gen::<f64>(),
            -z2 + 0.05 * rng.gen::<f64>(),
            rng.gen(),
        ];
        let y = 2.0 * row[0] + row[1] - row[2] + 0.5 * row[4] + 0.01 * rng.gen::<f64>();
        let cells: Vec<String> = row.iter().chain([&y]).map(|v| format!("{v:.6}")).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    fs::write(path, s).unwrap();
}

#[test]
fn csv_to_svg() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("data.csv");
    write_dataset(&csv);
    let (table, y) = load_table(&csv, Some("target")).unwrap();
    let y = y.unwrap();
    assert_eq!(table.column_names(), ["p1", "p2", "q1", "q2", "r"]);

    let model = fit_linear(&table, &y).unwrap();
    let part = group_variables(&table, 0.8, CorrelationMethod::Spearman).unwrap();
    let names: Vec<&str> = part.groups().iter().map(|g| g.name.as_str()).collect();
    assert_eq!(names, ["p1_p2", "q1_q2", "r"]);

    let cfg = PermutationConfig::new(LossFn::Rmse, 1).repetitions(5);
    let g = group_importance(&model, &table, &y, &part, cfg).unwrap();
    assert!(g.groups[0].importance > g.groups[1].importance);
    assert!(g.groups[1].importance > g.groups[2].importance);

    let t = model_triplot(&model, &table, &y, &TriplotConfig::global(cfg)).unwrap();
    let back = TriplotResult::from_json(&t.to_json()).unwrap();
    let svg = render_triplot(&back, &RenderSpec::default());
    assert_eq!(svg, render_triplot(&t, &RenderSpec::default()));
    let doc = roxmltree::Document::parse(&svg).unwrap();
    assert_eq!(doc.descendants().filter(|n| n.attribute("class") == Some("junction")).count(), 4);

    let x = Observation::from_row(&table, 0).unwrap();
    let e = predict_aspects(&model, &table, &x, &Grouping::Partition(part), AspectOptions::new(3000, 2)).unwrap();
    let local = predict_triplot(&model, &table, &x, &TriplotConfig::local(AspectOptions::new(3000, 2))).unwrap();
    // the p1/p2 node of the local triplot is the aspect fitted at the same tree cut
    let node = local
        .nodes
        .iter()
        .find(|n| n.members == ["p1", "p2"])
        .expect("p1 and p2 merge first");
    assert!((node.importance - e.contribution_of("p1_p2").unwrap()).abs() < 0.1 * node.importance.abs().max(0.05));
}

#[test]
fn saved_tables_reload_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    let t = NumericTable::from_rows(
        vec!["a".into(), "b".into()],
        &[vec![0.1 + 0.2, 1e-300], vec![-2.5e17, std::f64::consts::PI]],
    )
    .unwrap();
    save_table(&path, &t, None).unwrap();
    let (back, _) = load_table(&path, None).unwrap();
    assert_eq!(back, t);
}
