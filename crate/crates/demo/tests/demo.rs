use delayed_consensus_demo::Demo;

#[test]
fn design_sweep_and_simulate() {
    let mut demo = Demo::new(6, 4, 4, 0, 1.04, 17).ok().unwrap();
    let report = demo.design(0, 2).ok().unwrap();
    let doc: serde_json::Value = serde_json::from_str(&report).unwrap();
    let rho = doc["rho"].as_f64().unwrap();
    assert!(rho < 0.99);
    assert_eq!(doc["bounds"].as_array().unwrap().len(), 21);

    let sweep = demo.sweep(5).ok().unwrap();
    assert_eq!(sweep.len(), 3 * 6);
    assert_eq!(sweep[0], rho);
    assert!((sweep[6] - rho).abs() < 1e-10);
    assert!((sweep[12] - rho).abs() < 1e-10);

    let mse = demo.simulate(2, true, 3, 50).ok().unwrap();
    assert_eq!(mse.len(), 51);
    assert!(mse.iter().all(|v| v.is_finite() && *v >= 0.0));
    assert!(mse[50] < mse[0]);
}
