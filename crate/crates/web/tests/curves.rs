use serde_json::Value;

fn last(v: &Value) -> f64 {
    v.as_array().unwrap().last().unwrap().as_f64().unwrap()
}

#[test]
fn gdp_ends_below_iterative_on_the_demo_panel() {
    let v: Value = serde_json::from_str(&aimc_web::programming_curves(32, "pcm1", 1, 300).unwrap()).unwrap();
    assert!(last(&v["gdp"]["eps_total"]) < last(&v["iterative"]["eps_total"]));
}

#[test]
fn drift_grows_weight_error() {
    let v: Value = serde_json::from_str(&aimc_web::drift_curve(16, "pcm1", 3, 24.0, 4).unwrap()).unwrap();
    for m in ["iterative", "gdp"] {
        let e: Vec<f64> = v[m].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
        assert!(e[3] > e[0], "{m}: {e:?}");
    }
}
