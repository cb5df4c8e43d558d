use xlpool_web::{descriptor_sizes, pooled_heatmap, RetrievalDemo};

fn parse(s: &str) -> serde_json::Value {
    serde_json::from_str(s).unwrap()
}

#[test]
fn heatmap_shape_and_range() {
    let v = parse(&pooled_heatmap(1, 5, 6, 4, true, true).unwrap());
    assert_eq!(v["K"], 4);
    assert_eq!(v["d"], 6);
    let values = v["values"].as_array().unwrap();
    assert_eq!(values.len(), 24);
    let max = v["max"].as_f64().unwrap();
    assert!(values.iter().all(|x| x.as_f64().unwrap() <= max));
    assert_eq!(pooled_heatmap(1, 5, 6, 4, true, true).unwrap(), pooled_heatmap(1, 5, 6, 4, true, true).unwrap());
}

#[test]
fn sizes() {
    let v = parse(&descriptor_sizes(512, 512, 2).unwrap());
    assert_eq!(v["cross_layer"], 262144);
    assert_eq!(v["spm"], 21504);
}

#[test]
fn retrieval_demo_ranks_family_first() {
    let demo = RetrievalDemo::new(7, 4, 6, 0.5).unwrap();
    assert_eq!(demo.size(), 24);
    assert_eq!(demo.channels(), 64);
    let v = parse(&demo.search(3, 40, 6, false).unwrap());
    let hits = v["hits"].as_array().unwrap();
    assert_eq!(hits[0]["image_id"], v["query"]);
    assert!(hits.iter().all(|h| h["same_family"] == true));
    let map = demo.mean_ap(40, false).unwrap();
    assert!(map > 0.9, "{map}");
    assert!(demo.mean_ap(64, true).unwrap() > 0.9);
}
