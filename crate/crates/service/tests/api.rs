use std::sync::Arc;
use std::time::Duration;

use axum::body::{Body, Bytes};
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use sensolab_service::{router, Session};

async fn call(app: &Router, req: Request<Body>) -> (StatusCode, Bytes) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes())
}

async fn call_json(app: &Router, req: Request<Body>) -> (StatusCode, Value) {
    let (s, b) = call(app, req).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

fn post_csv(query: &str, csv: &str) -> Request<Body> {
    Request::builder()
        .method(Method::POST)
        .uri(format!("/datasets?delimiter=comma&{query}"))
        .header(header::CONTENT_TYPE, "text/csv")
        .body(Body::from(csv.to_string()))
        .unwrap()
}

fn post_json(uri: &str, v: &Value) -> Request<Body> {
    Request::builder()
        .method(Method::POST)
        .uri(uri)
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(v.to_string()))
        .unwrap()
}

fn get(uri: &str) -> Request<Body> {
    Request::builder().uri(uri).body(Body::empty()).unwrap()
}

fn app() -> Router {
    router(Arc::new(Session::in_memory()), 2)
}

/// 5 products × 4 attributes with distinct column profiles.
const DESCRIPTIVE: &str = "\
,Sweet,Sour,Crisp,Juicy
P1,5.1,2.0,6.3,4.4
P2,3.2,4.1,5.0,2.9
P3,6.8,1.5,3.9,5.7
P4,2.4,5.6,4.8,3.1
P5,4.9,3.3,7.1,6.0
";

/// Deterministic pseudo-random integers 1..=9.
fn ratings(n: usize, seed: u64) -> Vec<u64> {
    let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    (0..n)
        .map(|_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            1 + (s >> 33) % 9
        })
        .collect()
}

fn liking_csv(products: usize, consumers: usize, seed: u64) -> String {
    let v = ratings(products * consumers, seed);
    let mut out = String::new();
    for c in 0..consumers {
        out.push_str(&format!(",C{}", c + 1));
    }
    out.push('\n');
    for p in 0..products {
        out.push_str(&format!("P{}", p + 1));
        for c in 0..consumers {
            out.push_str(&format!(",{}", v[p * consumers + c]));
        }
        out.push('\n');
    }
    out
}

async fn import(app: &Router, query: &str, csv: &str) -> String {
    let (s, v) = call_json(app, post_csv(query, csv)).await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    v["id"].as_str().unwrap().to_string()
}

async fn wait_done(app: &Router, id: &str) -> (StatusCode, Value) {
    for _ in 0..600 {
        let (s, v) = call_json(app, get(&format!("/models/{id}"))).await;
        let state = v["status"]["state"].as_str().unwrap_or("").to_string();
        if state == "done" || state == "failed" {
            return (s, v);
        }
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    panic!("job {id} did not finish");
}

#[tokio::test]
async fn health_check() {
    let (s, v) = call_json(&app(), get("/healthz")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["status"], "ok");
}

#[tokio::test]
async fn import_list_delete() {
    let app = app();
    let (s, v) = call_json(&app, post_csv("role=descriptive&name=apples", DESCRIPTIVE)).await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(v["summary"]["rows"], 5);
    assert_eq!(v["summary"]["cols"], 4);
    assert_eq!(v["role"], "descriptive");
    let id = v["id"].as_str().unwrap().to_string();

    let (_, list) = call_json(&app, get("/datasets")).await;
    assert_eq!(list.as_array().unwrap().len(), 1);
    assert_eq!(list[0]["name"], "apples");

    let (s, doc) = call_json(&app, get(&format!("/datasets/{id}"))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(doc["col_labels"], json!(["Sweet", "Sour", "Crisp", "Juicy"]));

    let del = Request::builder()
        .method(Method::DELETE)
        .uri(format!("/datasets/{id}"))
        .body(Body::empty())
        .unwrap();
    assert_eq!(call(&app, del).await.0, StatusCode::NO_CONTENT);
    assert_eq!(call(&app, get(&format!("/datasets/{id}"))).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn malformed_cell_is_reported() {
    let (s, v) = call_json(&app(), post_csv("", ",A,B\nP1,1,abc\n")).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v, json!({"error": "unparseable cell r2c3 'abc'"}));
}

#[tokio::test]
async fn conflicting_options_and_unknown_format() {
    let app = app();
    let (s, _) = call_json(&app, post_csv("decimal=comma", DESCRIPTIVE)).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let req = Request::builder()
        .method(Method::POST)
        .uri("/datasets")
        .header(header::CONTENT_TYPE, "application/octet-stream")
        .body(Body::from("xx"))
        .unwrap();
    assert_eq!(call(&app, req).await.0, StatusCode::UNSUPPORTED_MEDIA_TYPE);
}

fn multipart(filename: &str, content: &[u8], options: Option<&Value>) -> Request<Body> {
    let boundary = "XBOUNDARYX";
    let mut body = Vec::new();
    if let Some(o) = options {
        body.extend(format!(
            "--{boundary}\r\nContent-Disposition: form-data; name=\"options\"\r\n\r\n{o}\r\n"
        ).bytes());
    }
    body.extend(
        format!(
            "--{boundary}\r\nContent-Disposition: form-data; name=\"file\"; filename=\"{filename}\"\r\n\
             Content-Type: application/octet-stream\r\n\r\n"
        )
        .bytes(),
    );
    body.extend_from_slice(content);
    body.extend(format!("\r\n--{boundary}--\r\n").bytes());
    Request::builder()
        .method(Method::POST)
        .uri("/datasets")
        .header(header::CONTENT_TYPE, format!("multipart/form-data; boundary={boundary}"))
        .body(Body::from(body))
        .unwrap()
}

#[tokio::test]
async fn multipart_upload() {
    let app = app();
    let opts = json!({"delimiter": "comma", "role": "descriptive"});
    let (s, v) = call_json(&app, multipart("apples.csv", DESCRIPTIVE.as_bytes(), Some(&opts))).await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    assert_eq!(v["name"], "apples");
    assert_eq!(v["summary"]["rows"], 5);

    let (s, _) = call_json(&app, multipart("apples.bin", DESCRIPTIVE.as_bytes(), None)).await;
    assert_eq!(s, StatusCode::UNSUPPORTED_MEDIA_TYPE);

    let xlsx = std::fs::read(concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/fixtures/design.xlsx")).unwrap();
    let (s, v) = call_json(&app, multipart("design.xlsx", &xlsx, Some(&json!({"role": "design"})))).await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    assert_eq!(v["role"], "design");
}

#[tokio::test]
async fn missing_cells_import_but_block_analysis() {
    let app = app();
    let id = import(&app, "", ",A,B\nP1,1,\nP2,2,3\nP3,4,1\n").await;
    let (_, list) = call_json(&app, get("/datasets")).await;
    assert_eq!(list[0]["summary"]["missing_count"], 1);
    let (s, v) = call_json(&app, post_json("/models", &json!({"method": "pca", "dataset": id}))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(v["error"].as_str().unwrap().contains("missing values present"), "{v}");
}

#[tokio::test]
async fn synchronous_pca_and_plots() {
    let app = app();
    let id = import(&app, "", DESCRIPTIVE).await;
    let req = json!({"method": "pca", "dataset": id, "standardise": true, "components": 2});
    let (s, v) = call_json(&app, post_json("/models", &req)).await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    assert_eq!(v["status"]["state"], "done");
    let scores = &v["result"]["results"][0]["tables"][0];
    assert_eq!(scores["name"], "scores");
    assert_eq!(scores["rows"].as_array().unwrap().len(), 5);
    assert_eq!(scores["columns"].as_array().unwrap().len(), 3);

    let mid = v["id"].as_str().unwrap();
    let (s, p) = call_json(&app, get(&format!("/models/{mid}/plots/corrloadings"))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(p["renderer"], "latent");
    assert_eq!(p["payload"]["plot"], "corr_loadings");

    let (s, svg) = call(&app, get(&format!("/models/{mid}/plots/scores?format=svg"))).await;
    assert_eq!(s, StatusCode::OK);
    assert!(svg.starts_with(b"<svg"));
    assert_eq!(call(&app, get(&format!("/models/{mid}/plots/nope"))).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn unknown_dataset_and_bad_request() {
    let app = app();
    let (s, _) = call_json(&app, post_json("/models", &json!({"method": "pca", "dataset": "nope"}))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call_json(&app, post_json("/models", &json!({"method": "kmeans"}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(call(&app, get("/models/nope")).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn prefmap_row_mismatch() {
    let app = app();
    let liking = import(&app, "role=liking", &liking_csv(4, 6, 1)).await;
    let desc = import(&app, "role=descriptive", DESCRIPTIVE).await;
    let req = json!({"method": "prefmap", "liking": liking, "descriptive": desc});
    let (s, v) = call_json(&app, post_json("/models", &req)).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(v["error"].as_str().unwrap().contains("row counts differ (4 vs 5)"), "{v}");
}

#[tokio::test]
async fn validated_fit_runs_as_job_and_is_deterministic() {
    let app = app();
    let liking = import(&app, "role=liking", &liking_csv(5, 8, 2)).await;
    let desc = import(&app, "role=descriptive", DESCRIPTIVE).await;
    let req = json!({"method": "prefmap", "liking": liking, "descriptive": desc,
                     "validate": true, "sectors": 4});
    let (s, v) = call_json(&app, post_json("/models", &req)).await;
    assert_eq!(s, StatusCode::ACCEPTED);
    let a = v["id"].as_str().unwrap().to_string();
    let (s, first) = wait_done(&app, &a).await;
    assert_eq!(s, StatusCode::OK, "{first}");
    let counts = &first["result"]["results"][0]["model"]["sectors"]["sector_counts"];
    assert_eq!(counts.as_array().unwrap().iter().map(|c| c.as_u64().unwrap()).sum::<u64>(), 8);

    let (_, v) = call_json(&app, post_json("/models", &req)).await;
    let (_, second) = wait_done(&app, v["id"].as_str().unwrap()).await;
    assert_eq!(first["result"].to_string(), second["result"].to_string());
}

#[tokio::test]
async fn conjoint_yields_one_result_per_liking() {
    let app = app();
    let design = import(&app, "role=design", ",A,B\nP1,1,1\nP2,2,1\nP3,1,2\nP4,2,2\n").await;
    let l1 = import(&app, "role=liking&name=first", &liking_csv(4, 10, 3)).await;
    let l2 = import(&app, "role=liking&name=second", &liking_csv(4, 10, 4)).await;
    let req = json!({"method": "conjoint", "likings": [l1, l2], "design": design,
                     "factors": ["A", "B"], "structure": "struct1"});
    let (s, v) = call_json(&app, post_json("/models", &req)).await;
    assert_eq!(s, StatusCode::ACCEPTED, "{v}");
    let (s, v) = wait_done(&app, v["id"].as_str().unwrap()).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let results = v["result"]["results"].as_array().unwrap();
    assert_eq!(results.len(), 2);
    assert_eq!(results[0]["name"], "first");
    assert_eq!(results[1]["name"], "second");
    let names: Vec<&str> = results[0]["tables"].as_array().unwrap().iter().map(|t| t["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["lsmeans", "fixed", "random", "pairwise"]);
}

#[tokio::test]
async fn conjoint_design_mismatch_is_rejected_up_front() {
    let app = app();
    let design = import(&app, "role=design", ",A,B\nP1,1,1\nP2,2,1\nP3,1,2\n").await;
    let l = import(&app, "role=liking", &liking_csv(4, 5, 3)).await;
    let req = json!({"method": "conjoint", "likings": [l], "design": design, "factors": ["A"]});
    let (s, v) = call_json(&app, post_json("/models", &req)).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(v["error"].as_str().unwrap().contains("has 4 products but design has 3 rows"), "{v}");
}

#[tokio::test]
async fn segments_register_a_dataset() {
    let app = app();
    let liking = import(&app, "role=liking", &liking_csv(5, 81, 5)).await;
    let (_, m) = call_json(&app, post_json("/models", &json!({"method": "pca", "dataset": liking}))).await;
    let model = m["id"].as_str().unwrap();

    let first: Vec<String> = (1..=40).map(|i| format!("C{i}")).collect();
    let second: Vec<String> = (41..=81).map(|i| format!("C{i}")).collect();
    let req = json!({"model": model, "name": "clusters", "segments": [first, second]});
    let (s, v) = call_json(&app, post_json("/segments", &req)).await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    assert_eq!(v["sizes"], json!([40, 41]));
    let ds = v["dataset"].as_str().unwrap();
    let (_, list) = call_json(&app, get("/datasets")).await;
    assert!(list.as_array().unwrap().iter().any(|d| d["id"] == ds && d["role"] == "characteristics"));

    let bad = json!({"model": model, "name": "x", "segments": [["C1", "C999"]]});
    let (s, v) = call_json(&app, post_json("/segments", &bad)).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(v["error"].as_str().unwrap().contains("C999"));

    let missing = json!({"model": "nope", "name": "x", "segments": []});
    assert_eq!(call(&app, post_json("/segments", &missing)).await.0, StatusCode::NOT_FOUND);

    let (_, list) = call_json(&app, get("/segments")).await;
    assert_eq!(list.as_array().unwrap().len(), 1);
    assert_eq!(list[0]["name"], "clusters");
    assert_eq!(list[0]["sizes"], json!([40, 41]));
}

#[tokio::test]
async fn transpose_creates_new_dataset() {
    let app = app();
    let id = import(&app, "", DESCRIPTIVE).await;
    let req = Request::builder()
        .method(Method::POST)
        .uri(format!("/datasets/{id}/transpose"))
        .body(Body::empty())
        .unwrap();
    let (s, v) = call_json(&app, req).await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(v["summary"]["rows"], 4);
    assert_eq!(v["summary"]["cols"], 5);
}

#[tokio::test]
async fn restart_reproduces_listing() {
    let dir = tempfile::tempdir().unwrap();
    let before = {
        let app = router(Arc::new(Session::open(dir.path()).unwrap()), 2);
        import(&app, "role=descriptive&name=apples", DESCRIPTIVE).await;
        import(&app, "role=liking", &liking_csv(5, 7, 9)).await;
        call(&app, get("/datasets")).await.1
    };
    let app = router(Arc::new(Session::open(dir.path()).unwrap()), 2);
    let after = call(&app, get("/datasets")).await.1;
    assert_eq!(before, after);
}
