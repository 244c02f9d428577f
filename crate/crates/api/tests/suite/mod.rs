//! Endpoint contract checks. Each check gets a fresh store with students
//! `s1`, `s2` and the sample course registered, and talks to the router
//! in-process.
#![allow(dead_code)]

use std::future::Future;
use std::pin::Pin;

use axum::body::Body;
use axum::Router;
use http::{HeaderMap, Request};
use http_body_util::BodyExt;
use jtms_learn::curriculum::Curriculum;
use jtms_learn::engine::Engine;
use jtms_learn_api::{router, ApiConfig, ApiToken, Role, TokenTable};
use serde_json::{json, Value};
use tempfile::TempDir;
use tower::ServiceExt;

pub const ADMIN: &str = "admin-token";
pub const INSTRUCTOR: &str = "instructor-token";
pub const STUDENT1: &str = "s1-token";
pub const STUDENT2: &str = "s2-token";

pub fn tokens() -> TokenTable {
    let t = |token: &str, role, subject: &str| ApiToken {
        token: token.into(),
        role,
        subject_id: subject.into(),
    };
    TokenTable::new([
        t(ADMIN, Role::Admin, "ops"),
        t(INSTRUCTOR, Role::Instructor, "t1"),
        t(STUDENT1, Role::Student, "s1"),
        t(STUDENT2, Role::Student, "s2"),
    ])
    .unwrap()
}

pub struct Client {
    app: Option<Router>,
    pub dir: TempDir,
}

#[derive(Debug)]
pub struct Resp {
    pub status: u16,
    pub headers: HeaderMap,
    pub text: String,
}

impl Resp {
    pub fn json(&self) -> Value {
        serde_json::from_str(&self.text).unwrap_or(Value::Null)
    }

    pub fn expect(&self, status: u16) -> Result<&Self, String> {
        if self.status == status {
            Ok(self)
        } else {
            Err(format!(
                "expected {status}, got {} {}",
                self.status, self.text
            ))
        }
    }

    /// Asserts the uniform error envelope with the given code.
    pub fn expect_error(&self, status: u16, code: &str) -> Result<&Self, String> {
        self.expect(status)?;
        let body = self.json();
        let got = body["error"]["code"].as_str();
        if got != Some(code) || !body["error"]["message"].is_string() {
            return Err(format!("expected error code {code}, got {}", self.text));
        }
        Ok(self)
    }
}

pub fn ensure(cond: bool, what: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what.into())
    }
}

/// Fails unless `v` is an object with exactly these keys.
pub fn keys(v: &Value, want: &[&str]) -> Result<(), String> {
    let obj = v.as_object().ok_or_else(|| format!("not an object: {v}"))?;
    let mut got: Vec<&str> = obj.keys().map(String::as_str).collect();
    let mut want = want.to_vec();
    got.sort_unstable();
    want.sort_unstable();
    ensure(got == want, format!("keys {got:?}, expected {want:?}"))
}

impl Client {
    pub fn with_config(cors_origins: Vec<String>) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let engine = Engine::open(dir.path()).unwrap();
        let app = router(
            engine,
            ApiConfig {
                tokens: tokens(),
                cors_origins,
            },
        );
        Client {
            app: Some(app),
            dir,
        }
    }

    pub async fn seeded() -> Self {
        let c = Self::with_config(Vec::new());
        for s in ["s1", "s2"] {
            c.post(
                "/students",
                ADMIN,
                json!({"student_id": s, "display_name": s.to_uppercase()}),
            )
            .await
            .expect(201)
            .unwrap();
        }
        c.post(
            "/curricula",
            INSTRUCTOR,
            serde_json::to_value(Curriculum::sample()).unwrap(),
        )
        .await
        .expect(201)
        .unwrap();
        c
    }

    pub async fn request(
        &self,
        method: &str,
        path: &str,
        token: Option<&str>,
        body: Option<String>,
    ) -> Resp {
        let mut req = Request::builder().method(method).uri(path);
        if let Some(t) = token {
            req = req.header("authorization", format!("Bearer {t}"));
        }
        if body.is_some() {
            req = req.header("content-type", "application/json");
        }
        let req = req.body(body.map_or_else(Body::empty, Body::from)).unwrap();
        let res = self.app.clone().unwrap().oneshot(req).await.unwrap();
        let status = res.status().as_u16();
        let headers = res.headers().clone();
        let bytes = res.into_body().collect().await.unwrap().to_bytes();
        Resp {
            status,
            headers,
            text: String::from_utf8_lossy(&bytes).into_owned(),
        }
    }

    pub async fn get(&self, path: &str) -> Resp {
        self.request("GET", path, None, None).await
    }

    pub async fn post(&self, path: &str, token: &str, body: Value) -> Resp {
        self.request("POST", path, Some(token), Some(body.to_string()))
            .await
    }

    pub async fn enroll_s1(&self) -> String {
        let r = self
            .post(
                "/enrollments",
                STUDENT1,
                json!({"curriculum_id": "db-course", "mode": "locked"}),
            )
            .await;
        r.expect(201).unwrap();
        r.json()["enrollment_id"].as_str().unwrap().to_owned()
    }

    pub async fn attempt(&self, id: &str, milestone: &str, score: f64) -> Resp {
        self.post(
            &format!("/enrollments/{id}/attempts"),
            STUDENT1,
            json!({"milestone_id": milestone, "assessment_id": format!("{milestone}-quiz"), "score": score}),
        )
        .await
    }

    pub fn log_len(&self) -> usize {
        std::fs::read_to_string(self.dir.path().join("events.log"))
            .map(|t| t.lines().count())
            .unwrap_or(0)
    }

    /// Drops the router (releasing the store lock) and returns the store.
    pub fn into_store(mut self) -> TempDir {
        self.app = None;
        self.dir
    }
}

type CheckFuture = Pin<Box<dyn Future<Output = Result<(), String>> + Send>>;
pub type Check = (&'static str, fn(Client) -> CheckFuture);

macro_rules! checks {
    ($($name:ident),* $(,)?) => {
        vec![$((stringify!($name), (|c| Box::pin($name(c))) as fn(Client) -> CheckFuture)),*]
    };
}

pub fn all_checks() -> Vec<Check> {
    checks![
        healthz,
        auth_rules,
        students_route,
        curricula_routes,
        invalid_curriculum_is_422_with_report,
        enrollment_route,
        map_route_schema_and_colors,
        map_dot_route,
        attempts_route,
        locked_attempt_is_409,
        recommendations_route,
        revoke_route,
        mode_route,
        unknown_resources_are_404,
        bad_bodies_are_400,
        one_event_per_successful_mutation,
        reads_are_side_effect_free,
        cors_preflight,
    ]
}

/// Runs every check against its own fresh store.
pub async fn run_all() -> Vec<(&'static str, Result<(), String>)> {
    let mut out = Vec::new();
    for (name, check) in all_checks() {
        let client = if name == "cors_preflight" {
            Client::with_config(vec!["http://localhost:5173".into()])
        } else {
            Client::seeded().await
        };
        out.push((name, check(client).await));
    }
    out
}

async fn healthz(c: Client) -> Result<(), String> {
    let r = c.get("/healthz").await;
    r.expect(200)?;
    ensure(r.json() == json!({"status": "ok"}), r.text.clone())
}

async fn auth_rules(c: Client) -> Result<(), String> {
    let doc = serde_json::to_value(Curriculum::sample()).unwrap();
    c.request("POST", "/curricula", None, Some(doc.to_string()))
        .await
        .expect_error(401, "unauthorized")?;
    c.post("/curricula", "bogus", doc.clone())
        .await
        .expect_error(401, "unauthorized")?;
    c.post("/curricula", STUDENT1, doc)
        .await
        .expect_error(403, "forbidden")?;
    c.post("/students", INSTRUCTOR, json!({"student_id": "x"}))
        .await
        .expect_error(403, "forbidden")?;
    c.post(
        "/enrollments",
        INSTRUCTOR,
        json!({"curriculum_id": "db-course"}),
    )
    .await
    .expect_error(403, "forbidden")?;
    let id = c.enroll_s1().await;
    c.post(
        &format!("/enrollments/{id}/revoke"),
        STUDENT1,
        json!({"milestone_id": "ra"}),
    )
    .await
    .expect_error(403, "forbidden")?;
    c.post(
        &format!("/enrollments/{id}/attempts"),
        STUDENT2,
        json!({"milestone_id": "ra", "assessment_id": "ra-quiz", "score": 90}),
    )
    .await
    .expect_error(403, "forbidden")?;
    // Admin may do anything.
    c.post(
        &format!("/enrollments/{id}/attempts"),
        ADMIN,
        json!({"milestone_id": "ra", "assessment_id": "ra-quiz", "score": 90}),
    )
    .await
    .expect(200)?;
    Ok(())
}

async fn students_route(c: Client) -> Result<(), String> {
    let r = c
        .post(
            "/students",
            ADMIN,
            json!({"student_id": "s3", "display_name": "Three"}),
        )
        .await;
    r.expect(201)?;
    keys(&r.json(), &["id", "display_name", "created_at"])?;
    ensure(r.json()["id"] == "s3", "profile id")?;
    c.post("/students", ADMIN, json!({"student_id": "s3"}))
        .await
        .expect_error(409, "duplicate_student")?;
    Ok(())
}

async fn curricula_routes(c: Client) -> Result<(), String> {
    let r = c.get("/curricula/db-course").await;
    r.expect(200)?;
    let doc: Curriculum = serde_json::from_str(&r.text).map_err(|e| e.to_string())?;
    ensure(doc == Curriculum::sample(), "document round trip")?;
    let mut other = Curriculum::sample();
    other.id = "db-course-2".into();
    let r = c
        .post(
            "/curricula",
            INSTRUCTOR,
            serde_json::to_value(&other).unwrap(),
        )
        .await;
    r.expect(201)?;
    ensure(
        r.json() == json!({"curriculum_id": "db-course-2", "milestones": 3}),
        r.text.clone(),
    )?;
    c.post(
        "/curricula",
        INSTRUCTOR,
        serde_json::to_value(Curriculum::sample()).unwrap(),
    )
    .await
    .expect_error(409, "duplicate_curriculum")?;
    Ok(())
}

async fn invalid_curriculum_is_422_with_report(c: Client) -> Result<(), String> {
    let mut bad = Curriculum::sample();
    bad.id = "cyclic".into();
    bad.milestones[0].prerequisites.push("odb".into());
    bad.milestones[1].prerequisites.push("ghost".into());
    let before = c.log_len();
    let r = c
        .post(
            "/curricula",
            INSTRUCTOR,
            serde_json::to_value(&bad).unwrap(),
        )
        .await;
    r.expect_error(422, "invalid_curriculum")?;
    let codes: Vec<String> = r.json()["error"]["validation_report"]["violations"]
        .as_array()
        .ok_or("missing validation_report")?
        .iter()
        .filter_map(|v| v["code"].as_str().map(str::to_owned))
        .collect();
    ensure(
        codes.contains(&"cycle".to_owned()),
        format!("codes {codes:?}"),
    )?;
    ensure(
        codes.contains(&"dangling_prerequisite".to_owned()),
        format!("codes {codes:?}"),
    )?;
    ensure(
        c.log_len() == before,
        "rejected curriculum appended an event",
    )?;
    c.request(
        "POST",
        "/curricula",
        Some(INSTRUCTOR),
        Some("{\"id\":".into()),
    )
    .await
    .expect_error(400, "malformed_curriculum")?;
    c.get("/curricula/cyclic")
        .await
        .expect_error(404, "unknown_curriculum")?;
    Ok(())
}

async fn enrollment_route(c: Client) -> Result<(), String> {
    let r = c
        .post(
            "/enrollments",
            STUDENT1,
            json!({"curriculum_id": "db-course", "mode": "locked"}),
        )
        .await;
    r.expect(201)?;
    let body = r.json();
    keys(
        &body,
        &[
            "enrollment_id",
            "student_id",
            "curriculum_id",
            "mode",
            "statuses",
        ],
    )?;
    ensure(
        body["statuses"] == json!({"odb": "locked", "ra": "exploring", "sql": "exploring"}),
        format!("statuses {}", body["statuses"]),
    )?;
    ensure(body["student_id"] == "s1", "student from token")?;
    c.post(
        "/enrollments",
        STUDENT1,
        json!({"curriculum_id": "db-course"}),
    )
    .await
    .expect_error(409, "duplicate_enrollment")?;
    c.post(
        "/enrollments",
        STUDENT2,
        json!({"curriculum_id": "db-course", "student_id": "s1"}),
    )
    .await
    .expect_error(403, "forbidden")?;
    c.post("/enrollments", STUDENT2, json!({"curriculum_id": "nope"}))
        .await
        .expect_error(404, "unknown_curriculum")?;
    let r = c
        .post(
            "/enrollments",
            ADMIN,
            json!({"curriculum_id": "db-course", "student_id": "s2", "mode": "open"}),
        )
        .await;
    r.expect(201)?;
    ensure(r.json()["mode"] == "open", "admin enrollment mode")?;
    ensure(
        r.json()["statuses"]
            .as_object()
            .unwrap()
            .values()
            .all(|s| s == "exploring"),
        "open mode has nothing locked",
    )?;
    Ok(())
}

async fn map_route_schema_and_colors(c: Client) -> Result<(), String> {
    let id = c.enroll_s1().await;
    c.attempt(&id, "ra", 85.0).await.expect(200)?;
    let r = c.get(&format!("/enrollments/{id}/map")).await;
    r.expect(200)?;
    let body = r.json();
    keys(
        &body,
        &[
            "enrollment_id",
            "student_id",
            "curriculum_id",
            "mode",
            "milestones",
        ],
    )?;
    let mut colors = Vec::new();
    for m in body["milestones"]
        .as_array()
        .ok_or("milestones not a list")?
    {
        keys(
            m,
            &[
                "milestone_id",
                "title",
                "status",
                "color",
                "mastering_level",
                "consecutive_failures",
                "struggling",
                "prerequisites",
            ],
        )?;
        let want = match m["status"].as_str() {
            Some("locked") => "red",
            Some("exploring") => "yellow",
            Some("passed") => "green",
            other => return Err(format!("bad status {other:?}")),
        };
        ensure(m["color"] == want, format!("color for {m}"))?;
        colors.push((m["milestone_id"].as_str().unwrap().to_owned(), want));
    }
    let want: Vec<(String, &str)> = vec![
        ("ra".into(), "green"),
        ("sql".into(), "yellow"),
        ("odb".into(), "red"),
    ];
    ensure(colors == want, format!("colors {colors:?}"))?;
    ensure(
        body["milestones"][0]["mastering_level"] == 3,
        "RA level at 85",
    )?;
    ensure(
        body["milestones"][1]["mastering_level"].is_null(),
        "no level before passing",
    )
}

async fn map_dot_route(c: Client) -> Result<(), String> {
    let id = c.enroll_s1().await;
    c.attempt(&id, "ra", 85.0).await.expect(200)?;
    let r = c.get(&format!("/enrollments/{id}/map.dot")).await;
    r.expect(200)?;
    let ct = r
        .headers
        .get("content-type")
        .and_then(|v| v.to_str().ok())
        .unwrap_or("");
    ensure(
        ct.starts_with("text/vnd.graphviz"),
        format!("content-type {ct}"),
    )?;
    for line in [
        "  \"ra\" [label=\"Relational Algebra\", fillcolor=\"green\"];",
        "  \"sql\" [label=\"SQL\", fillcolor=\"yellow\"];",
        "  \"odb\" [label=\"ODB, ORDB, XML\", fillcolor=\"red\"];",
        "  \"ra\" -> \"odb\";",
    ] {
        ensure(
            r.text.lines().any(|l| l == line),
            format!("missing {line:?} in\n{}", r.text),
        )?;
    }
    Ok(())
}

async fn attempts_route(c: Client) -> Result<(), String> {
    let id = c.enroll_s1().await;
    c.attempt(&id, "ra", 60.0).await.expect(200)?;
    let r = c.attempt(&id, "sql", 85.0).await;
    r.expect(200)?;
    let d = r.json();
    keys(
        &d,
        &[
            "enrollment_id",
            "milestone_id",
            "attempt",
            "mastering_level",
            "consecutive_failures",
            "changes",
        ],
    )?;
    keys(
        &d["attempt"],
        &["assessment_id", "score", "score_pct", "passed", "timestamp"],
    )?;
    ensure(d["mastering_level"] == 3, "level 3 at 85")?;
    ensure(
        d["changes"]
            == json!([
                {"milestone_id": "odb", "from": "locked", "to": "exploring"},
                {"milestone_id": "sql", "from": "exploring", "to": "passed"}
            ]),
        format!("changes {}", d["changes"]),
    )?;
    let r = c.attempt(&id, "odb", 10.0).await;
    r.expect(200)?;
    ensure(
        r.json()["consecutive_failures"] == 1 && r.json()["attempt"]["passed"] == false,
        r.text.clone(),
    )?;
    c.attempt(&id, "odb", 150.0)
        .await
        .expect_error(400, "invalid_score")?;
    c.post(
        &format!("/enrollments/{id}/attempts"),
        STUDENT1,
        json!({"milestone_id": "odb", "assessment_id": "ra-quiz", "score": 50}),
    )
    .await
    .expect_error(404, "unknown_assessment")?;
    Ok(())
}

async fn locked_attempt_is_409(c: Client) -> Result<(), String> {
    let id = c.enroll_s1().await;
    let before = c.log_len();
    c.attempt(&id, "odb", 90.0)
        .await
        .expect_error(409, "milestone_locked")?;
    ensure(c.log_len() == before, "failed attempt appended an event")
}

async fn recommendations_route(c: Client) -> Result<(), String> {
    let id = c.enroll_s1().await;
    c.attempt(&id, "ra", 55.0).await.expect(200)?;
    c.attempt(&id, "sql", 85.0).await.expect(200)?;
    c.attempt(&id, "odb", 20.0).await.expect(200)?;
    c.attempt(&id, "odb", 25.0).await.expect(200)?;
    let r = c.get(&format!("/enrollments/{id}/recommendations")).await;
    r.expect(200)?;
    let body = r.json();
    keys(&body, &["schema", "enrollment_id", "items"])?;
    let items = body["items"].as_array().ok_or("items")?;
    ensure(!items.is_empty(), "no recommendations")?;
    for (i, item) in items.iter().enumerate() {
        keys(item, &["kind", "milestone", "assets", "rationale", "rank"])?;
        ensure(item["rank"] == i + 1, "ranks are 1-based and ordered")?;
    }
    ensure(
        items[0]["kind"] == "revise_prerequisite" && items[0]["milestone"] == "ra",
        format!("first item {}", items[0]),
    )
}

async fn revoke_route(c: Client) -> Result<(), String> {
    let id = c.enroll_s1().await;
    c.attempt(&id, "ra", 70.0).await.expect(200)?;
    c.attempt(&id, "sql", 70.0).await.expect(200)?;
    let r = c
        .post(
            &format!("/enrollments/{id}/revoke"),
            INSTRUCTOR,
            json!({"milestone_id": "ra", "reason": "regrade"}),
        )
        .await;
    r.expect(200)?;
    ensure(
        r.json()["changes"]
            == json!([
                {"milestone_id": "odb", "from": "exploring", "to": "locked"},
                {"milestone_id": "ra", "from": "passed", "to": "exploring"}
            ]),
        r.text.clone(),
    )?;
    ensure(r.json()["attempt"].is_null(), "revoke carries no attempt")?;
    c.post(
        &format!("/enrollments/{id}/revoke"),
        INSTRUCTOR,
        json!({"milestone_id": "ra"}),
    )
    .await
    .expect_error(409, "not_passed")?;
    Ok(())
}

async fn mode_route(c: Client) -> Result<(), String> {
    let id = c.enroll_s1().await;
    let r = c
        .post(
            &format!("/enrollments/{id}/mode"),
            INSTRUCTOR,
            json!({"mode": "open"}),
        )
        .await;
    r.expect(200)?;
    ensure(
        r.json()["changes"]
            == json!([{"milestone_id": "odb", "from": "locked", "to": "exploring"}]),
        r.text.clone(),
    )?;
    c.post(
        &format!("/enrollments/{id}/mode"),
        INSTRUCTOR,
        json!({"mode": "sideways"}),
    )
    .await
    .expect_error(400, "bad_request")?;
    Ok(())
}

async fn unknown_resources_are_404(c: Client) -> Result<(), String> {
    for path in [
        "/enrollments/nope/map",
        "/enrollments/nope/map.dot",
        "/enrollments/nope/recommendations",
    ] {
        c.get(path).await.expect_error(404, "unknown_enrollment")?;
    }
    c.post(
        "/enrollments/nope/attempts",
        STUDENT1,
        json!({"milestone_id": "ra", "assessment_id": "ra-quiz", "score": 1}),
    )
    .await
    .expect_error(404, "unknown_enrollment")?;
    c.get("/no/such/route")
        .await
        .expect_error(404, "not_found")?;
    let id = c.enroll_s1().await;
    c.attempt(&id, "nope", 50.0)
        .await
        .expect_error(404, "unknown_milestone")?;
    Ok(())
}

async fn bad_bodies_are_400(c: Client) -> Result<(), String> {
    let id = c.enroll_s1().await;
    let path = format!("/enrollments/{id}/attempts");
    for body in [
        "not json",
        "{}",
        r#"{"milestone_id":"ra","assessment_id":"ra-quiz","score":"high"}"#,
        r#"{"milestone_id":"ra","assessment_id":"ra-quiz","score":50,"extra":1}"#,
    ] {
        c.request("POST", &path, Some(STUDENT1), Some(body.into()))
            .await
            .expect_error(400, "bad_request")?;
    }
    c.post("/students", ADMIN, json!({"student_id": ""}))
        .await
        .expect_error(400, "schema_violation")?;
    Ok(())
}

async fn one_event_per_successful_mutation(c: Client) -> Result<(), String> {
    let start = c.log_len();
    let mut expected = start;
    let id = c.enroll_s1().await;
    expected += 1;
    for (milestone, score) in [
        ("ra", 80.0),
        ("odb", 80.0),
        ("sql", 10.0),
        ("sql", 500.0),
        ("sql", 90.0),
    ] {
        let r = c.attempt(&id, milestone, score).await;
        if (200..300).contains(&r.status) {
            expected += 1;
        }
        ensure(
            c.log_len() == expected,
            format!(
                "after {milestone}@{score}: log has {} lines, want {expected}",
                c.log_len()
            ),
        )?;
    }
    ensure(
        expected == start + 4,
        format!("expected enroll plus 3 attempts, log at {expected}"),
    )?;
    let dir = c.into_store();
    let engine = Engine::open(dir.path()).map_err(|e| e.to_string())?;
    let check = engine.replay_check().map_err(|e| e.to_string())?;
    ensure(check.ok(), format!("{check:?}"))
}

async fn reads_are_side_effect_free(c: Client) -> Result<(), String> {
    let id = c.enroll_s1().await;
    c.attempt(&id, "ra", 95.0).await.expect(200)?;
    let before = c.log_len();
    for path in [
        format!("/enrollments/{id}/map"),
        format!("/enrollments/{id}/map.dot"),
        format!("/enrollments/{id}/recommendations"),
        "/curricula/db-course".to_owned(),
        "/healthz".to_owned(),
    ] {
        let a = c.get(&path).await;
        let b = c.get(&path).await;
        a.expect(200)?;
        ensure(
            a.text == b.text,
            format!("{path} not stable across retries"),
        )?;
    }
    ensure(c.log_len() == before, "reads appended events")
}

async fn cors_preflight(c: Client) -> Result<(), String> {
    let req = Request::builder()
        .method("OPTIONS")
        .uri("/enrollments")
        .header("origin", "http://localhost:5173")
        .header("access-control-request-method", "POST")
        .body(Body::empty())
        .unwrap();
    let res = c.app.clone().unwrap().oneshot(req).await.unwrap();
    let allowed = res
        .headers()
        .get("access-control-allow-origin")
        .and_then(|v| v.to_str().ok())
        .unwrap_or("");
    ensure(
        allowed == "http://localhost:5173",
        format!("allow-origin {allowed:?}"),
    )
}
