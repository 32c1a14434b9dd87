//! HTTP test harness: the router over a fresh store, driven in process.

use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use sentinel_core::store::NewPhoto;
use sentinel_core::web_api::{router, ApiState};
use sentinel_core::Store;
use serde_json::{json, Value};
use tower::ServiceExt;

pub struct Api {
    pub app: Router,
    pub state: Arc<ApiState>,
    pub dir: tempfile::TempDir,
}

pub fn api() -> Api {
    let dir = tempfile::tempdir().unwrap();
    let archive = dir.path().join("image");
    std::fs::create_dir_all(&archive).unwrap();
    let ui = dir.path().join("ui");
    std::fs::create_dir_all(&ui).unwrap();
    std::fs::write(ui.join("index.html"), "<html>ui</html>").unwrap();
    std::fs::write(dir.path().join("secret.txt"), "do not serve").unwrap();
    let store = Arc::new(Store::open(dir.path().join("s.db"), &archive).unwrap());
    store.bootstrap_admin("admin", "admin").unwrap();
    let state = ApiState::new(store);
    Api {
        app: router(state.clone(), Some(&ui)),
        state,
        dir,
    }
}

impl Api {
    pub async fn call(
        &self,
        method: Method,
        uri: &str,
        token: Option<&str>,
        body: Option<Value>,
    ) -> (StatusCode, Vec<u8>) {
        let mut req = Request::builder().method(method).uri(uri);
        if let Some(t) = token {
            req = req.header(header::AUTHORIZATION, format!("Bearer {t}"));
        }
        let req = match body {
            Some(v) => req
                .header(header::CONTENT_TYPE, "application/json")
                .body(Body::from(v.to_string())),
            None => req.body(Body::empty()),
        }
        .unwrap();
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
        (status, bytes)
    }

    pub async fn json(
        &self,
        method: Method,
        uri: &str,
        token: Option<&str>,
        body: Option<Value>,
    ) -> (StatusCode, Value) {
        let (s, b) = self.call(method, uri, token, body).await;
        (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
    }

    pub async fn login(&self, user: &str, password: &str) -> String {
        let (s, v) = self
            .json(
                Method::POST,
                "/api/login",
                None,
                Some(json!({"username": user, "password": password})),
            )
            .await;
        assert_eq!(s, StatusCode::OK, "{v}");
        v["token"].as_str().unwrap().to_string()
    }

    pub fn archive(&self) -> &Path {
        self.state.store.archive_dir()
    }

    pub fn add_photo(&self, stamp: &str) -> i64 {
        let (date, time) = stamp.split_once('_').unwrap();
        let name = format!("{stamp}.jpg");
        std::fs::write(self.archive().join(&name), [0xFF, 0xD8, 0xFF, 0xE0]).unwrap();
        self.state
            .store
            .insert_photo(&NewPhoto {
                photo_name: format!("image/{name}"),
                photo_time: time.replace('-', ":"),
                photo_date: date.into(),
            })
            .unwrap()
    }
}

/// One request per expected status code of every route, in order.
pub async fn status_matrix() -> Vec<String> {
    let a = api();
    let mismatches = std::cell::RefCell::new(Vec::new());
    let expect = |what: &str, got: StatusCode, want: StatusCode| {
        if got != want {
            mismatches
                .borrow_mut()
                .push(format!("{what}: got {got}, expected {want}"));
        }
    };
    let creds = |u: &str, p: &str| Some(json!({"username": u, "password": p}));

    let login = a.call(Method::POST, "/api/login", None, creds("admin", "admin")).await;
    expect("login ok", login.0, StatusCode::OK);
    let t: String = serde_json::from_slice::<Value>(&login.1).unwrap()["token"]
        .as_str()
        .unwrap_or("")
        .into();
    let t = t.as_str();
    expect(
        "login bad",
        a.call(Method::POST, "/api/login", None, creds("admin", "x")).await.0,
        StatusCode::UNAUTHORIZED,
    );

    expect(
        "latest empty",
        a.call(Method::GET, "/api/photos/latest", Some(t), None).await.0,
        StatusCode::NO_CONTENT,
    );
    expect(
        "latest no token",
        a.call(Method::GET, "/api/photos/latest", None, None).await.0,
        StatusCode::UNAUTHORIZED,
    );
    let id = a.add_photo("2010-04-12_21-57-21");
    let (s, v) = a.json(Method::GET, "/api/photos/latest", Some(t), None).await;
    expect("latest", s, StatusCode::OK);
    if v["image"] != "/images/2010-04-12_21-57-21.jpg" || v["time"] != "21:57:21" || v["date"] != "2010-04-12" {
        mismatches.borrow_mut().push(format!("latest body {v}"));
    }
    expect(
        "photos",
        a.call(Method::GET, "/api/photos", Some(t), None).await.0,
        StatusCode::OK,
    );
    expect(
        "photos no token",
        a.call(Method::GET, "/api/photos", None, None).await.0,
        StatusCode::UNAUTHORIZED,
    );
    expect(
        "image",
        a.call(Method::GET, "/images/2010-04-12_21-57-21.jpg", Some(t), None)
            .await
            .0,
        StatusCode::OK,
    );
    expect(
        "image no token",
        a.call(Method::GET, "/images/2010-04-12_21-57-21.jpg", None, None)
            .await
            .0,
        StatusCode::UNAUTHORIZED,
    );
    expect(
        "image traversal",
        a.call(Method::GET, "/images/..%2Fsecret.txt", Some(t), None).await.0,
        StatusCode::NOT_FOUND,
    );
    let uri = format!("/api/photos/{id}");
    expect(
        "delete photo no token",
        a.call(Method::DELETE, &uri, None, None).await.0,
        StatusCode::UNAUTHORIZED,
    );
    expect(
        "delete photo",
        a.call(Method::DELETE, &uri, Some(t), None).await.0,
        StatusCode::NO_CONTENT,
    );
    expect(
        "delete photo again",
        a.call(Method::DELETE, &uri, Some(t), None).await.0,
        StatusCode::NOT_FOUND,
    );

    let c = |n: &str| Some(json!({"contact_no": n}));
    expect(
        "contacts",
        a.call(Method::GET, "/api/contacts", Some(t), None).await.0,
        StatusCode::OK,
    );
    expect(
        "contacts no token",
        a.call(Method::GET, "/api/contacts", None, None).await.0,
        StatusCode::UNAUTHORIZED,
    );
    let (s, v) = a.json(Method::POST, "/api/contacts", Some(t), c("0137179296")).await;
    expect("add contact", s, StatusCode::OK);
    expect(
        "add contact invalid",
        a.call(Method::POST, "/api/contacts", Some(t), c("not-a-number"))
            .await
            .0,
        StatusCode::UNPROCESSABLE_ENTITY,
    );
    expect(
        "add contact no token",
        a.call(Method::POST, "/api/contacts", None, c("0137179296")).await.0,
        StatusCode::UNAUTHORIZED,
    );
    let uri = format!("/api/contacts/{}", v["id"]);
    expect(
        "delete contact no token",
        a.call(Method::DELETE, &uri, None, None).await.0,
        StatusCode::UNAUTHORIZED,
    );
    expect(
        "delete contact",
        a.call(Method::DELETE, &uri, Some(t), None).await.0,
        StatusCode::NO_CONTENT,
    );
    expect(
        "delete contact again",
        a.call(Method::DELETE, &uri, Some(t), None).await.0,
        StatusCode::NOT_FOUND,
    );

    let pw = |o: &str, n: &str, c: &str| Some(json!({"old": o, "new": n, "confirm": c}));
    expect(
        "password no token",
        a.call(Method::POST, "/api/password", None, pw("admin", "b", "b"))
            .await
            .0,
        StatusCode::UNAUTHORIZED,
    );
    expect(
        "password mismatch",
        a.call(Method::POST, "/api/password", Some(t), pw("admin", "b", "c"))
            .await
            .0,
        StatusCode::UNPROCESSABLE_ENTITY,
    );
    expect(
        "password wrong old",
        a.call(Method::POST, "/api/password", Some(t), pw("zzz", "b", "b"))
            .await
            .0,
        StatusCode::FORBIDDEN,
    );
    expect(
        "password",
        a.call(Method::POST, "/api/password", Some(t), pw("admin", "b", "b"))
            .await
            .0,
        StatusCode::OK,
    );
    expect(
        "login old password",
        a.call(Method::POST, "/api/login", None, creds("admin", "admin"))
            .await
            .0,
        StatusCode::UNAUTHORIZED,
    );
    expect(
        "login new password",
        a.call(Method::POST, "/api/login", None, creds("admin", "b")).await.0,
        StatusCode::OK,
    );

    expect(
        "unknown api route",
        a.call(Method::GET, "/api/unknown", Some(t), None).await.0,
        StatusCode::NOT_FOUND,
    );
    expect(
        "logout no token",
        a.call(Method::POST, "/api/logout", None, None).await.0,
        StatusCode::UNAUTHORIZED,
    );
    expect(
        "logout",
        a.call(Method::POST, "/api/logout", Some(t), None).await.0,
        StatusCode::NO_CONTENT,
    );
    expect(
        "after logout",
        a.call(Method::GET, "/api/photos", Some(t), None).await.0,
        StatusCode::UNAUTHORIZED,
    );
    mismatches.into_inner()
}
