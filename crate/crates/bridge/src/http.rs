//! Minimal HTTP/1.1 responder for the console's static files and recorded
//! logs. One request per connection.

use std::io::{Read, Write};
use std::net::TcpStream;
use std::path::{Component, Path, PathBuf};

use crate::server::{list_logs, log_path, ServeConfig};

const BUILTIN_INDEX: &str = "<!doctype html>
<html><head><meta charset=\"utf-8\"><title>oikos</title></head>
<body><h1>oikos session server</h1>
<p>WebSocket endpoint on this port, protocol <code>oikos/1</code>. Recorded logs: <a href=\"/logs\">/logs</a>.</p>
</body></html>
";

/// True when the request head asks for a WebSocket upgrade.
pub(crate) fn is_upgrade(head: &[u8]) -> bool {
    let mut headers = [httparse::EMPTY_HEADER; 64];
    let mut req = httparse::Request::new(&mut headers);
    if req.parse(head).is_err() {
        return false;
    }
    req.headers.iter().any(|h| h.name.eq_ignore_ascii_case("upgrade") && String::from_utf8_lossy(h.value).trim().eq_ignore_ascii_case("websocket"))
}

struct Response {
    status: &'static str,
    content_type: &'static str,
    body: Vec<u8>,
}

impl Response {
    fn text(status: &'static str, body: &str) -> Self {
        Response { status, content_type: "text/plain; charset=utf-8", body: body.as_bytes().to_vec() }
    }
}

pub(crate) fn respond(mut stream: TcpStream, config: &ServeConfig) {
    let mut buf = Vec::new();
    let mut chunk = [0u8; 4096];
    while !buf.windows(4).any(|w| w == b"\r\n\r\n") && buf.len() < 64 * 1024 {
        match stream.read(&mut chunk) {
            Ok(0) | Err(_) => break,
            Ok(n) => buf.extend_from_slice(&chunk[..n]),
        }
    }
    let mut headers = [httparse::EMPTY_HEADER; 64];
    let mut req = httparse::Request::new(&mut headers);
    let (method, path) = match req.parse(&buf) {
        Ok(httparse::Status::Complete(_)) => (req.method.unwrap_or("").to_string(), req.path.unwrap_or("/").to_string()),
        _ => {
            write_response(&mut stream, &Response::text("400 Bad Request", "bad request\n"), false);
            return;
        }
    };
    let head_only = method == "HEAD";
    let resp = if method != "GET" && !head_only {
        Response::text("405 Method Not Allowed", "only GET and HEAD are supported\n")
    } else {
        route(path.split('?').next().unwrap_or("/"), config)
    };
    write_response(&mut stream, &resp, head_only);
}

fn write_response(stream: &mut TcpStream, r: &Response, head_only: bool) {
    let head = format!(
        "HTTP/1.1 {}\r\nContent-Type: {}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        r.status,
        r.content_type,
        r.body.len()
    );
    let _ = stream.write_all(head.as_bytes());
    if !head_only {
        let _ = stream.write_all(&r.body);
    }
    let _ = stream.flush();
}

fn route(path: &str, config: &ServeConfig) -> Response {
    if path == "/logs" || path == "/logs/" {
        let body = serde_json::to_vec_pretty(&list_logs(&config.log_dir)).expect("log list serializes");
        return Response { status: "200 OK", content_type: "application/json", body };
    }
    if let Some(name) = path.strip_prefix("/logs/") {
        return match log_path(&config.log_dir, name).and_then(|p| std::fs::read(p).ok()) {
            Some(body) => Response { status: "200 OK", content_type: "application/octet-stream", body },
            None => Response::text("404 Not Found", "no such log\n"),
        };
    }
    let Some(dir) = &config.static_dir else {
        return if path == "/" || path == "/index.html" {
            Response { status: "200 OK", content_type: "text/html; charset=utf-8", body: BUILTIN_INDEX.as_bytes().to_vec() }
        } else {
            Response::text("404 Not Found", "not found\n")
        };
    };
    match static_file(dir, path) {
        Some(p) => match std::fs::read(&p) {
            Ok(body) => Response { status: "200 OK", content_type: content_type(&p), body },
            Err(_) => Response::text("404 Not Found", "not found\n"),
        },
        None => Response::text("404 Not Found", "not found\n"),
    }
}

/// Maps a URL path to a file under `root`, refusing anything that would
/// leave it.
fn static_file(root: &Path, url: &str) -> Option<PathBuf> {
    let rel = url.trim_start_matches('/');
    let rel = if rel.is_empty() || rel.ends_with('/') { format!("{rel}index.html") } else { rel.to_string() };
    let rel = Path::new(&rel);
    if !rel.components().all(|c| matches!(c, Component::Normal(_))) {
        return None;
    }
    let p = root.join(rel);
    p.is_file().then_some(p)
}

fn content_type(p: &Path) -> &'static str {
    match p.extension().and_then(|e| e.to_str()).unwrap_or("") {
        "html" => "text/html; charset=utf-8",
        "js" | "mjs" => "text/javascript",
        "css" => "text/css",
        "json" => "application/json",
        "svg" => "image/svg+xml",
        "png" => "image/png",
        "wasm" => "application/wasm",
        "log" => "application/octet-stream",
        _ => "application/octet-stream",
    }
}
