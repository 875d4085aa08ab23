use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::time::Duration;

use oikos_bridge::protocol::*;
use oikos_bridge::snapshot::{apply, Snapshot};
use oikos_bridge::{serve, BridgeError, Client, ClientError, ServeConfig, ServerHandle, SessionSource};
use oikos_core::fixtures::tax;
use oikos_core::geometry::Vec3;
use oikos_core::runtime::{replay_bytes, ActionCommand, EpisodeLog, TaskSpec};

fn source(task: &str) -> SessionSource {
    let task = TaskSpec::bundled(task).unwrap();
    let scene = task.scene(None).unwrap();
    SessionSource { scene, taxonomy: tax(), task, seed: 5 }
}

fn start(task: &str, tweak: impl FnOnce(&mut ServeConfig)) -> (ServerHandle, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ServeConfig { log_dir: dir.path().join("logs"), ..Default::default() };
    tweak(&mut cfg);
    (serve(source(task), cfg).unwrap(), dir)
}

fn nudge(i: u64) -> ClientMsg {
    let dz = if i % 2 == 0 { 0.2 } else { -0.2 };
    ClientMsg::Action { actions: vec![ActionCommand::move_hand(0, Vec3::new(0.1, 0.0, dz))] }
}

fn join_snapshot(c: &mut Client) -> Snapshot {
    c.recv_until(|m| match m {
        ServerMsg::Snapshot(s) if s.reason == SnapshotReason::Join => Some(s.snapshot.clone()),
        _ => None,
    })
    .unwrap()
}

/// Sends an action and returns the acknowledging delta.
fn act(c: &mut Client, msg: &ClientMsg) -> DeltaMsg {
    let seq = c.send(msg).unwrap();
    c.recv_until(|m| match m {
        ServerMsg::Delta(d) if d.ack.is_some_and(|a| a.seq == seq) => Some(d.clone()),
        ServerMsg::Error(e) if e.seq == Some(seq) => panic!("action refused: {e:?}"),
        _ => None,
    })
    .unwrap()
}

fn expect_close(c: &mut Client) -> (Option<ErrorMsg>, String) {
    let mut err = None;
    loop {
        match c.recv() {
            Ok((_, ServerMsg::Error(e))) => err = Some(e),
            Ok(_) => {}
            Err(ClientError::Closed(reason)) => return (err, reason),
            Err(e) => panic!("expected a close, got {e}"),
        }
    }
}

#[test]
fn hello_attaches_with_the_scene_digest() {
    let (srv, _d) = start("cooking_meat", |_| {});
    let (mut c, attach) = Client::connect(&srv.ws_url(), Role::Controller).unwrap();
    let src = source("cooking_meat");
    assert_eq!(attach.protocol, "oikos/1");
    assert_eq!(attach.scene_digest, src.scene.digest_hex());
    assert_eq!(attach.step, 0);
    assert_eq!(attach.task, "cooking_meat");
    let snap = join_snapshot(&mut c);
    assert_eq!(snap.world_digest, src.open().unwrap().world().digest_hex());
}

#[test]
fn version_mismatch_is_refused() {
    let (srv, _d) = start("cooking_meat", |_| {});
    let mut c = Client::connect_raw(&srv.ws_url()).unwrap();
    c.send(&ClientMsg::Hello { protocol: "oikos/0".into(), role: Role::Observer, client: None }).unwrap();
    let (err, _) = expect_close(&mut c);
    assert_eq!(err.unwrap().code, ErrorCode::VersionMismatch);
}

#[test]
fn messages_before_hello_violate_the_protocol() {
    let (srv, _d) = start("cooking_meat", |_| {});
    let mut c = Client::connect_raw(&srv.ws_url()).unwrap();
    c.send(&nudge(0)).unwrap();
    let (err, reason) = expect_close(&mut c);
    assert_eq!(err.unwrap().code, ErrorCode::ProtocolViolation);
    assert!(reason.contains("ProtocolViolation"), "{reason}");

    let mut c = Client::connect_raw(&srv.ws_url()).unwrap();
    c.send_text("{not json").unwrap();
    assert_eq!(expect_close(&mut c).0.unwrap().code, ErrorCode::ProtocolViolation);
}

#[test]
fn observer_action_closes_with_protocol_violation() {
    let (srv, _d) = start("cooking_meat", |_| {});
    let (mut obs, _) = Client::connect(&srv.ws_url(), Role::Observer).unwrap();
    join_snapshot(&mut obs);
    obs.send(&nudge(0)).unwrap();
    let (err, reason) = expect_close(&mut obs);
    assert_eq!(err.unwrap().code, ErrorCode::ProtocolViolation);
    assert!(reason.contains("observers may not send actions"), "{reason}");
    // The session did not move.
    let (_, a) = Client::connect(&srv.ws_url(), Role::Observer).unwrap();
    assert_eq!(a.step, 0);
}

#[test]
fn every_action_is_acknowledged_with_its_step_in_order() {
    let (srv, _d) = start("cooking_meat", |_| {});
    let (mut c, _) = Client::connect(&srv.ws_url(), Role::Controller).unwrap();
    let (mut obs, _) = Client::connect(&srv.ws_url(), Role::Observer).unwrap();
    let mut seqs = Vec::new();
    for i in 0..20 {
        seqs.push(c.send(&nudge(i)).unwrap());
        if seqs.len() == 5 {
            break;
        }
    }
    let mut acks = Vec::new();
    let mut last_server_seq = 0;
    while acks.len() < seqs.len() {
        let (sseq, m) = c.recv().unwrap();
        assert!(sseq > last_server_seq, "server sequence numbers increase");
        last_server_seq = sseq;
        if let ServerMsg::Delta(DeltaMsg { ack: Some(a), .. }) = m {
            acks.push(a);
        }
    }
    assert_eq!(acks.iter().map(|a| a.seq).collect::<Vec<_>>(), seqs);
    assert_eq!(acks.iter().map(|a| a.step).collect::<Vec<_>>(), vec![1, 2, 3, 4, 5]);

    // The observer sees the same deltas, unacknowledged, and can fold them.
    let mut view = join_snapshot(&mut obs);
    while view.step < 5 {
        if let (_, ServerMsg::Delta(d)) = obs.recv().unwrap() {
            assert!(d.ack.is_none());
            view = apply(&view, &d.delta).unwrap();
        }
    }
}

#[test]
fn second_controller_is_turned_away() {
    let (srv, _d) = start("cooking_meat", |_| {});
    let (_c, _) = Client::connect(&srv.ws_url(), Role::Controller).unwrap();
    match Client::connect(&srv.ws_url(), Role::Controller) {
        Err(ClientError::Refused(e)) => assert_eq!(e.code, ErrorCode::ControllerTaken),
        other => panic!("expected refusal, got {:?}", other.map(|r| r.1)),
    }
}

#[test]
fn more_than_eight_unacknowledged_actions_are_busy() {
    let (srv, _d) = start("cooking_meat", |c| c.step_interval = Duration::from_millis(150));
    let (mut c, _) = Client::connect(&srv.ws_url(), Role::Controller).unwrap();
    let sent: Vec<u64> = (0..12).map(|i| c.send(&nudge(i)).unwrap()).collect();
    let (mut acked, mut busy) = (Vec::new(), Vec::new());
    while acked.len() + busy.len() < sent.len() {
        match c.recv().unwrap().1 {
            ServerMsg::Delta(DeltaMsg { ack: Some(a), .. }) => acked.push(a.seq),
            ServerMsg::Error(e) if e.code == ErrorCode::Busy => busy.push(e.seq.unwrap()),
            _ => {}
        }
    }
    assert_eq!(acked, sent[..8].to_vec());
    assert_eq!(busy, sent[8..].to_vec());
    // Once acknowledged, the controller may send again.
    assert_eq!(act(&mut c, &nudge(0)).ack.unwrap().step, 9);
}

#[test]
fn controller_reconnect_resumes_at_the_same_step() {
    let (srv, dir) = start("cooking_meat", |_| {});
    let (mut c, _) = Client::connect(&srv.ws_url(), Role::Controller).unwrap();
    join_snapshot(&mut c);
    c.send(&ClientMsg::RecordControl(RecordControl::Start { name: Some("resume".into()) })).unwrap();
    c.recv_until(|m| matches!(m, ServerMsg::RecordControl(r) if r.op == "start").then_some(())).unwrap();
    for i in 0..7 {
        act(&mut c, &nudge(i));
    }
    drop(c); // abrupt disconnect

    std::thread::sleep(Duration::from_millis(100));
    let (mut obs, a) = Client::connect(&srv.ws_url(), Role::Observer).unwrap();
    assert_eq!(a.step, 7);
    assert_eq!(a.recording.as_deref(), Some("resume"));
    join_snapshot(&mut obs);
    obs.timeout = Duration::from_millis(300);
    assert!(matches!(obs.recv(), Err(ClientError::Timeout)), "nothing advances without a controller");

    let (mut c, a) = Client::connect(&srv.ws_url(), Role::Controller).unwrap();
    assert_eq!(a.step, 7);
    for i in 7..10 {
        assert_eq!(act(&mut c, &nudge(i)).ack.unwrap().step, i + 1);
    }
    c.send(&ClientMsg::RecordControl(RecordControl::Stop {})).unwrap();
    let stop = c.recv_until(|m| match m {
        ServerMsg::RecordControl(r) if r.op == "stop" => Some(r.clone()),
        _ => None,
    });
    let stop = stop.unwrap();
    let bytes = std::fs::read(dir.path().join("logs").join(stop.file.unwrap())).unwrap();
    let src = source("cooking_meat");
    let report = replay_bytes(&bytes, &src.scene, tax()).unwrap();
    assert_eq!(report.step_digests.len(), 10);
    assert_eq!(Some(report.final_digest), stop.final_digest);
}

#[test]
fn recording_marks_and_server_side_verification() {
    let (srv, _d) = start("cooking_meat", |_| {});
    let (mut c, _) = Client::connect(&srv.ws_url(), Role::Controller).unwrap();
    join_snapshot(&mut c);
    c.send(&ClientMsg::RecordControl(RecordControl::Stop {})).unwrap();
    let e = c.recv_until(|m| match m {
        ServerMsg::Error(e) => Some(e.clone()),
        _ => None,
    });
    assert_eq!(e.unwrap().code, ErrorCode::NotRecording);

    for i in 0..3 {
        act(&mut c, &nudge(i));
    }
    c.send(&ClientMsg::RecordControl(RecordControl::Start { name: Some("demo".into()) })).unwrap();
    let reset = c.recv_until(|m| match m {
        ServerMsg::Snapshot(s) if s.reason == SnapshotReason::Reset => Some(s.clone()),
        _ => None,
    });
    assert_eq!(reset.unwrap().snapshot.step, 0, "a recording starts a fresh episode");
    c.send(&ClientMsg::RecordControl(RecordControl::Start { name: None })).unwrap();
    let e = c.recv_until(|m| match m {
        ServerMsg::Error(e) => Some(e.clone()),
        _ => None,
    });
    assert_eq!(e.unwrap().code, ErrorCode::AlreadyRecording);

    for i in 0..20 {
        act(&mut c, &nudge(i));
        if i == 4 {
            c.send(&ClientMsg::RecordControl(RecordControl::Mark { label: "lifted".into() })).unwrap();
        }
    }
    c.send(&ClientMsg::RecordControl(RecordControl::Stop {})).unwrap();
    let stop = c
        .recv_until(|m| match m {
            ServerMsg::RecordControl(r) if r.op == "stop" => Some(r.clone()),
            _ => None,
        })
        .unwrap();
    assert_eq!(stop.step, 20);

    c.send(&ClientMsg::ReplayControl(ReplayControl::Verify { log: "demo".into() })).unwrap();
    let v = c
        .recv_until(|m| match m {
            ServerMsg::ReplayControl(r) if r.op == "verify" => Some(r.clone()),
            _ => None,
        })
        .unwrap();
    assert_eq!(v.ok, Some(true), "{v:?}");
    assert_eq!(v.steps, Some(20));
    assert_eq!(v.final_digest, stop.final_digest);

    // The log is downloadable over HTTP and keeps the marker.
    let bytes = http_get(&srv, "/logs/demo.log").1;
    let log = EpisodeLog::from_bytes(&bytes).unwrap();
    assert_eq!(log.footer.markers.len(), 1);
    assert_eq!(log.footer.markers[0].label, "lifted");
    assert_eq!(log.footer.markers[0].step, 5);

    c.send(&ClientMsg::ReplayControl(ReplayControl::Verify { log: "../etc/passwd".into() })).unwrap();
    let e = c.recv_until(|m| match m {
        ServerMsg::Error(e) => Some(e.clone()),
        _ => None,
    });
    assert_eq!(e.unwrap().code, ErrorCode::UnknownLog);
}

#[test]
fn periodic_snapshots_anchor_the_delta_stream() {
    let (srv, _d) = start("cooking_meat", |c| c.snapshot_every = 10);
    let (mut c, _) = Client::connect(&srv.ws_url(), Role::Controller).unwrap();
    let mut view = join_snapshot(&mut c);
    let mut anchors = 0;
    for i in 0..25 {
        let seq = c.send(&nudge(i)).unwrap();
        loop {
            match c.recv().unwrap().1 {
                ServerMsg::Delta(d) => {
                    view = apply(&view, &d.delta).unwrap();
                    if d.ack.is_some_and(|a| a.seq == seq) && (i + 1) % 10 != 0 {
                        break;
                    }
                }
                ServerMsg::Snapshot(s) => {
                    assert_eq!(s.reason, SnapshotReason::Periodic);
                    assert_eq!(s.snapshot, view);
                    assert_eq!(s.digest, view.digest());
                    anchors += 1;
                    break;
                }
                _ => {}
            }
        }
    }
    assert_eq!(anchors, 2);
}

#[test]
fn finished_sessions_refuse_actions() {
    let mut src = source("cooking_meat");
    src.task.time_limit = 2;
    let dir = tempfile::tempdir().unwrap();
    let srv = serve(src, ServeConfig { log_dir: dir.path().to_path_buf(), ..Default::default() }).unwrap();
    let (mut c, _) = Client::connect(&srv.ws_url(), Role::Controller).unwrap();
    act(&mut c, &nudge(0));
    act(&mut c, &nudge(1));
    let seq = c.send(&nudge(2)).unwrap();
    let e = c.recv_until(|m| match m {
        ServerMsg::Error(e) => Some(e.clone()),
        _ => None,
    });
    let e = e.unwrap();
    assert_eq!((e.code, e.seq), (ErrorCode::SessionFinished, Some(seq)));
    let seq = c.send(&ClientMsg::Action { actions: vec![ActionCommand::SetTrigger { hand: 9, fraction: 1.0 }] }).unwrap();
    let e = c.recv_until(|m| match m {
        ServerMsg::Error(e) => Some(e.clone()),
        _ => None,
    });
    assert_eq!(e.unwrap().seq, Some(seq));
}

#[test]
fn bye_is_answered() {
    let (srv, _d) = start("cooking_meat", |_| {});
    let (mut c, _) = Client::connect(&srv.ws_url(), Role::Observer).unwrap();
    c.send(&ClientMsg::Bye { reason: None }).unwrap();
    let bye = c.recv_until(|m| matches!(m, ServerMsg::Bye { .. }).then_some(()));
    assert!(bye.is_ok());
}

fn http_get(srv: &ServerHandle, path: &str) -> (String, Vec<u8>) {
    let mut s = TcpStream::connect(srv.local_addr()).unwrap();
    write!(s, "GET {path} HTTP/1.1\r\nHost: localhost\r\n\r\n").unwrap();
    let mut buf = Vec::new();
    s.read_to_end(&mut buf).unwrap();
    let split = buf.windows(4).position(|w| w == b"\r\n\r\n").unwrap();
    (String::from_utf8_lossy(&buf[..split]).to_string(), buf[split + 4..].to_vec())
}

#[test]
fn static_files_and_log_listing_share_the_port() {
    let dir = tempfile::tempdir().unwrap();
    let web = dir.path().join("web");
    std::fs::create_dir_all(web.join("js")).unwrap();
    std::fs::write(web.join("index.html"), "<h1>console</h1>").unwrap();
    std::fs::write(web.join("js/app.js"), "export {}").unwrap();
    let cfg = ServeConfig { static_dir: Some(web), log_dir: dir.path().join("logs"), ..Default::default() };
    let srv = serve(source("cooking_meat"), cfg).unwrap();

    let (head, body) = http_get(&srv, "/");
    assert!(head.starts_with("HTTP/1.1 200"), "{head}");
    assert_eq!(body, b"<h1>console</h1>");
    let (head, _) = http_get(&srv, "/js/app.js");
    assert!(head.contains("text/javascript"));
    assert!(http_get(&srv, "/../Cargo.toml").0.starts_with("HTTP/1.1 404"));
    let (head, body) = http_get(&srv, "/logs");
    assert!(head.contains("application/json"));
    assert_eq!(serde_json::from_slice::<Vec<LogEntry>>(&body).unwrap(), vec![]);

    // The WebSocket endpoint still works on the same port.
    assert!(Client::connect(&srv.ws_url(), Role::Observer).is_ok());
}

#[test]
fn busy_port_is_reported() {
    let taken = TcpListener::bind("127.0.0.1:0").unwrap();
    let port = taken.local_addr().unwrap().port();
    let dir = tempfile::tempdir().unwrap();
    let r = serve(source("cooking_meat"), ServeConfig { port, log_dir: dir.path().to_path_buf(), ..Default::default() });
    assert!(matches!(r, Err(BridgeError::PortInUse(p)) if p == port));
}

#[test]
fn shutdown_says_bye_to_clients() {
    let (srv, _d) = start("cooking_meat", |_| {});
    let (mut c, _) = Client::connect(&srv.ws_url(), Role::Observer).unwrap();
    join_snapshot(&mut c);
    srv.shutdown();
    let got = c.recv_until(|m| match m {
        ServerMsg::Bye { reason } => Some(reason.clone()),
        _ => None,
    });
    assert_eq!(got.unwrap(), "server shutting down");
}
