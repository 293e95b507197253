mod common;

use common::*;
use futures_util::{SinkExt, StreamExt};
use needleguide_core::guidance::{GuidanceStatus, TrajectoryPlan};
use needleguide_core::protocol::{
    decode, encode, error_code, CalibrationResult, CalibrationRoutine, Control, Decoded, Hello, Message, RigidBodyFrame,
    SimCommand, Subscribe, PROTOCOL_VERSION,
};
use needleguide_core::simulator::{bodies, NoiseModel, Scenario, Simulator};
use needleguide_core::{Pose, Vec3};
use std::collections::HashMap;
use std::time::Duration;

fn frame(m: &Message) -> Option<&RigidBodyFrame> {
    match m {
        Message::RigidBodyFrame(f) => Some(f),
        _ => None,
    }
}

fn is_last_needle(n: u32) -> impl Fn(&Message) -> bool {
    move |m| matches!(m, Message::RigidBodyFrame(f) if f.body_id == bodies::NEEDLE && f.sequence == n - 1)
}

fn error_code_of(m: &Message) -> Option<u16> {
    match m {
        Message::Error(e) => Some(e.code),
        _ => None,
    }
}

#[tokio::test]
async fn two_clients_receive_each_frame_exactly_once() {
    let s = server(&[("scenario", "\"static\""), ("scenario_samples", "50"), ("speed", "0"), ("wait_for_clients", "2")]).await;
    let mut a = Client::greeted(s.tcp_addr).await;
    let mut b = Client::greeted(s.tcp_addr).await;
    for c in [&mut a, &mut b] {
        let (last, seen) = c.recv_until(is_last_needle(50)).await;
        assert!(last.is_some());
        let mut counts: HashMap<(u16, u32), usize> = HashMap::new();
        for f in seen.iter().chain(last.iter()).filter_map(frame) {
            *counts.entry((f.body_id, f.sequence)).or_default() += 1;
        }
        for body in [bodies::HEADSET, bodies::NEEDLE] {
            for seq in 0..50 {
                assert_eq!(counts.get(&(body, seq)), Some(&1), "body {body} seq {seq}");
            }
        }
    }
    s.shutdown().await;
}

#[tokio::test]
async fn hello_gets_server_hello_and_version_mismatch_is_flagged() {
    let s = server(&[("scenario", "\"static\""), ("scenario_samples", "1")]).await;
    let mut c = Client::connect(s.tcp_addr).await;
    c.send(&Message::Hello(Hello { client_name: "old".into(), protocol_version: PROTOCOL_VERSION + 1 })).await;
    let (err, _) = c.recv_until(|m| matches!(m, Message::Error(_))).await;
    assert_eq!(err.as_ref().and_then(error_code_of), Some(error_code::UNSUPPORTED));
    let (hello, _) = c.recv_until(|m| matches!(m, Message::Hello(_))).await;
    assert!(matches!(hello, Some(Message::Hello(h)) if h.protocol_version == PROTOCOL_VERSION));
    s.shutdown().await;
}

#[tokio::test]
async fn plan_is_echoed_to_all_and_invalid_plan_only_to_sender() {
    let s = server(&[("scenario", "\"static\""), ("scenario_samples", "1"), ("handedness_conversion", "false")]).await;
    let mut a = Client::greeted(s.tcp_addr).await;
    let mut b = Client::greeted(s.tcp_addr).await;
    // make sure both are registered before the plan goes out
    for c in [&mut a, &mut b] {
        c.recv_until(|m| matches!(m, Message::Hello(_))).await;
    }
    let plan = TrajectoryPlan { id: 9, entry: Vec3::new(0.0, 0.0, 0.1), target: Vec3::new(0.0, 0.0, 0.2) };
    a.send(&Message::PlanUpdate(plan)).await;
    for c in [&mut a, &mut b] {
        let (echo, _) = c.recv_until(|m| matches!(m, Message::PlanUpdate(_))).await;
        assert_eq!(echo, Some(Message::PlanUpdate(plan)));
    }
    let bad = TrajectoryPlan { id: 10, entry: Vec3::zeros(), target: Vec3::zeros() };
    a.send(&Message::PlanUpdate(bad)).await;
    let (err, _) = a.recv_until(|m| matches!(m, Message::Error(_))).await;
    assert_eq!(err.as_ref().and_then(error_code_of), Some(error_code::INVALID_PLAN));
    // b sees neither an error nor a second plan before the next heartbeat
    let (_, before) = b.recv_until(|m| matches!(m, Message::Heartbeat(_))).await;
    assert!(before.iter().all(|m| !matches!(m, Message::Error(_) | Message::PlanUpdate(_))));
    // a third client joining later is told the surviving plan
    let mut c = Client::greeted(s.tcp_addr).await;
    let (p, _) = c.recv_until(|m| matches!(m, Message::PlanUpdate(_))).await;
    assert_eq!(p, Some(Message::PlanUpdate(plan)));
    s.shutdown().await;
}

#[tokio::test]
async fn malformed_client_is_dropped_alone() {
    let s = server(&[("scenario", "\"static\""), ("heartbeat_interval_s", "0.05")]).await;
    let mut good = Client::greeted(s.tcp_addr).await;
    let mut bad = Client::greeted(s.tcp_addr).await;
    bad.send_raw(b"GET / HTTP/1.1\r\n\r\n").await;
    let (err, _) = bad.recv_until(|m| matches!(m, Message::Error(_))).await;
    assert_eq!(err.as_ref().and_then(error_code_of), Some(error_code::MALFORMED_MESSAGE));
    while bad.recv().await.is_some() {}
    assert!(bad.closed, "malformed client must be disconnected");
    for _ in 0..3 {
        let (hb, _) = good.recv_until(|m| matches!(m, Message::Heartbeat(_))).await;
        assert!(hb.is_some());
    }
    assert_eq!(s.stats().malformed_clients, 1);
    s.shutdown().await;
}

#[tokio::test]
async fn heartbeats_follow_the_configured_interval() {
    let s = server(&[("scenario", "\"static\""), ("scenario_samples", "1"), ("heartbeat_interval_s", "0.1")]).await;
    let mut c = Client::greeted(s.tcp_addr).await;
    let start = std::time::Instant::now();
    let mut stamps = Vec::new();
    while stamps.len() < 4 {
        if let (Some(Message::Heartbeat(h)), _) = c.recv_until(|m| matches!(m, Message::Heartbeat(_))).await {
            stamps.push(h.timestamp);
        }
    }
    assert!(start.elapsed() < Duration::from_secs(2));
    for w in stamps.windows(2) {
        assert!((w[1] - w[0] - 0.1).abs() < 0.05, "{stamps:?}");
    }
    s.shutdown().await;
}

#[tokio::test]
async fn guidance_follows_every_needle_frame_once_plan_and_needle_are_known() {
    let s = server(&[("scenario", "\"insertion-scripted\""), ("scenario_samples", "120"), ("speed", "0"), ("wait_for_clients", "1")])
        .await;
    let mut c = Client::greeted(s.tcp_addr).await;
    let (last, seen) = c.recv_until(is_last_needle(120)).await;
    let next = c.recv().await;
    let all: Vec<Message> = seen.into_iter().chain(last).chain(next).collect();
    let plan_at = all.iter().position(|m| matches!(m, Message::PlanUpdate(_))).expect("plan from source");
    let needle_at = all.iter().position(|m| matches!(m, Message::CalibrationResult(CalibrationResult::Needle { .. })));
    assert!(needle_at.unwrap() < plan_at);
    let mut needle_frames = 0;
    for (i, m) in all.iter().enumerate().skip(plan_at) {
        if matches!(frame(m), Some(f) if f.body_id == bodies::NEEDLE) {
            needle_frames += 1;
            let Some(Message::Guidance(g)) = all.get(i + 1) else { panic!("no guidance after needle frame at {i}") };
            assert_eq!(g.timestamp, frame(m).unwrap().timestamp);
            assert_eq!(g.plan_id, 1);
        }
    }
    assert_eq!(needle_frames, 120);
    s.shutdown().await;
}

#[tokio::test]
async fn pivot_capture_over_the_wire_recovers_the_tip() {
    let s = server(&[("scenario", "\"pivot\""), ("scenario_samples", "120"), ("speed", "0"), ("wait_for_clients", "1")]).await;
    let mut c = Client::connect(s.tcp_addr).await;
    // the capture starts before the source does: Hello releases it
    c.send(&Message::Control(Control::BeginCalibration { routine: CalibrationRoutine::NeedleTip })).await;
    c.hello().await;
    c.recv_until(is_last_needle(120)).await;
    c.send(&Message::Control(Control::EndCalibration)).await;
    let (tip, _) = c.recv_until(|m| matches!(m, Message::CalibrationResult(_) | Message::Error(_))).await;
    let Some(Message::CalibrationResult(CalibrationResult::NeedleTip { tip_world, tip_offset, rms })) = tip else {
        panic!("expected a tip result, got {tip:?}")
    };
    // the source is right-handed; published coordinates have z mirrored
    assert!((tip_offset - Vec3::new(0.0, 0.0, -0.15)).norm() < 1e-9);
    assert!(tip_world.norm() < 1e-9);
    assert!(rms < 1e-9);
    let (needle, _) = c.recv_until(|m| matches!(m, Message::CalibrationResult(_))).await;
    let Some(Message::CalibrationResult(CalibrationResult::Needle { tip_offset: t, axis_dir, .. })) = needle else { panic!() };
    assert_eq!(t, tip_offset);
    assert!((axis_dir - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-9);
    s.shutdown().await;
}

#[tokio::test]
async fn degenerate_capture_broadcasts_error_and_end_without_begin_is_rejected() {
    let s = server(&[("scenario", "\"static\""), ("scenario_samples", "60"), ("speed", "0"), ("wait_for_clients", "2")]).await;
    let mut a = Client::connect(s.tcp_addr).await;
    a.send(&Message::Control(Control::BeginCalibration { routine: CalibrationRoutine::NeedleTip })).await;
    a.hello().await;
    let mut b = Client::greeted(s.tcp_addr).await;
    a.recv_until(is_last_needle(60)).await;
    a.send(&Message::Control(Control::EndCalibration)).await;
    for c in [&mut a, &mut b] {
        let (e, _) = c.recv_until(|m| matches!(m, Message::Error(_) | Message::CalibrationResult(_))).await;
        assert_eq!(e.as_ref().and_then(error_code_of), Some(error_code::CALIBRATION_FAILED), "{e:?}");
    }
    a.send(&Message::Control(Control::EndCalibration)).await;
    let (e, _) = a.recv_until(|m| matches!(m, Message::Error(_))).await;
    assert_eq!(e.as_ref().and_then(error_code_of), Some(error_code::COMMAND_REJECTED));
    s.shutdown().await;
}

#[tokio::test]
async fn nudges_outside_manual_insertion_are_rejected_to_sender() {
    let s = server(&[("scenario", "\"static\"")]).await;
    let mut c = Client::greeted(s.tcp_addr).await;
    c.send(&Message::SimCommand(SimCommand::NudgeTranslate { delta: Vec3::x() * 1e-3 })).await;
    let (e, _) = c.recv_until(|m| matches!(m, Message::Error(_))).await;
    assert_eq!(e.as_ref().and_then(error_code_of), Some(error_code::COMMAND_REJECTED));
    s.shutdown().await;
}

#[tokio::test]
async fn hand_eye_fixes_camera_and_streaming_survives_hidden_headset() {
    let s = server(&[("scenario", "\"handeye\""), ("scenario_samples", "20"), ("speed", "0"), ("wait_for_clients", "1")]).await;
    let mut c = Client::connect(s.tcp_addr).await;
    c.send(&Message::Control(Control::BeginCalibration { routine: CalibrationRoutine::HandEye })).await;
    c.hello().await;
    c.recv_until(|m| matches!(m, Message::RigidBodyFrame(f) if f.body_id == bodies::HEADSET_DISPLAY && f.sequence == 20)).await;
    c.send(&Message::Control(Control::EndCalibration)).await;
    let (he, _) = c.recv_until(|m| matches!(m, Message::CalibrationResult(_) | Message::Error(_))).await;
    let Some(Message::CalibrationResult(CalibrationResult::HandEye { rotation_residual, translation_residual, .. })) = he else {
        panic!("expected a hand-eye result, got {he:?}")
    };
    assert!(rotation_residual < 1e-9 && translation_residual < 1e-9);

    // 240 frames at 120 Hz: the headset drops out after the first second
    c.send(&Message::SimCommand(SimCommand::SelectScenario { name: "insertion-scripted".into() })).await;
    let mut hidden_at = None;
    let (mut needle_after, mut guidance_after, mut lost) = (0, 0, 0);
    let mut t0 = None;
    while let Some(m) = c.recv_within(Duration::from_secs(3)).await {
        match &m {
            Message::RigidBodyFrame(f) if f.body_id == bodies::HEADSET => {
                let t0 = *t0.get_or_insert(f.timestamp);
                if !f.valid && hidden_at.is_none() {
                    hidden_at = Some(f.timestamp - t0);
                }
            }
            Message::RigidBodyFrame(f) if f.body_id == bodies::NEEDLE && hidden_at.is_some() => {
                assert!(f.valid);
                needle_after += 1;
            }
            Message::Guidance(g) if hidden_at.is_some() => {
                guidance_after += 1;
                lost += usize::from(g.state.status == GuidanceStatus::Lost);
            }
            _ => {}
        }
        if guidance_after >= 240 {
            break;
        }
    }
    let hidden_at = hidden_at.expect("headset never went invalid");
    assert!((hidden_at - 1.0).abs() < 0.02, "{hidden_at}");
    assert!(needle_after >= 240);
    assert_eq!(guidance_after, needle_after);
    assert_eq!(lost, 0);
    s.shutdown().await;
}

#[tokio::test]
async fn debug_echo_round_trips_source_coordinates() {
    let n = 40;
    let s = server(&[
        ("scenario", "\"static\""),
        ("scenario_samples", &n.to_string()),
        ("speed", "0"),
        ("wait_for_clients", "1"),
        ("debug_echo", "true"),
        ("noise_position_mm", "2"),
        ("noise_orientation_deg", "3"),
        ("seed", "11"),
    ])
    .await;
    let mut source = Simulator::new(
        Scenario::by_name("static", Some(n)).unwrap(),
        NoiseModel::new(2e-3, 3f64.to_radians(), 11),
        120.0,
    )
    .unwrap();
    let mut truth: HashMap<(u16, u32), Pose> = HashMap::new();
    while let Some(tick) = source.step() {
        for m in tick.messages {
            if let Message::RigidBodyFrame(f) = m {
                truth.insert((f.body_id, f.sequence), f.pose());
            }
        }
    }
    let mut c = Client::greeted(s.tcp_addr).await;
    let (_, seen) = c
        .recv_until(|m| matches!(m, Message::RigidBodyFrame(f) if f.body_id == bodies::PROBE && f.sequence == n as u32 - 1))
        .await;
    let published: Vec<RigidBodyFrame> = seen.iter().filter_map(frame).copied().collect();
    assert!(published.iter().any(|f| (f.pose().position - truth[&(f.body_id, f.sequence)].position).norm() > 1e-3));
    for f in &published {
        c.send(&Message::RigidBodyFrame(*f)).await;
    }
    let mut echoed = 0;
    while echoed < published.len() {
        let (m, _) = c.recv_until(|m| matches!(m, Message::RigidBodyFrame(_))).await;
        let f = *frame(m.as_ref().expect("echo")).unwrap();
        let want = truth[&(f.body_id, f.sequence)];
        assert!((f.position - want.position).norm() < 1e-12);
        assert!(f.orientation.angle_to(&want.orientation) < 1e-12);
        echoed += 1;
    }
    s.shutdown().await;
}

#[tokio::test]
async fn subscribe_filters_bodies() {
    let s = server(&[("scenario", "\"static\""), ("scenario_samples", "30"), ("speed", "0"), ("wait_for_clients", "1")]).await;
    let mut c = Client::connect(s.tcp_addr).await;
    c.send(&Message::Subscribe(Subscribe { bodies: Some(vec![bodies::PROBE]) })).await;
    c.hello().await;
    let (_, seen) = c
        .recv_until(|m| matches!(m, Message::RigidBodyFrame(f) if f.body_id == bodies::PROBE && f.sequence == 29))
        .await;
    assert!(seen.iter().filter_map(frame).all(|f| f.body_id == bodies::PROBE));
    assert_eq!(seen.iter().filter_map(frame).count(), 29);
    s.shutdown().await;
}

#[tokio::test]
async fn websocket_bridge_carries_the_same_bytes() {
    let s = server(&[("scenario", "\"static\""), ("scenario_samples", "20"), ("speed", "0"), ("wait_for_clients", "2")]).await;
    let mut tcp = Client::greeted(s.tcp_addr).await;
    let url = format!("ws://{}", s.ws_addr.unwrap());
    let (mut ws, _) = tokio_tungstenite::connect_async(url).await.unwrap();
    let hello = Message::Hello(Hello { client_name: "ws".into(), protocol_version: PROTOCOL_VERSION });
    ws.send(tokio_tungstenite::tungstenite::Message::Binary(encode(&hello).unwrap().into())).await.unwrap();

    let (_, tcp_seen) = tcp.recv_until(is_last_needle(20)).await;
    let tcp_frames: Vec<RigidBodyFrame> = tcp_seen.iter().filter_map(frame).copied().collect();
    let mut ws_frames = Vec::new();
    while ws_frames.len() < tcp_frames.len() + 1 {
        let msg = tokio::time::timeout(WAIT, ws.next()).await.unwrap().unwrap().unwrap();
        let tokio_tungstenite::tungstenite::Message::Binary(data) = msg else { continue };
        // one protocol frame per websocket message
        let Ok(Decoded::Message { message, consumed }) = decode(&data) else { panic!("bad ws frame") };
        assert_eq!(consumed, data.len());
        assert_eq!(encode(&message).unwrap(), data.to_vec());
        if let Message::RigidBodyFrame(f) = message {
            ws_frames.push(f);
        }
    }
    assert_eq!(&ws_frames[..tcp_frames.len()], &tcp_frames[..]);
    s.shutdown().await;
}

#[tokio::test]
async fn startup_errors_are_reported() {
    let s = server(&[("scenario", "\"static\"")]).await;
    let taken = s.tcp_addr.to_string();
    let err = needleguide_server::start(config(&[("tcp_bind", &format!("\"{taken}\""))])).await.err().unwrap();
    assert!(err.to_string().contains("cannot bind"), "{err}");
    let err = needleguide_server::start(config(&[("source", "\"recording\""), ("recording", "\"/nonexistent.jsonl\"")]))
        .await
        .err()
        .unwrap();
    assert!(err.to_string().contains("recording"), "{err}");
    s.shutdown().await;
}

#[tokio::test]
async fn recording_source_replays_in_order() {
    let out = needleguide_core::simulator::generate(
        Scenario::by_name("static", Some(25)).unwrap(),
        NoiseModel::none(3),
        120.0,
    )
    .unwrap();
    let rec = needleguide_core::recording::Recording::from(out);
    let path = std::env::temp_dir().join(format!("needleguide-rec-{}.jsonl", std::process::id()));
    std::fs::write(&path, rec.to_string()).unwrap();
    let s = server(&[
        ("source", "\"recording\""),
        ("recording", &format!("{:?}", path.display().to_string())),
        ("speed", "0"),
        ("wait_for_clients", "1"),
        ("handedness_conversion", "false"),
    ])
    .await;
    let mut c = Client::greeted(s.tcp_addr).await;
    let (last, seen) = c.recv_until(is_last_needle(25)).await;
    let got: Vec<RigidBodyFrame> = seen.iter().chain(last.iter()).filter_map(frame).copied().collect();
    let want: Vec<RigidBodyFrame> = rec.messages.iter().filter_map(frame).copied().collect();
    assert_eq!(got.len(), want.len() - 1);
    for (g, w) in got.iter().zip(&want) {
        assert_eq!((g.body_id, g.sequence, g.position, g.orientation), (w.body_id, w.sequence, w.position, w.orientation));
    }
    c.send(&Message::SimCommand(SimCommand::SetNoise { position_sigma: 0.0, orientation_sigma: 0.0 })).await;
    let (e, _) = c.recv_until(|m| matches!(m, Message::Error(_))).await;
    assert_eq!(e.as_ref().and_then(error_code_of), Some(error_code::COMMAND_REJECTED));
    let _ = std::fs::remove_file(path);
    s.shutdown().await;
}
