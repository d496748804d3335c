use fleet_cli::hub::{stream_bodies, Hub};
use fleet_cli::replay::replay_frames;
use fleet_core::bridge::{encode, Body, Frame};
use fleet_core::demo::demo_layout;
use fleet_core::sim::{Controller, HumanSpec, Mode, SimConfig, World};

fn live_world(seed: u64) -> World {
    let mut cfg = SimConfig { seed, mode: Mode::Phir, snapshot_every: 1, ..SimConfig::default() };
    cfg.human_roster.push(HumanSpec { external: true, ..Default::default() });
    World::new(demo_layout(), cfg).unwrap()
}

fn replies(hub: &mut Hub, id: u64) -> Vec<Body> {
    hub.take_outbox(id)
        .into_iter()
        .map(|f| f.body)
        .filter(|b| matches!(b, Body::Ack(_) | Body::Error(_)))
        .collect()
}

fn ack_of(b: &Body) -> Option<(u64, Option<String>)> {
    match b {
        Body::Ack(a) => Some((a.of, a.note.clone())),
        _ => None,
    }
}

fn error_of(b: &Body) -> Option<Option<u64>> {
    match b {
        Body::Error(e) => Some(e.of),
        _ => None,
    }
}

#[test]
fn acks_and_errors() {
    let mut hub = Hub::new(live_world(1));
    let c = hub.connect();
    hub.handle_line(c, r#"{"seq":1,"kind":"steer","data":{"worker":0,"direction":{"x":1.0,"y":0.0},"speed":1.0}}"#);
    hub.handle_line(c, r#"{"seq":2,"kind":"steer","data":{"worker":0,"target":{"x":3.0,"y":2.0},"speed":5.0}}"#);
    hub.handle_line(c, "this is not json");
    hub.handle_line(c, r#"{"seq":3,"kind":"teleport","data":{}}"#);
    hub.handle_line(c, r#"{"seq":3,"kind":"pause"}"#);
    hub.handle_line(c, r#"{"seq":3,"kind":"resume"}"#);
    hub.handle_line(c, r#"{"seq":4,"kind":"steer","data":{"worker":1,"speed":1.0}}"#);
    hub.handle_line(c, r#"{"seq":5,"kind":"state","data":{}}"#);
    hub.handle_line(c, r#"{"seq":6,"kind":"set_mode","data":{"mode":"shir"}}"#);
    hub.handle_line(c, r#"{"seq":7,"kind":"spawn_deviation","data":{"worker":0,"toward":5}}"#);
    hub.handle_line(c, r#"{"seq":8,"kind":"spawn_deviation","data":{"worker":1,"toward":5}}"#);
    hub.handle_line(c, "   ");
    let r = replies(&mut hub, c);
    assert_eq!(r.len(), 11, "{r:?}");
    assert_eq!(ack_of(&r[0]), Some((1, None)));
    assert_eq!(ack_of(&r[1]), Some((2, Some("speed clamped to 1.6 m/s".into()))));
    assert_eq!(error_of(&r[2]), Some(None));
    assert_eq!(error_of(&r[3]), Some(Some(3)));
    // Seq 3 is still free after the unknown kind was refused, so pause is
    // applied and the second use of 3 is rejected.
    assert_eq!(ack_of(&r[4]), Some((3, None)));
    assert_eq!(error_of(&r[5]), Some(Some(3)));
    assert_eq!(error_of(&r[6]), Some(Some(4)), "scripted workers refuse steering");
    assert_eq!(error_of(&r[7]), Some(Some(5)), "clients may not send server kinds");
    assert_eq!(ack_of(&r[8]), Some((6, None)));
    assert_eq!(error_of(&r[9]), Some(Some(7)), "external workers are not scripted");
    assert_eq!(ack_of(&r[10]), Some((8, None)));
    assert!(hub.is_paused());
    assert_eq!(hub.world().mode(), Mode::Shir);
}

#[test]
fn pause_freezes_time_but_keeps_streaming() {
    let mut hub = Hub::new(live_world(2));
    let c = hub.connect();
    for _ in 0..5 {
        hub.tick();
    }
    hub.handle_line(c, r#"{"seq":1,"kind":"pause"}"#);
    let t = hub.world().time();
    let tick = hub.world().tick();
    hub.take_outbox(c);
    for _ in 0..50 {
        hub.tick();
    }
    assert_eq!(hub.world().time(), t);
    assert_eq!(hub.world().tick(), tick);
    let states: Vec<f64> = hub
        .take_outbox(c)
        .into_iter()
        .filter_map(|f| match f.body {
            Body::State(s) => Some(s.time),
            _ => None,
        })
        .collect();
    assert_eq!(states.len(), 50);
    assert!(states.iter().all(|&s| s == t));
    hub.handle_line(c, r#"{"seq":2,"kind":"resume"}"#);
    hub.tick();
    assert!(hub.world().time() > t);
}

#[test]
fn disconnect_holds_steered_workers() {
    let mut hub = Hub::new(live_world(3));
    let a = hub.connect();
    let b = hub.connect();
    hub.handle_line(a, r#"{"seq":1,"kind":"steer","data":{"worker":0,"direction":{"x":1.0,"y":0.0}}}"#);
    hub.handle_line(b, r#"{"seq":1,"kind":"steer","data":{"worker":0,"direction":{"x":0.0,"y":1.0}}}"#);
    hub.disconnect(a);
    // Still steered by the other client.
    assert!(matches!(hub.world().humans()[0].controller, Controller::External { .. }));
    hub.disconnect(b);
    assert_eq!(hub.world().humans()[0].controller, Controller::Hold);
    let before = hub.world().humans()[0].pos;
    for _ in 0..20 {
        hub.tick();
    }
    assert_eq!(hub.world().humans()[0].pos, before);
    assert_eq!(hub.clients().count(), 0);
}

#[test]
fn every_client_sees_strictly_increasing_seq() {
    let mut hub = Hub::new(live_world(4));
    let a = hub.connect();
    hub.tick();
    let b = hub.connect();
    let mut frames: [Vec<Frame>; 2] = Default::default();
    for i in 0..30u64 {
        hub.tick();
        if i % 7 == 0 {
            hub.handle_line(a, &format!(r#"{{"seq":{},"kind":"resume"}}"#, i + 1));
        }
        frames[0].extend(hub.take_outbox(a));
        frames[1].extend(hub.take_outbox(b));
    }
    for f in &frames {
        assert_eq!(f[0].seq, 1);
        assert!(f.windows(2).all(|w| w[1].seq == w[0].seq + 1));
        let ticks: Vec<u64> = f
            .iter()
            .filter_map(|f| match &f.body {
                Body::State(s) => Some(s.tick),
                _ => None,
            })
            .collect();
        assert!(ticks.windows(2).all(|w| w[0] < w[1]), "{ticks:?}");
    }
    // The late client has simply missed what came before it joined.
    let states = |f: &[Frame]| f.iter().filter(|f| f.body.kind() == "state").count();
    assert!(states(&frames[0]) > states(&frames[1]));
    assert_eq!(states(&frames[1]), 30);
}

#[test]
fn replayed_log_reproduces_the_stream() {
    let mut hub = Hub::new(live_world(5)).recording();
    let c = hub.connect();
    let mut log = Vec::new();
    let mut received = Vec::new();
    for _ in 0..600 {
        log.extend(hub.tick());
        received.extend(hub.take_outbox(c));
    }
    let replayed = replay_frames(&log);
    assert_eq!(replayed, received);
    assert_eq!(stream_bodies(&log), hub.stream());
    // Identical on the wire as well.
    let wire = |v: &[Frame]| v.iter().map(encode).collect::<Vec<_>>();
    assert_eq!(wire(&replayed), wire(&received));
}
