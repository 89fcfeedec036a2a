use std::collections::BTreeMap;
use std::net::Ipv4Addr;
use std::path::PathBuf;

use soar_core::config::EngineConfig;
use soar_core::orchestrator::{Catalog, DeployCause, EventDetail, EventKind, Mode, ServiceKind};
use soar_core::packet::parse_capture;
use soar_core::scenario::{
    bundled, compare_modes, reference_detectors, run_scenario, Action, RaceOutcome, ScenarioError, ScenarioOptions,
    ScenarioRun, ScenarioScript, BUNDLED,
};
use soar_core::storage::{read_jsonl, replay};

fn ip(h: u8) -> Ipv4Addr {
    Ipv4Addr::new(172, 26, 233, h)
}

fn script(name: &str) -> ScenarioScript {
    bundled(name).expect("bundled").expect("valid script")
}

fn run(s: &ScenarioScript) -> ScenarioRun {
    run_scenario(s, &ScenarioOptions::for_script(s, reference_detectors().clone())).unwrap()
}

fn golden_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios/ctf_small.report.csv")
}

#[test]
fn ctf_small_matches_golden_report() {
    let got = run(&script("ctf_small")).report.to_csv();
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(golden_path(), &got).unwrap();
    }
    let want = std::fs::read_to_string(golden_path()).expect("golden report present");
    assert_eq!(got, want, "regenerate with UPDATE_GOLDEN=1 after auditing the diff");
}

#[test]
fn bundled_runs_are_byte_identical() {
    for (name, _) in BUNDLED {
        let s = script(name);
        let (a, b) = (run(&s), run(&s));
        assert_eq!(a.events_jsonl(), b.events_jsonl(), "{name} events");
        assert_eq!(a.capture_bytes(), b.capture_bytes(), "{name} capture");
        assert_eq!(a.report.to_csv(), b.report.to_csv(), "{name} report");
    }
}

#[test]
fn seed_changes_traffic() {
    let s = script("ctf_small");
    let a = run(&s);
    let mut opts = ScenarioOptions::for_script(&s, reference_detectors().clone());
    opts.seed = s.seed + 1;
    let b = run_scenario(&s, &opts).unwrap();
    assert_ne!(a.capture_bytes(), b.capture_bytes());
}

#[test]
fn persisted_log_replays_to_final_state() {
    let catalog = Catalog::default();
    for (name, _) in BUNDLED {
        let r = run(&script(name));
        let events = read_jsonl(r.events_jsonl().as_slice()).unwrap();
        assert_eq!(events, r.events, "{name} log round trip");
        assert_eq!(replay(&events, &catalog).unwrap(), r.instances, "{name} replay");
    }
}

#[test]
fn capture_holds_every_emitted_packet_in_time_order() {
    let r = run(&script("ctf_small"));
    let cap = parse_capture(r.capture_bytes().as_slice()).unwrap();
    assert_eq!(cap.packets.len(), r.packets.len());
    assert!(cap.packets.windows(2).all(|w| w[0].ts <= w[1].ts));
    assert!(r.packets.iter().all(|p| p.ts >= 0.0 && p.ts < r.meta.duration));
}

#[test]
fn modbus_probe_deploys_once_and_reaps_after_idle() {
    let r = run(&script("modbus_only"));
    let deploys: Vec<_> = r.events.iter().filter(|e| e.kind == EventKind::Deploy).collect();
    let reaps: Vec<_> = r.events.iter().filter(|e| e.kind == EventKind::Reap).collect();
    assert_eq!(deploys.len(), 1);
    assert_eq!(reaps.len(), 1);
    assert_eq!(deploys[0].service, Some(ServiceKind::Modbus));
    assert_eq!(reaps[0].instance, deploys[0].instance);
    let inst = &r.instances[&deploys[0].instance.unwrap()];
    assert_eq!(inst.reaped_at, Some(inst.last_activity + 900.0));
    let d = r.report.total_deployments(ServiceKind::Modbus);
    assert_eq!((d.bursts, d.instances, d.reaps), (1, 1, 1));
}

#[test]
fn quiet_traffic_deploys_nothing() {
    let r = run(&script("quiet"));
    assert!(r.events.iter().all(|e| e.kind != EventKind::Deploy));
    assert!(r.report.deployments.is_empty());
    assert_eq!(r.report.uptime.dynamic_uptime, 0.0);
}

#[test]
fn sqli_on_first_decoy_places_follow_up_at_next_free_address() {
    // Irregular ladder; deploy-ahead off so the only HTTP decoy sits at .4.
    let s: ScenarioScript = "
        name = follow_up
        duration = 300
        deploy_ahead = off
        latency = 6
        actor a ip=10.9.9.9
        t=10 actor=a HTTP_ATTACK 172.26.233.4 class=benign count=1
        t=30 actor=a HTTP_ATTACK 172.26.233.4 class=sqli count=1
    "
    .parse()
    .unwrap();
    let mut opts = ScenarioOptions::for_script(&s, reference_detectors().clone());
    opts.config.pool.ips = Some([4, 40, 85, 125, 185, 220, 250].map(ip).to_vec());
    let r = run_scenario(&s, &opts).unwrap();
    let alert = r.events.iter().find(|e| e.kind == EventKind::AlertFollowup).expect("alert");
    let dep = r
        .events
        .iter()
        .find(|e| e.service == Some(ServiceKind::HttpSqli) && e.kind == EventKind::Deploy)
        .expect("follow-up deploy");
    assert_eq!(dep.ip, Some(ip(40)));
    assert_eq!(dep.ts.floor(), alert.ts.floor());
    assert!(matches!(dep.detail, EventDetail::Deploy { cause: DeployCause::Alert { .. }, .. }));
}

/// Deploy bursts caused by probes on a port never exceed the script actions
/// that send traffic to that port on reserved addresses.
#[test]
fn no_spontaneous_deployments() {
    let catalog = Catalog::default();
    for (name, _) in BUNDLED {
        let s = script(name);
        let r = run(&s);
        let mut actions_per_port: BTreeMap<u16, usize> = BTreeMap::new();
        for a in &s.actions {
            let ports: Vec<u16> = match &a.action {
                Action::Scan { ports, .. } => ports.clone(),
                Action::HttpAttack { port, .. } | Action::DropFile { port, .. } | Action::Flood { port, .. } => {
                    vec![*port]
                }
                Action::Probe { kind, .. } => vec![kind.port()],
                Action::Beacon { port, .. } => vec![*port],
                Action::Idle { .. } => vec![],
            };
            for p in ports {
                *actions_per_port.entry(p).or_default() += 1;
            }
        }
        for (svc, count) in &r.report.deployments {
            let port = catalog.get(*svc).unwrap().port;
            if catalog.get(*svc).unwrap().follow_up_of.is_none() {
                assert!(
                    count.bursts as usize <= actions_per_port.get(&port).copied().unwrap_or(0),
                    "{name}: {svc} deployed {} times",
                    count.bursts
                );
            }
        }
    }
}

#[test]
fn dynamic_beats_static_on_ctf_small() {
    let (dynamic, fixed) = compare_modes(&script("ctf_small"), reference_detectors()).unwrap();
    assert_eq!(dynamic.meta.mode, Mode::Dynamic);
    assert_eq!(fixed.meta.mode, Mode::Static);
    assert_eq!(fixed.report.uptime.dynamic_uptime, 6.0 * 7200.0);
    assert!(dynamic.report.uptime.dynamic_uptime <= 0.5 * fixed.report.uptime.dynamic_uptime);
    assert!(dynamic.report.mean_engagement > fixed.report.mean_engagement);
    assert!(!dynamic.report.races.is_empty());
    assert!(dynamic.report.races.iter().all(|r| r.outcome == RaceOutcome::Win));
}

#[test]
fn oversized_drop_is_rejected_with_its_line() {
    let s: ScenarioScript =
        "duration = 100\nactor a ip=10.0.0.1\nt=1 actor=a DROP_FILE 172.26.233.4 size=999999".parse().unwrap();
    let err = run_scenario(&s, &ScenarioOptions::for_script(&s, Default::default())).unwrap_err();
    assert!(matches!(err, ScenarioError::ScriptValidation { line: 3, .. }), "{err}");
}

#[test]
fn exec_backend_is_refused() {
    let s = script("quiet");
    let mut opts = ScenarioOptions::for_script(&s, Default::default());
    opts.config =
        EngineConfig::from_toml("[backend]\nkind = \"exec\"\nruntime = \"docker\"\nnetwork = \"honeynet\"\n").unwrap();
    assert!(matches!(run_scenario(&s, &opts), Err(ScenarioError::Config(_))));
}

#[test]
fn report_rebuilds_from_written_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let r = run(&script("ctf_small"));
    r.write_to(dir.path()).unwrap();
    let art = soar_core::scenario::RunArtifacts::read(dir.path()).unwrap();
    assert_eq!(art.meta, r.meta);
    assert_eq!(art.events, r.events);
    assert_eq!(art.report(&EngineConfig::default()).unwrap().to_csv(), r.report.to_csv());
}
