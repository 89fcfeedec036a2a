//! Acceptance criteria, one PASS/FAIL line each. Exits non-zero on any FAIL.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;
use std::time::Instant;

use common::{ddos_oracle, identity_model, metrics_oracle, random_packets, select_oracle, window_totals};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use soar_core::botnet::aggregate_flows;
use soar_core::ddos::LookbackState;
use soar_core::learners::{
    class_weights, evaluate, train_logistic, train_tree, Dataset, LogisticParams, Schema, TreeParams,
};
use soar_core::orchestrator::{select_ips, Catalog, EventKind, Ipv4Net, ReservedIpPool, ServiceKind};
use soar_core::scenario::{
    bundled, compare_modes, gen_corpus, race_check, reference_detectors, run_scenario, ClassSizes, CorpusTask,
    DetectionTask, RaceOutcome, ScenarioOptions, ScenarioRun, ScenarioScript, BUNDLED,
};
use soar_core::storage::{read_jsonl, replay};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, what: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what.into())
    }
}

fn host(h: u8) -> Ipv4Addr {
    Ipv4Addr::new(172, 26, 233, h)
}

fn script(name: &str) -> ScenarioScript {
    bundled(name).expect("bundled").expect("valid")
}

fn run(s: &ScenarioScript) -> Result<ScenarioRun, String> {
    run_scenario(s, &ScenarioOptions::for_script(s, reference_detectors().clone())).map_err(|e| e.to_string())
}

fn c1_selection() -> Outcome {
    let start = Instant::now();
    let subnet = Ipv4Net::new(host(0), 24).unwrap();
    let irregular = [4u8, 40, 85, 125, 185, 220, 250];
    let mut cases = 0u64;
    for size in 2..=7usize {
        let ladders = [
            ReservedIpPool::evenly_spaced(subnet, host(4), 20, size).unwrap(),
            ReservedIpPool::from_list(irregular[..size].iter().map(|h| host(*h)).collect(), subnet).unwrap(),
        ];
        for pool in &ladders {
            let ips = pool.ips();
            for mask in 0u32..1 << size {
                let occupied: BTreeSet<_> = (0..size).filter(|i| mask >> i & 1 == 1).map(|i| ips[i]).collect();
                for &dst in ips {
                    for n in 0..=7 {
                        let got: BTreeSet<_> = select_ips(dst, n, pool, &occupied).unwrap().into_iter().collect();
                        let want = select_oracle(dst, n, ips, &occupied);
                        check(got == want, format!("pool {ips:?} occ {occupied:?} dst {dst} n {n}"))?;
                        cases += 1;
                    }
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(secs < 5.0, format!("took {secs:.2}s"))?;
    Ok(format!("{cases} cases, 0 mismatches, {secs:.2}s"))
}

fn c2_modbus() -> Outcome {
    let r = run(&script("modbus_only"))?;
    let deploys: Vec<_> = r.events.iter().filter(|e| e.kind == EventKind::Deploy).collect();
    let reaps: Vec<_> = r.events.iter().filter(|e| e.kind == EventKind::Reap).collect();
    check(deploys.len() == 1 && reaps.len() == 1, format!("{} deploys, {} reaps", deploys.len(), reaps.len()))?;
    check(deploys[0].service == Some(ServiceKind::Modbus), "deployed service is not Modbus")?;
    let inst = &r.instances[&deploys[0].instance.unwrap()];
    let idle = inst.reaped_at.map(|t| t - inst.last_activity);
    check(idle == Some(900.0), format!("reaped after {idle:?} idle seconds"))?;
    Ok("1 deploy, 1 reap after 900 s idle".into())
}

fn c3_follow_up() -> Outcome {
    let s: ScenarioScript = "
        name = follow_up
        duration = 300
        deploy_ahead = off
        actor a ip=10.9.9.9
        t=10 actor=a HTTP_ATTACK 172.26.233.4 class=benign count=1
        t=30 actor=a HTTP_ATTACK 172.26.233.4 class=sqli count=1
    "
    .parse()
    .map_err(|e: soar_core::scenario::ScenarioError| e.to_string())?;
    let mut placed = Vec::new();
    for (label, ladder) in [("even", None), ("irregular", Some([4u8, 40, 85, 125, 185, 220, 250]))] {
        let mut opts = ScenarioOptions::for_script(&s, reference_detectors().clone());
        if let Some(l) = ladder {
            opts.config.pool.ips = Some(l.map(host).to_vec());
        }
        let r = run_scenario(&s, &opts).map_err(|e| e.to_string())?;
        let alert = r.events.iter().find(|e| e.kind == EventKind::AlertFollowup).ok_or("no follow-up alert")?;
        let deps: Vec<_> = r
            .events
            .iter()
            .filter(|e| e.kind == EventKind::Deploy && e.service == Some(ServiceKind::HttpSqli))
            .collect();
        check(deps.len() == 1, format!("{label}: {} SQLi deployments", deps.len()))?;
        let want = host(ladder.map_or(24, |l| l[1]));
        check(deps[0].ip == Some(want), format!("{label}: placed at {:?}, expected {want}", deps[0].ip))?;
        check(deps[0].ts.floor() == alert.ts.floor(), format!("{label}: alert {} deploy {}", alert.ts, deps[0].ts))?;
        placed.push(want.to_string());
    }
    Ok(format!("HTTP_SQLI at {} in the alert second", placed.join(" and ")))
}

fn c4_ddos_features() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let packets = random_packets(&mut rng, 5000, 8);
    let mut state = LookbackState::new();
    let mut mismatches = 0;
    for i in 0..packets.len() {
        let got = state.update_and_extract(&packets[i]).0;
        let want = ddos_oracle(&packets, i);
        mismatches += got.iter().zip(want).filter(|(g, w)| g.to_bits() != w.to_bits()).count();
    }
    let secs = start.elapsed().as_secs_f64();
    check(mismatches == 0, format!("{mismatches} mismatching features"))?;
    check(secs < 10.0, format!("took {secs:.2}s"))?;
    Ok(format!("5000 packets x 16 features exact, {secs:.2}s"))
}

fn c5_flows() -> Outcome {
    let mut windows = 0;
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(50 + seed);
        let mut packets = random_packets(&mut rng, 10_000, 12);
        // Stretch the stream so it spans from a few windows to a few hundred.
        let stretch = f64::from(rng.gen_range(1u32..40));
        for p in &mut packets {
            p.ts *= stretch;
        }
        let mut got: BTreeMap<u64, (u64, u64)> = BTreeMap::new();
        for f in aggregate_flows(&packets) {
            let e = got.entry(f.window_id).or_default();
            e.0 += f.total_packets;
            e.1 += f.total_bytes;
        }
        let want = window_totals(&packets);
        check(got == want, format!("seed {seed}: per-window totals differ"))?;
        windows += want.len();
    }
    Ok(format!("5 streams of 10000 packets, {windows} windows conserved"))
}

fn c6_classifiers() -> Outcome {
    let sizes = ClassSizes::balanced(2500);
    let mut lines = Vec::new();
    let mut failures = Vec::new();
    for task in [CorpusTask::Httpids, CorpusTask::Botnet, CorpusTask::Ddos] {
        let corpus = gen_corpus(task, 2026, sizes).map_err(|e| e.to_string())?;
        for part in &corpus.parts {
            let (train, test) = part.dataset.split(0.25, 7);
            let w = class_weights(train.labels()).map_err(|e| e.to_string())?;
            let dt = train_tree(&train, w, TreeParams::default()).map_err(|e| e.to_string())?;
            let dt_acc = evaluate(&dt, &test).map_err(|e| e.to_string())?.accuracy;
            let mut line = format!("{} DT {dt_acc:.2}", part.task);
            if dt_acc < 99.0 {
                failures.push(format!("{} DT {dt_acc:.2} < 99", part.task));
            }
            if part.task != DetectionTask::Botnet {
                let lr = train_logistic(&train, w, LogisticParams::default()).map_err(|e| e.to_string())?;
                let lr_acc = evaluate(&lr, &test).map_err(|e| e.to_string())?.accuracy;
                line += &format!(" LR {lr_acc:.2}");
                if lr_acc < 95.0 {
                    failures.push(format!("{} LR {lr_acc:.2} < 95", part.task));
                }
            }
            lines.push(line);
        }
    }
    check(failures.is_empty(), failures.join("; "))?;
    Ok(lines.join(", "))
}

fn c7_metrics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let model = identity_model();
    for k in 0..1000 {
        let n = rng.gen_range(1..200);
        let bias = rng.gen_range(0.0..1.0);
        let pred: Vec<u8> = (0..n).map(|_| u8::from(rng.gen_bool(bias))).collect();
        let actual: Vec<u8> = (0..n).map(|_| u8::from(rng.gen_bool(bias))).collect();
        let rows = pred.iter().map(|p| vec![f64::from(*p)]).collect();
        let ds = Dataset::new(Schema::numeric(&["prediction"]), rows, actual.clone()).map_err(|e| e.to_string())?;
        let m = evaluate(&model, &ds).map_err(|e| e.to_string())?;
        let (c, pct) = metrics_oracle(&pred, &actual);
        check(m.confusion == c, format!("vector {k}: confusion differs"))?;
        for (got, want) in [m.accuracy, m.precision, m.recall, m.f_score].into_iter().zip(pct) {
            check((got - want).abs() <= 1e-9, format!("vector {k}: {got} vs {want}"))?;
        }
    }
    Ok("1000 vectors agree to 1e-9".into())
}

fn c8_race() -> Outcome {
    let rc = race_check(1.5, 20.0, 6.0).map_err(|e| e.to_string())?;
    check(rc.outcome == RaceOutcome::Win, "race_check(1.5, 20, 6) lost")?;
    check((rc.margin - 24.0).abs() < 1e-9, format!("margin {}", rc.margin))?;
    let r = run(&script("ctf_small"))?;
    let races = &r.report.races;
    check(!races.is_empty(), "ctf_small produced no deploy-ahead races")?;
    for race in races {
        check(
            race.outcome == RaceOutcome::Win && race.active_at.is_some_and(|t| t < race.arrival),
            format!("{:?} at {} lost", race.instance, race.ip),
        )?;
    }
    Ok(format!("margin 24 s; ctf_small {}/{} races won", races.len(), races.len()))
}

fn c9_dynamic_vs_static() -> Outcome {
    let (dynamic, fixed) = compare_modes(&script("ctf_small"), reference_detectors()).map_err(|e| e.to_string())?;
    let (du, su) = (dynamic.report.uptime.dynamic_uptime, fixed.report.uptime.dynamic_uptime);
    let (de, se) = (dynamic.report.mean_engagement, fixed.report.mean_engagement);
    check(du <= 0.5 * su, format!("uptime {du:.0} s vs {su:.0} s"))?;
    check(de > se, format!("engagement {de:.1} s vs {se:.1} s"))?;
    Ok(format!("uptime {:.1}% of static; engagement {de:.1} s vs {se:.1} s", 100.0 * du / su))
}

fn c10_determinism() -> Outcome {
    for (name, _) in BUNDLED {
        let s = script(name);
        let (a, b) = (run(&s)?, run(&s)?);
        check(a.events_jsonl() == b.events_jsonl(), format!("{name}: event logs differ"))?;
        check(a.report.to_csv() == b.report.to_csv(), format!("{name}: reports differ"))?;
        check(a.capture_bytes() == b.capture_bytes(), format!("{name}: captures differ"))?;
    }
    Ok(format!("{} bundled scenarios byte-identical", BUNDLED.len()))
}

fn c11_replay() -> Outcome {
    let catalog = Catalog::default();
    let mut instances = 0;
    for (name, _) in BUNDLED {
        let r = run(&script(name))?;
        let events = read_jsonl(r.events_jsonl().as_slice()).map_err(|e| e.to_string())?;
        let rebuilt = replay(&events, &catalog).map_err(|e| e.to_string())?;
        check(rebuilt == r.instances, format!("{name}: replayed state differs"))?;
        instances += rebuilt.len();
    }
    Ok(format!("{instances} instances rebuilt from logs"))
}

fn main() {
    // The harness is a plain binary; ignore libtest flags such as --nocapture.
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let criteria: [Criterion; 11] = [
        ("1 selection oracle", c1_selection),
        ("2 deployment semantics", c2_modbus),
        ("3 follow-up deployment", c3_follow_up),
        ("4 ddos feature exactness", c4_ddos_features),
        ("5 flow conservation", c5_flows),
        ("6 classifier floors", c6_classifiers),
        ("7 metrics oracle", c7_metrics),
        ("8 race property", c8_race),
        ("9 dynamic vs static", c9_dynamic_vs_static),
        ("10 determinism", c10_determinism),
        ("11 replayability", c11_replay),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        if filter.as_ref().is_some_and(|p| !name.contains(p.as_str())) {
            continue;
        }
        match f() {
            Ok(detail) => println!("PASS  criterion {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  criterion {name}: {why}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
