//! Declarative scenario scripts.
//!
//! One directive or action per line; `#` starts a comment.
//!
//! ```text
//! name = ctf_small
//! seed = 7
//! duration = 7200
//! deploy_ahead = on
//! latency = 6
//! linger min=600 max=2400 decay=1800 gap=30..90
//! actor A ip=10.66.0.5
//! t=12.0 actor=A SCAN 172.26.233.0/24 ports=22,80 rate=1.5
//! actor=A IDLE 300
//! actor=A HTTP_ATTACK 172.26.233.4 class=sqli count=3 interval=2
//! ```
//!
//! An action without `t=` starts when the actor's previous action ends.

use std::collections::BTreeMap;
use std::net::Ipv4Addr;
use std::str::FromStr;

use super::payloads::PayloadClass;
use super::ScenarioError;
use crate::orchestrator::Ipv4Net;

/// Default seconds per scanned host.
pub const DEFAULT_SCAN_RATE: f64 = 1.5;

#[derive(Debug, Clone, PartialEq)]
pub struct LingerModel {
    pub min: f64,
    pub max: f64,
    /// Linger shrinks by `exp(-age / decay)` with decoy age.
    pub decay: f64,
    pub gap_min: f64,
    pub gap_max: f64,
}

impl Default for LingerModel {
    fn default() -> Self {
        LingerModel { min: 600.0, max: 2400.0, decay: 1800.0, gap_min: 30.0, gap_max: 90.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Actor {
    pub name: String,
    pub ip: Ipv4Addr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeKind {
    Ssh,
    Smtp,
    Modbus,
}

impl ProbeKind {
    pub fn port(self) -> u16 {
        match self {
            ProbeKind::Ssh => 22,
            ProbeKind::Smtp => 25,
            ProbeKind::Modbus => 502,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    /// Sweep `hosts` in ascending order, probing every port at each.
    Scan {
        first: Ipv4Addr,
        last: Ipv4Addr,
        ports: Vec<u16>,
        rate: f64,
    },
    HttpAttack {
        target: Ipv4Addr,
        port: u16,
        class: PayloadClass,
        count: u32,
        interval: f64,
    },
    Probe {
        kind: ProbeKind,
        target: Ipv4Addr,
    },
    DropFile {
        target: Ipv4Addr,
        port: u16,
        size: usize,
        path: String,
    },
    Flood {
        target: Ipv4Addr,
        port: u16,
        pps: f64,
        duration: f64,
    },
    Beacon {
        target: Ipv4Addr,
        port: u16,
        period: f64,
        size: usize,
        count: u32,
    },
    Idle {
        secs: f64,
    },
}

impl Action {
    pub fn scanned_hosts(first: Ipv4Addr, last: Ipv4Addr) -> u64 {
        u64::from(u32::from(last)) - u64::from(u32::from(first)) + 1
    }

    /// Nominal length of the action in seconds.
    pub fn span(&self) -> f64 {
        match self {
            Action::Scan { first, last, rate, .. } => Self::scanned_hosts(*first, *last) as f64 * rate,
            Action::HttpAttack { count, interval, .. } => f64::from(*count) * interval,
            Action::Probe { .. } | Action::DropFile { .. } => 1.0,
            Action::Flood { duration, .. } => *duration,
            Action::Beacon { period, count, .. } => f64::from(*count) * period,
            Action::Idle { secs } => *secs,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduledAction {
    pub line: usize,
    pub actor: usize,
    pub start: f64,
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioScript {
    pub name: String,
    pub seed: u64,
    pub duration: f64,
    pub deploy_ahead: Option<bool>,
    pub latency: Option<f64>,
    pub linger: LingerModel,
    pub actors: Vec<Actor>,
    pub actions: Vec<ScheduledAction>,
}

fn err(line: usize, msg: impl Into<String>) -> ScenarioError {
    ScenarioError::ScriptValidation { line, reason: msg.into() }
}

fn num<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T, ScenarioError> {
    v.parse().map_err(|_| err(line, format!("invalid {key} `{v}`")))
}

fn positive(line: usize, key: &str, v: &str) -> Result<f64, ScenarioError> {
    let x: f64 = num(line, key, v)?;
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(err(line, format!("{key} must be positive, got `{v}`")))
    }
}

fn flag(line: usize, key: &str, v: &str) -> Result<bool, ScenarioError> {
    match v {
        "1" | "on" | "true" => Ok(true),
        "0" | "off" | "false" => Ok(false),
        _ => Err(err(line, format!("{key} must be on/off, got `{v}`"))),
    }
}

/// `key=value` options after the positional arguments.
struct Opts<'a> {
    line: usize,
    map: BTreeMap<&'a str, &'a str>,
}

impl<'a> Opts<'a> {
    fn parse(line: usize, words: &[&'a str]) -> Result<Self, ScenarioError> {
        let mut map = BTreeMap::new();
        for w in words {
            let (k, v) = w.split_once('=').ok_or_else(|| err(line, format!("expected key=value, got `{w}`")))?;
            if map.insert(k, v).is_some() {
                return Err(err(line, format!("option `{k}` given twice")));
            }
        }
        Ok(Opts { line, map })
    }

    fn take(&mut self, key: &str) -> Option<&'a str> {
        self.map.remove(key)
    }

    fn require(&mut self, key: &str) -> Result<&'a str, ScenarioError> {
        self.take(key).ok_or_else(|| err(self.line, format!("missing option `{key}`")))
    }

    fn finish(self) -> Result<(), ScenarioError> {
        match self.map.keys().next() {
            Some(k) => Err(err(self.line, format!("unknown option `{k}`"))),
            None => Ok(()),
        }
    }
}

fn parse_target(line: usize, s: &str) -> Result<Ipv4Addr, ScenarioError> {
    s.parse().map_err(|_| err(line, format!("invalid address `{s}`")))
}

fn parse_endpoint(line: usize, s: &str) -> Result<(Ipv4Addr, u16), ScenarioError> {
    let (ip, port) = s.split_once(':').ok_or_else(|| err(line, format!("expected ip:port, got `{s}`")))?;
    Ok((parse_target(line, ip)?, num(line, "port", port)?))
}

/// `a.b.c.d/n` (host addresses only) or `first-last`.
fn parse_range(line: usize, s: &str) -> Result<(Ipv4Addr, Ipv4Addr), ScenarioError> {
    if let Some((a, b)) = s.split_once('-') {
        let (a, b) = (parse_target(line, a)?, parse_target(line, b)?);
        if b < a {
            return Err(err(line, format!("empty range `{s}`")));
        }
        return Ok((a, b));
    }
    let net: Ipv4Net = s.parse().map_err(|_| err(line, format!("invalid subnet `{s}`")))?;
    let mut hosts = net.hosts();
    let first = hosts.next().ok_or_else(|| err(line, format!("subnet `{s}` has no hosts")))?;
    let last = hosts.last().unwrap_or(first);
    Ok((first, last))
}

fn parse_ports(line: usize, s: &str) -> Result<Vec<u16>, ScenarioError> {
    let ports: Vec<u16> = s.split(',').map(|p| num(line, "port", p)).collect::<Result<_, _>>()?;
    if ports.contains(&0) {
        return Err(err(line, "port 0 is not scannable"));
    }
    Ok(ports)
}

fn parse_action(line: usize, verb: &str, args: &[&str]) -> Result<Action, ScenarioError> {
    let positional: Vec<&str> = args.iter().copied().take_while(|a| !a.contains('=')).collect();
    let mut o = Opts::parse(line, &args[positional.len()..])?;
    let target = |i: usize| -> Result<&str, ScenarioError> {
        positional.get(i).copied().ok_or_else(|| err(line, format!("{verb} needs a target")))
    };
    if positional.len() > 1 {
        return Err(err(line, format!("unexpected argument `{}`", positional[1])));
    }
    let action = match verb {
        "SCAN" => {
            let (first, last) = parse_range(line, target(0)?)?;
            let ports = parse_ports(line, o.require("ports")?)?;
            let rate = o.take("rate").map_or(Ok(DEFAULT_SCAN_RATE), |v| positive(line, "rate", v))?;
            Action::Scan { first, last, ports, rate }
        }
        "HTTP_ATTACK" => Action::HttpAttack {
            target: parse_target(line, target(0)?)?,
            port: o.take("port").map_or(Ok(80), |v| num(line, "port", v))?,
            class: o.require("class")?.parse().map_err(|e: String| err(line, e))?,
            count: o.take("count").map_or(Ok(1), |v| num(line, "count", v))?,
            interval: o.take("interval").map_or(Ok(2.0), |v| positive(line, "interval", v))?,
        },
        "SSH_PROBE" | "SMTP_PROBE" | "MODBUS_PROBE" => {
            let kind = match verb {
                "SSH_PROBE" => ProbeKind::Ssh,
                "SMTP_PROBE" => ProbeKind::Smtp,
                _ => ProbeKind::Modbus,
            };
            Action::Probe { kind, target: parse_target(line, target(0)?)? }
        }
        "DROP_FILE" => Action::DropFile {
            target: parse_target(line, target(0)?)?,
            port: o.take("port").map_or(Ok(22), |v| num(line, "port", v))?,
            size: o.take("size").map_or(Ok(1024), |v| num(line, "size", v))?,
            path: o.take("path").unwrap_or("/tmp/payload").to_string(),
        },
        "FLOOD" => Action::Flood {
            target: parse_target(line, target(0)?)?,
            port: o.take("port").map_or(Ok(80), |v| num(line, "port", v))?,
            pps: positive(line, "pps", o.require("pps")?)?,
            duration: positive(line, "duration", o.require("duration")?)?,
        },
        "BEACON" => {
            let (target, port) = parse_endpoint(line, target(0)?)?;
            Action::Beacon {
                target,
                port,
                period: positive(line, "period", o.require("period")?)?,
                size: o.take("size").map_or(Ok(100), |v| num(line, "size", v))?,
                count: num(line, "count", o.require("count")?)?,
            }
        }
        "IDLE" => {
            let secs = positive(line, "idle time", target(0)?)?;
            Action::Idle { secs }
        }
        other => return Err(err(line, format!("unknown action `{other}`"))),
    };
    o.finish()?;
    if let Action::DropFile { size: 0, .. } = action {
        return Err(err(line, "DROP_FILE size must be positive"));
    }
    Ok(action)
}

impl FromStr for ScenarioScript {
    type Err = ScenarioError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut script = ScenarioScript {
            name: "scenario".into(),
            seed: 0,
            duration: 0.0,
            deploy_ahead: None,
            latency: None,
            linger: LingerModel::default(),
            actors: Vec::new(),
            actions: Vec::new(),
        };
        let mut cursors: Vec<f64> = Vec::new();
        let mut have_duration = false;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some((key, value)) = content
                .split_once(" = ")
                .or_else(|| content.split_once('=').filter(|(k, _)| !k.contains(' ') && !matches!(*k, "t" | "actor")))
            {
                let (key, value) = (key.trim(), value.trim());
                match key {
                    "name" => script.name = value.to_string(),
                    "seed" => script.seed = num(line, "seed", value)?,
                    "duration" => {
                        script.duration = positive(line, "duration", value)?;
                        have_duration = true;
                    }
                    "deploy_ahead" => script.deploy_ahead = Some(flag(line, key, value)?),
                    "latency" => {
                        let l: f64 = num(line, "latency", value)?;
                        if !(l.is_finite() && l >= 0.0) {
                            return Err(err(line, "latency must be non-negative"));
                        }
                        script.latency = Some(l);
                    }
                    _ => return Err(err(line, format!("unknown directive `{key}`"))),
                }
                continue;
            }
            let words: Vec<&str> = content.split_whitespace().collect();
            match words[0] {
                "linger" => {
                    let mut o = Opts::parse(line, &words[1..])?;
                    let m = &mut script.linger;
                    if let Some(v) = o.take("min") {
                        m.min = num(line, "min", v)?;
                    }
                    if let Some(v) = o.take("max") {
                        m.max = num(line, "max", v)?;
                    }
                    if let Some(v) = o.take("decay") {
                        m.decay = positive(line, "decay", v)?;
                    }
                    if let Some(v) = o.take("gap") {
                        let (a, b) = v.split_once("..").ok_or_else(|| err(line, "gap must be lo..hi"))?;
                        m.gap_min = positive(line, "gap", a)?;
                        m.gap_max = positive(line, "gap", b)?;
                    }
                    o.finish()?;
                    if !(0.0 <= m.min && m.min <= m.max && m.gap_min <= m.gap_max) {
                        return Err(err(line, "linger needs 0 <= min <= max and gap lo <= hi"));
                    }
                }
                "actor" => {
                    let name = words.get(1).ok_or_else(|| err(line, "actor needs a name"))?;
                    let mut o = Opts::parse(line, &words[2..])?;
                    let ip = parse_target(line, o.require("ip")?)?;
                    o.finish()?;
                    if script.actors.iter().any(|a| a.name == *name) {
                        return Err(err(line, format!("actor `{name}` declared twice")));
                    }
                    script.actors.push(Actor { name: name.to_string(), ip });
                    cursors.push(0.0);
                }
                _ => {
                    let mut rest = &words[..];
                    let mut start = None;
                    if let Some(t) = rest.first().and_then(|w| w.strip_prefix("t=")) {
                        let t: f64 = num(line, "time", t)?;
                        if !(t.is_finite() && t >= 0.0) {
                            return Err(err(line, "time must be non-negative"));
                        }
                        start = Some(t);
                        rest = &rest[1..];
                    }
                    let name = rest
                        .first()
                        .and_then(|w| w.strip_prefix("actor="))
                        .ok_or_else(|| err(line, "expected `actor=NAME` before the action"))?;
                    let actor = script
                        .actors
                        .iter()
                        .position(|a| a.name == name)
                        .ok_or_else(|| err(line, format!("undeclared actor `{name}`")))?;
                    let verb = rest.get(1).ok_or_else(|| err(line, "missing action"))?;
                    let action = parse_action(line, verb, &rest[2..])?;
                    let start = start.unwrap_or(cursors[actor]);
                    cursors[actor] = start + action.span();
                    script.actions.push(ScheduledAction { line, actor, start, action });
                }
            }
        }
        if !have_duration {
            return Err(err(0, "missing `duration`"));
        }
        for a in &script.actions {
            let end = a.start + a.action.span();
            if end > script.duration {
                return Err(err(
                    a.line,
                    format!("action ends at {end} s, after the scenario duration {}", script.duration),
                ));
            }
        }
        Ok(script)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::http_ids::AttackLabel;

    const SAMPLE: &str = "
        name = demo
        seed = 7
        duration = 1000   # seconds
        linger min=10 max=20 decay=100 gap=5..6
        actor A ip=10.66.0.5
        t=12.0 actor=A SCAN 172.26.233.0/24 ports=22,80 rate=1.5
        actor=A IDLE 10
        actor=A HTTP_ATTACK 172.26.233.4 class=sqli count=3
        t=900 actor=A BEACON 198.51.100.7:6667 period=10 count=5
    ";

    #[test]
    fn parses_sample() {
        let s: ScenarioScript = SAMPLE.parse().unwrap();
        assert_eq!(s.name, "demo");
        assert_eq!(s.seed, 7);
        assert_eq!(s.linger.gap_max, 6.0);
        assert_eq!(s.actions.len(), 4);
        let scan = &s.actions[0];
        assert_eq!(
            scan.action,
            Action::Scan {
                first: Ipv4Addr::new(172, 26, 233, 1),
                last: Ipv4Addr::new(172, 26, 233, 254),
                ports: vec![22, 80],
                rate: 1.5
            }
        );
        // Sequential start: 12 + 254 * 1.5 + 10.
        assert_eq!(s.actions[2].start, 12.0 + 381.0 + 10.0);
        assert!(matches!(
            s.actions[2].action,
            Action::HttpAttack { class: PayloadClass::Attack(AttackLabel::Sqli), count: 3, .. }
        ));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let cases = [
            ("duration = 10\nt=1 actor=A IDLE 1", 2, "undeclared actor"),
            ("duration = 10\nactor A ip=1.2.3.4\nt=1 actor=A JUMP", 3, "unknown action"),
            ("duration = 10\nactor A ip=1.2.3.4\nt=5 actor=A IDLE 6", 3, "after the scenario duration"),
            (
                "duration = 10\nactor A ip=1.2.3.4\nt=1 actor=A SCAN 10.0.0.0/30 ports=22 speed=2",
                3,
                "unknown option `speed`",
            ),
            ("duration = 10\nfoo = 1", 2, "unknown directive"),
        ];
        for (text, line, needle) in cases {
            match text.parse::<ScenarioScript>() {
                Err(ScenarioError::ScriptValidation { line: l, reason }) => {
                    assert_eq!(l, line, "{text}");
                    assert!(reason.contains(needle), "{reason}");
                }
                other => panic!("{text}: {other:?}"),
            }
        }
        assert!("seed = 1".parse::<ScenarioScript>().is_err());
    }

    #[test]
    fn ranges() {
        assert_eq!(
            parse_range(1, "10.0.0.5-10.0.0.9").unwrap(),
            (Ipv4Addr::new(10, 0, 0, 5), Ipv4Addr::new(10, 0, 0, 9))
        );
        assert!(parse_range(1, "10.0.0.9-10.0.0.5").is_err());
        assert_eq!(Action::scanned_hosts(Ipv4Addr::new(10, 0, 0, 5), Ipv4Addr::new(10, 0, 0, 9)), 5);
    }
}
