use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::http_ids::AttackLabel;

/// Honeypot service families known to the engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ServiceKind {
    HttpWeb,
    HttpApp,
    Db,
    Ssh,
    Smtp,
    Modbus,
    HttpSqli,
    HttpXss,
    HttpOsc,
}

impl ServiceKind {
    pub const ALL: [ServiceKind; 9] = [
        ServiceKind::HttpWeb,
        ServiceKind::HttpApp,
        ServiceKind::Db,
        ServiceKind::Ssh,
        ServiceKind::Smtp,
        ServiceKind::Modbus,
        ServiceKind::HttpSqli,
        ServiceKind::HttpXss,
        ServiceKind::HttpOsc,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ServiceKind::HttpWeb => "HTTP_WEB",
            ServiceKind::HttpApp => "HTTP_APP",
            ServiceKind::Db => "DB",
            ServiceKind::Ssh => "SSH",
            ServiceKind::Smtp => "SMTP",
            ServiceKind::Modbus => "MODBUS",
            ServiceKind::HttpSqli => "HTTP_SQLI",
            ServiceKind::HttpXss => "HTTP_XSS",
            ServiceKind::HttpOsc => "HTTP_OSC",
        }
    }

    /// Services whose logs are fed to the HTTP IDS.
    pub fn is_http(self) -> bool {
        matches!(
            self,
            ServiceKind::HttpWeb
                | ServiceKind::HttpApp
                | ServiceKind::HttpSqli
                | ServiceKind::HttpXss
                | ServiceKind::HttpOsc
        )
    }
}

impl fmt::Display for ServiceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ServiceKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ServiceKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown service `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Interaction {
    Medium,
    High,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HoneypotTemplate {
    pub service: ServiceKind,
    pub port: u16,
    pub image_id: String,
    pub interaction: Interaction,
    /// Set for vulnerable follow-up images deployed on IDS alerts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub follow_up_of: Option<AttackLabel>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CatalogError {
    #[error("template {0} has port 0")]
    ZeroPort(ServiceKind),
    #[error("service {0} listed twice")]
    DuplicateService(ServiceKind),
    #[error("follow-up label {0} mapped to more than one template")]
    DuplicateFollowUp(AttackLabel),
    #[error("{0} is not an HTTP service and cannot be a follow-up template")]
    FollowUpNotHttp(ServiceKind),
}

/// The set of deployable honeypot images, in priority order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Catalog {
    templates: Vec<HoneypotTemplate>,
}

impl Catalog {
    pub fn new(templates: Vec<HoneypotTemplate>) -> Result<Self, CatalogError> {
        let mut services = BTreeSet::new();
        let mut labels = BTreeSet::new();
        for t in &templates {
            if t.port == 0 {
                return Err(CatalogError::ZeroPort(t.service));
            }
            if !services.insert(t.service) {
                return Err(CatalogError::DuplicateService(t.service));
            }
            if let Some(label) = t.follow_up_of {
                if !t.service.is_http() {
                    return Err(CatalogError::FollowUpNotHttp(t.service));
                }
                if !labels.insert(label) {
                    return Err(CatalogError::DuplicateFollowUp(label));
                }
            }
        }
        Ok(Catalog { templates })
    }

    pub fn templates(&self) -> &[HoneypotTemplate] {
        &self.templates
    }

    pub fn get(&self, service: ServiceKind) -> Option<&HoneypotTemplate> {
        self.templates.iter().find(|t| t.service == service)
    }

    /// First probe-triggered template exposed on `port`. Follow-up templates
    /// are only ever deployed by IDS alerts, never by a port match.
    pub fn match_port(&self, port: u16) -> Option<&HoneypotTemplate> {
        self.base_templates().find(|t| t.port == port)
    }

    pub fn follow_up_for(&self, label: AttackLabel) -> Option<&HoneypotTemplate> {
        self.templates.iter().find(|t| t.follow_up_of == Some(label))
    }

    pub fn base_templates(&self) -> impl Iterator<Item = &HoneypotTemplate> {
        self.templates.iter().filter(|t| t.follow_up_of.is_none())
    }
}

impl Default for Catalog {
    /// Web, application, database, SSH, SMTP and Modbus images, plus the three
    /// vulnerable HTTP images used as IDS follow-ups.
    fn default() -> Self {
        use Interaction::*;
        use ServiceKind::*;
        let t = |service, port, image: &str, interaction, follow_up_of| HoneypotTemplate {
            service,
            port,
            image_id: image.to_string(),
            interaction,
            follow_up_of,
        };
        Catalog::new(vec![
            t(HttpWeb, 80, "apache/httpd", High, None),
            t(HttpApp, 8080, "tomcat", High, None),
            t(Db, 3306, "mysql:5.7", High, None),
            t(Ssh, 22, "cowrie/cowrie", Medium, None),
            t(Smtp, 25, "mailoney", Medium, None),
            t(Modbus, 502, "modbus-server", High, None),
            t(HttpSqli, 80, "http-sqli", High, Some(AttackLabel::Sqli)),
            t(HttpXss, 80, "http-xss", High, Some(AttackLabel::Xss)),
            t(HttpOsc, 80, "http-osc", High, Some(AttackLabel::Osc)),
        ])
        .expect("default catalog is valid")
    }
}
