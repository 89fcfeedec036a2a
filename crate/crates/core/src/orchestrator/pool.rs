use std::collections::BTreeSet;
use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_POOL_SIZE: usize = 7;
pub const DEFAULT_SPACING: u32 = 20;
pub const MIN_POOL_SIZE: usize = 2;
pub const MAX_POOL_SIZE: usize = 16;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PoolError {
    #[error("pool size {0} outside {MIN_POOL_SIZE}..={MAX_POOL_SIZE}")]
    SizeOutOfRange(usize),
    #[error("spacing must be positive")]
    ZeroSpacing,
    #[error("reserved addresses must be strictly increasing (at {0})")]
    NotIncreasing(Ipv4Addr),
    #[error("reserved address {0} is outside subnet {1}")]
    OutsideSubnet(Ipv4Addr, Ipv4Net),
    #[error("reserved address {0} overlaps the DHCP range")]
    OverlapsDhcp(Ipv4Addr),
    #[error("invalid subnet `{0}`")]
    BadSubnet(String),
}

/// IPv4 network in CIDR form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Ipv4Net {
    network: Ipv4Addr,
    prefix: u8,
}

impl Ipv4Net {
    pub fn new(addr: Ipv4Addr, prefix: u8) -> Result<Self, PoolError> {
        if prefix > 32 {
            return Err(PoolError::BadSubnet(format!("{addr}/{prefix}")));
        }
        let mask = Self::mask_for(prefix);
        Ok(Ipv4Net { network: Ipv4Addr::from(u32::from(addr) & mask), prefix })
    }

    fn mask_for(prefix: u8) -> u32 {
        if prefix == 0 {
            0
        } else {
            u32::MAX << (32 - prefix)
        }
    }

    pub fn network(&self) -> Ipv4Addr {
        self.network
    }

    pub fn prefix(&self) -> u8 {
        self.prefix
    }

    pub fn contains(&self, ip: Ipv4Addr) -> bool {
        u32::from(ip) & Self::mask_for(self.prefix) == u32::from(self.network)
    }

    /// Usable host addresses (network and broadcast excluded for prefixes < 31).
    pub fn hosts(&self) -> impl Iterator<Item = Ipv4Addr> {
        let base = u32::from(self.network);
        let size = 1u64 << (32 - u32::from(self.prefix));
        let (lo, hi) = if size <= 2 { (0, size) } else { (1, size - 1) };
        (lo..hi).map(move |off| Ipv4Addr::from(base + off as u32))
    }
}

impl fmt::Display for Ipv4Net {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.network, self.prefix)
    }
}

impl FromStr for Ipv4Net {
    type Err = PoolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || PoolError::BadSubnet(s.to_string());
        let (addr, prefix) = s.split_once('/').ok_or_else(bad)?;
        let addr: Ipv4Addr = addr.parse().map_err(|_| bad())?;
        let prefix: u8 = prefix.parse().map_err(|_| bad())?;
        Ipv4Net::new(addr, prefix)
    }
}

impl Serialize for Ipv4Net {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Ipv4Net {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// The ordered ladder of reserved decoy addresses.
///
/// Pools built with [`ReservedIpPool::evenly_spaced`] keep a fixed host gap
/// between neighbours. [`ReservedIpPool::from_list`] accepts any strictly
/// increasing list, which is how irregular hand-picked layouts are expressed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReservedIpPool {
    ips: Vec<Ipv4Addr>,
    spacing: Option<u32>,
    subnet: Ipv4Net,
}

impl ReservedIpPool {
    pub fn evenly_spaced(subnet: Ipv4Net, first: Ipv4Addr, spacing: u32, count: usize) -> Result<Self, PoolError> {
        if spacing == 0 {
            return Err(PoolError::ZeroSpacing);
        }
        if !(MIN_POOL_SIZE..=MAX_POOL_SIZE).contains(&count) {
            return Err(PoolError::SizeOutOfRange(count));
        }
        let start = u64::from(u32::from(first));
        let mut ips = Vec::with_capacity(count);
        for k in 0..count as u64 {
            let addr = start + k * u64::from(spacing);
            let ip = u32::try_from(addr)
                .map(Ipv4Addr::from)
                .map_err(|_| PoolError::OutsideSubnet(Ipv4Addr::BROADCAST, subnet))?;
            ips.push(ip);
        }
        let mut pool = Self::from_list(ips, subnet)?;
        pool.spacing = Some(spacing);
        Ok(pool)
    }

    pub fn from_list(ips: Vec<Ipv4Addr>, subnet: Ipv4Net) -> Result<Self, PoolError> {
        if !(MIN_POOL_SIZE..=MAX_POOL_SIZE).contains(&ips.len()) {
            return Err(PoolError::SizeOutOfRange(ips.len()));
        }
        for w in ips.windows(2) {
            if w[1] <= w[0] {
                return Err(PoolError::NotIncreasing(w[1]));
            }
        }
        if let Some(&ip) = ips.iter().find(|ip| !subnet.contains(**ip)) {
            return Err(PoolError::OutsideSubnet(ip, subnet));
        }
        Ok(ReservedIpPool { ips, spacing: None, subnet })
    }

    /// Reject the pool if any reserved address falls inside `[lo, hi]`.
    pub fn check_dhcp_range(&self, lo: Ipv4Addr, hi: Ipv4Addr) -> Result<(), PoolError> {
        match self.ips.iter().find(|ip| (lo..=hi).contains(*ip)) {
            Some(&ip) => Err(PoolError::OverlapsDhcp(ip)),
            None => Ok(()),
        }
    }

    pub fn ips(&self) -> &[Ipv4Addr] {
        &self.ips
    }

    pub fn len(&self) -> usize {
        self.ips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ips.is_empty()
    }

    pub fn spacing(&self) -> Option<u32> {
        self.spacing
    }

    pub fn subnet(&self) -> Ipv4Net {
        self.subnet
    }

    pub fn first(&self) -> Ipv4Addr {
        self.ips[0]
    }

    pub fn contains(&self, ip: Ipv4Addr) -> bool {
        self.ips.binary_search(&ip).is_ok()
    }

    pub fn position(&self, ip: Ipv4Addr) -> Option<usize> {
        self.ips.binary_search(&ip).ok()
    }

    pub fn as_set(&self) -> BTreeSet<Ipv4Addr> {
        self.ips.iter().copied().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net() -> Ipv4Net {
        "172.26.233.0/24".parse().unwrap()
    }

    #[test]
    fn default_ladder_has_fixed_gap() {
        let pool = ReservedIpPool::evenly_spaced(net(), Ipv4Addr::new(172, 26, 233, 4), 20, 7).unwrap();
        let hosts: Vec<u8> = pool.ips().iter().map(|ip| ip.octets()[3]).collect();
        assert_eq!(hosts, vec![4, 24, 44, 64, 84, 104, 124]);
        assert_eq!(pool.spacing(), Some(20));
    }

    #[test]
    fn ladder_must_fit_subnet() {
        let err = ReservedIpPool::evenly_spaced(net(), Ipv4Addr::new(172, 26, 233, 200), 20, 7);
        assert!(matches!(err, Err(PoolError::OutsideSubnet(..))));
        assert_eq!(
            ReservedIpPool::evenly_spaced(net(), Ipv4Addr::new(172, 26, 233, 4), 0, 7),
            Err(PoolError::ZeroSpacing)
        );
        assert_eq!(
            ReservedIpPool::evenly_spaced(net(), Ipv4Addr::new(172, 26, 233, 4), 1, 17),
            Err(PoolError::SizeOutOfRange(17))
        );
    }

    #[test]
    fn list_must_be_strictly_increasing() {
        let ips = vec![Ipv4Addr::new(172, 26, 233, 40), Ipv4Addr::new(172, 26, 233, 4)];
        assert!(matches!(ReservedIpPool::from_list(ips, net()), Err(PoolError::NotIncreasing(_))));
    }

    #[test]
    fn dhcp_overlap_detected() {
        let pool = ReservedIpPool::evenly_spaced(net(), Ipv4Addr::new(172, 26, 233, 4), 20, 7).unwrap();
        assert!(pool.check_dhcp_range(Ipv4Addr::new(172, 26, 233, 130), Ipv4Addr::new(172, 26, 233, 199)).is_ok());
        assert_eq!(
            pool.check_dhcp_range(Ipv4Addr::new(172, 26, 233, 100), Ipv4Addr::new(172, 26, 233, 110)),
            Err(PoolError::OverlapsDhcp(Ipv4Addr::new(172, 26, 233, 104)))
        );
    }

    #[test]
    fn subnet_hosts_skip_network_and_broadcast() {
        let hosts: Vec<_> = net().hosts().collect();
        assert_eq!(hosts.len(), 254);
        assert_eq!(hosts[0], Ipv4Addr::new(172, 26, 233, 1));
        assert_eq!(*hosts.last().unwrap(), Ipv4Addr::new(172, 26, 233, 254));
    }
}
