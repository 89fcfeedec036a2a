//! Direction-aware choice of free reserved addresses.
//!
//! A scan that first touches the lowest reserved address is assumed to be
//! sweeping upward, so decoys go to the earliest free addresses ahead of it.
//! A scan entering anywhere else gets decoys at the far end of the ladder.

use std::collections::BTreeSet;
use std::net::Ipv4Addr;

use thiserror::Error;

use super::ReservedIpPool;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("{0} is not a reserved address")]
pub struct DstNotInPool(pub Ipv4Addr);

/// Select up to `n` free reserved addresses for new decoys.
///
/// Candidates are the pool, in order, minus `ip_dst` and minus `occupied`.
/// When `ip_dst` is the first pool address the first `n` candidates are
/// returned, otherwise the last `n`. Fewer than `n` free candidates returns
/// all of them.
pub fn select_ips(
    ip_dst: Ipv4Addr,
    n: usize,
    pool: &ReservedIpPool,
    occupied: &BTreeSet<Ipv4Addr>,
) -> Result<Vec<Ipv4Addr>, DstNotInPool> {
    select_from(ip_dst, n, pool.ips(), occupied)
}

/// [`select_ips`] over a bare address list.
pub fn select_from(
    ip_dst: Ipv4Addr,
    n: usize,
    ips: &[Ipv4Addr],
    occupied: &BTreeSet<Ipv4Addr>,
) -> Result<Vec<Ipv4Addr>, DstNotInPool> {
    if !ips.contains(&ip_dst) {
        return Err(DstNotInPool(ip_dst));
    }
    let candidates: Vec<Ipv4Addr> = ips.iter().copied().filter(|ip| *ip != ip_dst && !occupied.contains(ip)).collect();
    let take = n.min(candidates.len());
    if ips[0] == ip_dst {
        Ok(candidates[..take].to_vec())
    } else {
        Ok(candidates[candidates.len() - take..].to_vec())
    }
}
