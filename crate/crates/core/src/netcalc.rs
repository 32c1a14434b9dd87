//! IPv4 address arithmetic: dotted-decimal and binary notation, network
//! (first) and broadcast (last) addresses, address counts and classful
//! default masks.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NetcalcError {
    #[error("invalid IPv4 address {0:?}")]
    Address(String),
    #[error("invalid network mask {0:?}")]
    Mask(String),
    #[error("mask {0} is not a run of ones followed by zeros")]
    NonContiguous(Ipv4Address),
    #[error("{0} is a class D/E address and has no classful mask")]
    NoClassfulMask(Ipv4Address),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Ipv4Address(u32);

impl Ipv4Address {
    pub const fn from_bits(bits: u32) -> Self {
        Ipv4Address(bits)
    }

    pub const fn from_octets(octets: [u8; 4]) -> Self {
        Ipv4Address(u32::from_be_bytes(octets))
    }

    pub const fn bits(self) -> u32 {
        self.0
    }

    pub const fn octets(self) -> [u8; 4] {
        self.0.to_be_bytes()
    }

    /// Dot-separated 8-bit groups, e.g. `00001010.00111101.00101110.10001110`.
    pub fn binary(self) -> String {
        let [a, b, c, d] = self.octets();
        format!("{a:08b}.{b:08b}.{c:08b}.{d:08b}")
    }
}

impl FromStr for Ipv4Address {
    type Err = NetcalcError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || NetcalcError::Address(s.to_string());
        let mut octets = [0u8; 4];
        let mut parts = s.split('.');
        for slot in &mut octets {
            let part = parts.next().ok_or_else(bad)?;
            // Leading zeros are refused: "010" reads as octal in some tools.
            if part.is_empty()
                || part.len() > 3
                || (part.len() > 1 && part.starts_with('0'))
                || !part.bytes().all(|b| b.is_ascii_digit())
            {
                return Err(bad());
            }
            *slot = part.parse::<u8>().map_err(|_| bad())?;
        }
        if parts.next().is_some() {
            return Err(bad());
        }
        Ok(Ipv4Address::from_octets(octets))
    }
}

impl fmt::Display for Ipv4Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c, d] = self.octets();
        write!(f, "{a}.{b}.{c}.{d}")
    }
}

/// How a mask was written, so output can echo the caller's notation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskNotation {
    Dotted,
    Prefix,
}

/// A contiguous network mask: ones followed by zeros.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetworkMask {
    bits: u32,
    notation: MaskNotation,
}

impl NetworkMask {
    pub fn from_bits(bits: u32) -> Result<Self, NetcalcError> {
        // Contiguous iff the complement is of the form 0..01..1.
        let host = !bits;
        if host & host.wrapping_add(1) != 0 {
            return Err(NetcalcError::NonContiguous(Ipv4Address(bits)));
        }
        Ok(NetworkMask {
            bits,
            notation: MaskNotation::Dotted,
        })
    }

    pub fn from_prefix(prefix: u8) -> Result<Self, NetcalcError> {
        if prefix > 32 {
            return Err(NetcalcError::Mask(format!("/{prefix}")));
        }
        let bits = if prefix == 0 { 0 } else { u32::MAX << (32 - prefix) };
        Ok(NetworkMask {
            bits,
            notation: MaskNotation::Prefix,
        })
    }

    pub const fn bits(self) -> u32 {
        self.bits
    }

    pub fn prefix_len(self) -> u8 {
        self.bits.count_ones() as u8
    }

    pub fn notation(self) -> MaskNotation {
        self.notation
    }

    pub fn as_address(self) -> Ipv4Address {
        Ipv4Address(self.bits)
    }

    /// Bitwise complement: every 1 becomes 0 and every 0 becomes 1.
    pub fn complement(self) -> u32 {
        !self.bits
    }
}

impl FromStr for NetworkMask {
    type Err = NetcalcError;

    /// Accepts dotted form (`255.0.0.0`) or prefix form (`/8` or `8`).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Some(prefix) = s.strip_prefix('/').or_else(|| (!s.contains('.')).then_some(s)) {
            let n: u8 = prefix.parse().map_err(|_| NetcalcError::Mask(s.to_string()))?;
            return NetworkMask::from_prefix(n);
        }
        let addr: Ipv4Address = s.parse().map_err(|_| NetcalcError::Mask(s.to_string()))?;
        NetworkMask::from_bits(addr.bits())
    }
}

impl fmt::Display for NetworkMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.notation {
            MaskNotation::Dotted => write!(f, "{}", self.as_address()),
            MaskNotation::Prefix => write!(f, "/{}", self.prefix_len()),
        }
    }
}

/// Network address: `addr AND mask`.
pub fn first_address(addr: Ipv4Address, mask: NetworkMask) -> Ipv4Address {
    Ipv4Address(addr.bits() & mask.bits())
}

/// Broadcast address: `addr OR NOT mask`.
pub fn last_address(addr: Ipv4Address, mask: NetworkMask) -> Ipv4Address {
    Ipv4Address(addr.bits() | mask.complement())
}

/// 2 raised to the number of host (zero) bits in the mask.
pub fn address_count(mask: NetworkMask) -> u64 {
    1u64 << mask.complement().count_ones()
}

/// Size of the whole IPv4 space.
pub const IPV4_ADDRESS_SPACE: u64 = 1 << 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AddressClass {
    A,
    B,
    C,
    D,
    E,
}

pub fn address_class(addr: Ipv4Address) -> AddressClass {
    match addr.octets()[0] {
        0..=127 => AddressClass::A,
        128..=191 => AddressClass::B,
        192..=223 => AddressClass::C,
        224..=239 => AddressClass::D,
        _ => AddressClass::E,
    }
}

/// Default mask of the address's class; classes D and E have none.
pub fn classful_mask(addr: Ipv4Address) -> Result<NetworkMask, NetcalcError> {
    let prefix = match address_class(addr) {
        AddressClass::A => 8,
        AddressClass::B => 16,
        AddressClass::C => 24,
        AddressClass::D | AddressClass::E => return Err(NetcalcError::NoClassfulMask(addr)),
    };
    let mut mask = NetworkMask::from_prefix(prefix)?;
    mask.notation = MaskNotation::Dotted;
    Ok(mask)
}

/// Everything the `netcalc` command prints for one address/mask pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSummary {
    pub address: Ipv4Address,
    pub mask: NetworkMask,
    pub first: Ipv4Address,
    pub last: Ipv4Address,
    pub count: u64,
}

impl NetworkSummary {
    pub fn new(address: Ipv4Address, mask: NetworkMask) -> Self {
        NetworkSummary {
            address,
            mask,
            first: first_address(address, mask),
            last: last_address(address, mask),
            count: address_count(mask),
        }
    }
}

impl fmt::Display for NetworkSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "address: {}", self.address)?;
        writeln!(f, "binary:  {}", self.address.binary())?;
        writeln!(f, "mask:    {}", self.mask)?;
        writeln!(f, "first:   {}", self.first)?;
        writeln!(f, "last:    {}", self.last)?;
        write!(f, "count:   {}", self.count)
    }
}
