"""L2 frame representation, wire codecs, and flow-metadata extraction.

On-wire frame layout (no FCS, no padding):

    | Offset | Size | Field     |
    |--------|------|-----------|
    | 0      | 6    | dst MAC   |
    | 6      | 6    | src MAC   |
    | 12     | 2    | ethertype (big-endian) |
    | 14     | N    | L3 payload |

IPv4 payloads use a fixed 20-byte header (ihl=5, no options, checksum
field carried as zero -- the medium models loss, not corruption):

    version_ihl=0x45, tos=0, total_length, ident=0, flags_frag=0,
    ttl=64, proto, checksum=0, src ip (4), dst ip (4)

UDP header is the standard 8 bytes (checksum zero). The stream transport
("TCP-lite") uses a fixed 20-byte header:

    src port (2), dst port (2), seq (4), ack (4), flags (1),
    pad (1), window (2), pad (4)

Frames are immutable after construction; the flow key is derived from the
payload bytes at construction time, so `parsed` can never disagree with
the wire content.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import IntEnum, IntFlag
from typing import Optional

ETH_HEADER_LEN = 14
ETHERTYPE_IPV4 = 0x0800
ETHERTYPE_ARP = 0x0806
ETHERTYPE_RAW = 0x88B5  # local experimental; used for non-IP test frames

IPV4_HEADER_LEN = 20
UDP_HEADER_LEN = 8
TCP_HEADER_LEN = 20

# default MTU carries a 9000-byte L3 payload (jumbo-frame setup)
MAX_L3_PAYLOAD = 9000
MTU_FRAME = ETH_HEADER_LEN + MAX_L3_PAYLOAD

_IPV4_HDR = struct.Struct("!BBHHHBBH4s4s")
_UDP_HDR = struct.Struct("!HHHH")
_TCP_HDR = struct.Struct("!HHIIBxH4x")


class FrameError(Exception):
    """Base class for frame codec errors."""


class FrameTooLarge(FrameError):
    """Encoded frame would exceed the configured MTU."""


class Truncated(FrameError):
    """Input ends before a declared header or length field is satisfied."""


class NotRoutable(FrameError):
    """Frame carries no transport flow metadata."""


class Proto(IntEnum):
    TCP = 6
    UDP = 17


class TcpFlags(IntFlag):
    FIN = 0x01
    SYN = 0x02
    ACK = 0x10


@dataclass(frozen=True, slots=True)
class MacAddr:
    octets: bytes

    def __post_init__(self):
        if len(self.octets) != 6:
            raise ValueError(f"MAC needs 6 octets, got {len(self.octets)}")

    @classmethod
    def parse(cls, text: str) -> "MacAddr":
        parts = text.split(":")
        if len(parts) != 6:
            raise ValueError(f"bad MAC {text!r}")
        return cls(bytes(int(p, 16) for p in parts))

    @property
    def is_broadcast(self) -> bool:
        return self.octets == b"\xff" * 6

    @property
    def is_zero(self) -> bool:
        return self.octets == b"\x00" * 6

    def __str__(self):
        return ":".join(f"{b:02x}" for b in self.octets)


BROADCAST_MAC = MacAddr(b"\xff" * 6)
ZERO_MAC = MacAddr(b"\x00" * 6)


@dataclass(frozen=True, slots=True)
class Ipv4Addr:
    octets: bytes

    def __post_init__(self):
        if len(self.octets) != 4:
            raise ValueError(f"IPv4 needs 4 octets, got {len(self.octets)}")

    @classmethod
    def parse(cls, text: str) -> "Ipv4Addr":
        parts = text.split(".")
        if len(parts) != 4:
            raise ValueError(f"bad IPv4 {text!r}")
        vals = [int(p) for p in parts]
        if any(v < 0 or v > 255 for v in vals):
            raise ValueError(f"bad IPv4 {text!r}")
        return cls(bytes(vals))

    @classmethod
    def from_int(cls, value: int) -> "Ipv4Addr":
        return cls(value.to_bytes(4, "big"))

    def to_int(self) -> int:
        return int.from_bytes(self.octets, "big")

    def __str__(self):
        return ".".join(str(b) for b in self.octets)


@dataclass(frozen=True, slots=True)
class FlowKey:
    proto: Proto
    src_ip: Ipv4Addr
    dst_ip: Ipv4Addr
    src_port: int
    dst_port: int

    def __post_init__(self):
        for p in (self.src_port, self.dst_port):
            if not 0 <= p <= 65535:
                raise ValueError(f"port {p} out of range")

    def reversed(self) -> "FlowKey":
        return FlowKey(self.proto, self.dst_ip, self.src_ip,
                       self.dst_port, self.src_port)


@dataclass(frozen=True, slots=True)
class Frame:
    dst_mac: MacAddr
    src_mac: MacAddr
    ethertype: int
    payload: bytes
    parsed: Optional[FlowKey] = field(init=False, default=None, compare=False)

    def __post_init__(self):
        flow = _parse_flow(self.ethertype, self.payload)
        if flow is not None:
            object.__setattr__(self, "parsed", flow)


def _parse_flow(ethertype: int, payload: bytes) -> Optional[FlowKey]:
    if ethertype != ETHERTYPE_IPV4:
        return None
    if len(payload) < IPV4_HEADER_LEN:
        raise Truncated(f"IPv4 header needs 20 bytes, have {len(payload)}")
    (version_ihl, _tos, total_len, _ident, _ff, _ttl, proto, _csum,
     src, dst) = _IPV4_HDR.unpack_from(payload, 0)
    if version_ihl != 0x45:
        return None  # not a plain IPv4 header; no flow metadata
    if total_len > len(payload):
        raise Truncated(f"IPv4 total_length {total_len} exceeds "
                        f"{len(payload)} payload bytes")
    if proto == Proto.UDP:
        l4_len = UDP_HEADER_LEN
    elif proto == Proto.TCP:
        l4_len = TCP_HEADER_LEN
    else:
        return None
    if len(payload) < IPV4_HEADER_LEN + l4_len:
        raise Truncated(f"L4 header truncated at {len(payload)} bytes")
    src_port, dst_port = struct.unpack_from("!HH", payload, IPV4_HEADER_LEN)
    return FlowKey(Proto(proto), Ipv4Addr(src), Ipv4Addr(dst),
                   src_port, dst_port)


def encode_frame(f: Frame, mtu_frame: int = MTU_FRAME) -> bytes:
    """Serialize a frame; deterministic layout, raises FrameTooLarge."""
    total = ETH_HEADER_LEN + len(f.payload)
    if total > mtu_frame:
        raise FrameTooLarge(f"{total} bytes exceeds MTU {mtu_frame}")
    return (f.dst_mac.octets + f.src_mac.octets
            + f.ethertype.to_bytes(2, "big") + f.payload)


def parse_frame(b: bytes) -> Frame:
    """Parse wire bytes into a Frame; raises Truncated, never reads past
    the input."""
    if len(b) < ETH_HEADER_LEN:
        raise Truncated(f"frame needs 14 bytes, have {len(b)}")
    return Frame(
        dst_mac=MacAddr(bytes(b[0:6])),
        src_mac=MacAddr(bytes(b[6:12])),
        ethertype=int.from_bytes(b[12:14], "big"),
        payload=bytes(b[14:]),
    )


def extract_flow(f: Frame) -> FlowKey:
    if f.parsed is None:
        raise NotRoutable(f"no flow metadata (ethertype 0x{f.ethertype:04x})")
    return f.parsed


# -- payload builders ------------------------------------------------------

def build_ipv4(proto: Proto, src_ip: Ipv4Addr, dst_ip: Ipv4Addr,
               l4: bytes) -> bytes:
    total = IPV4_HEADER_LEN + len(l4)
    hdr = _IPV4_HDR.pack(0x45, 0, total, 0, 0, 64, int(proto), 0,
                         src_ip.octets, dst_ip.octets)
    return hdr + l4

def build_udp(flow: FlowKey, data: bytes) -> bytes:
    """IPv4+UDP payload for a frame (flow.proto must be UDP)."""
    udp = _UDP_HDR.pack(flow.src_port, flow.dst_port,
                        UDP_HEADER_LEN + len(data), 0) + data
    return build_ipv4(Proto.UDP, flow.src_ip, flow.dst_ip, udp)

def udp_data(f: Frame) -> bytes:
    """Datagram bytes of a parsed UDP frame."""
    if f.parsed is None or f.parsed.proto is not Proto.UDP:
        raise NotRoutable("not a UDP frame")
    length, = struct.unpack_from("!H", f.payload, IPV4_HEADER_LEN + 4)
    start = IPV4_HEADER_LEN + UDP_HEADER_LEN
    end = IPV4_HEADER_LEN + length
    if end > len(f.payload) or length < UDP_HEADER_LEN:
        raise Truncated(f"UDP length field {length} inconsistent")
    return f.payload[start:end]

def build_tcp(flow: FlowKey, seq: int, ack: int, flags: TcpFlags,
              window: int, data: bytes = b"") -> bytes:
    """IPv4+TCP-lite payload for a frame (flow.proto must be TCP)."""
    hdr = _TCP_HDR.pack(flow.src_port, flow.dst_port,
                        seq & 0xFFFFFFFF, ack & 0xFFFFFFFF,
                        int(flags), window)
    return build_ipv4(Proto.TCP, flow.src_ip, flow.dst_ip, hdr + data)

def tcp_fields(f: Frame) -> tuple[int, int, TcpFlags, int, bytes]:
    """(seq, ack, flags, window, data) of a parsed TCP-lite frame."""
    if f.parsed is None or f.parsed.proto is not Proto.TCP:
        raise NotRoutable("not a TCP-lite frame")
    _sp, _dp, seq, ack, flags, window = _TCP_HDR.unpack_from(
        f.payload, IPV4_HEADER_LEN)
    data = f.payload[IPV4_HEADER_LEN + TCP_HEADER_LEN:]
    return seq, ack, TcpFlags(flags), window, data


# -- address announce (gratuitous-ARP analog) ------------------------------

def build_arp_announce(sender_mac: MacAddr, ip: Ipv4Addr) -> Frame:
    """Broadcast frame announcing that `ip` now lives at `sender_mac`."""
    return Frame(BROADCAST_MAC, sender_mac, ETHERTYPE_ARP,
                 ip.octets + sender_mac.octets)

def parse_arp_announce(f: Frame) -> Optional[tuple[Ipv4Addr, MacAddr]]:
    if f.ethertype != ETHERTYPE_ARP or len(f.payload) < 10:
        return None
    return Ipv4Addr(f.payload[0:4]), MacAddr(f.payload[4:10])
