"""Classic libpcap capture reading and per-packet decoding.

Supports the little- and big-endian microsecond magics and the
nanosecond variant, linktype 1 (Ethernet) only. Frames are decoded to
:class:`DecodedPacket` records holding the header fields and payload
statistics used downstream. Anything the decoder does not model (IPv6,
VLAN tags, malformed headers) is skipped and counted, never raised:
decoding is total over arbitrary record bytes.
"""

from __future__ import annotations

import dataclasses
import struct
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

MAGIC_MICRO_LE = 0xA1B2C3D4
MAGIC_MICRO_BE = 0xD4C3B2A1
MAGIC_NANO_LE = 0xA1B23C4D
MAGIC_NANO_BE = 0x4D3CB2A1

LINKTYPE_ETHERNET = 1

ETHERTYPE_IPV4 = 0x0800
ETHERTYPE_ARP = 0x0806
ETHERTYPE_VLAN = 0x8100
ETHERTYPE_IPV6 = 0x86DD

IPPROTO_ICMP = 1
IPPROTO_TCP = 6
IPPROTO_UDP = 17

# l4_kind codes
L4_TCP = 0
L4_UDP = 1
L4_ICMP = 2
L4_ARP = 3
L4_OTHER = 4

L4_NAMES = ("TCP", "UDP", "ICMP", "ARP", "OTHER")

# tcp_flags bit positions
TCP_FIN = 0x01
TCP_SYN = 0x02
TCP_RST = 0x04
TCP_PSH = 0x08
TCP_ACK = 0x10
TCP_URG = 0x20
TCP_ECE = 0x40
TCP_CWR = 0x80

LABEL_BENIGN = 0
LABEL_ATTACK = 1


class PcapError(Exception):
    """Base class for unreadable capture files."""


class BadMagic(PcapError):
    pass


class TruncatedHeader(PcapError):
    pass


class UnsupportedLinkType(PcapError):
    pass


@dataclass(frozen=True)
class DecodedPacket:
    """One decoded Ethernet frame.

    ``ts_ns`` is the capture timestamp in integer nanoseconds since the
    epoch, exact as stored in the file (no float truncation).
    ``frame_len`` is the on-wire length from the record header, so size
    features are unaffected by snaplen truncation. tcp_* fields are
    meaningful only when ``l4_kind == L4_TCP``; sport/dport are None for
    non-TCP/UDP packets.
    """

    ts_ns: int
    frame_len: int
    src_mac: bytes
    dst_mac: bytes
    eth_type: int
    ip_present: bool = False
    src_ip: int = 0
    dst_ip: int = 0
    ip_proto: int = 0
    ip_ttl: int = 0
    ip_flags: int = 0
    ip_id: int = 0
    l4_kind: int = L4_OTHER
    sport: int | None = None
    dport: int | None = None
    tcp_flags: int = 0
    tcp_window: int = 0
    payload_len: int = 0
    payload_entropy: float = 0.0
    label: int | None = None

    @property
    def capture_ts(self) -> Fraction:
        """Capture time in seconds since the epoch, exact."""
        return Fraction(self.ts_ns, 1_000_000_000)

    def with_label(self, label: int) -> "DecodedPacket":
        return dataclasses.replace(self, label=label)


@dataclass
class DecodeStats:
    """Counters for records that were read but not decoded."""

    packets: int = 0
    skipped_non_ethernet: int = 0  # VLAN, IPv6, unsupported payloads
    skipped_malformed: int = 0
    truncated_final_record: int = 0

    @property
    def warnings(self) -> int:
        return (
            self.skipped_non_ethernet
            + self.skipped_malformed
            + self.truncated_final_record
        )


@dataclass
class DecodeResult:
    packets: list[DecodedPacket]
    stats: DecodeStats

    def __iter__(self):
        return iter(self.packets)

    def __len__(self) -> int:
        return len(self.packets)


def shannon_entropy(payload: bytes | bytearray | memoryview) -> float:
    """Shannon entropy of a byte sequence in bits per byte, in [0, 8].

    0 for empty or single-byte payloads; 8 only when all 256 byte values
    are equally frequent.
    """
    n = len(payload)
    if n <= 1:
        return 0.0
    counts = np.bincount(np.frombuffer(bytes(payload), dtype=np.uint8), minlength=256)
    counts = counts[counts > 0]
    if counts.size == 1:
        return 0.0
    p = counts / n
    return float(-(p * np.log2(p)).sum())


def ip_to_str(addr: int) -> str:
    return ".".join(str((addr >> s) & 0xFF) for s in (24, 16, 8, 0))


def str_to_ip(text: str) -> int:
    parts = text.strip().split(".")
    if len(parts) != 4:
        raise ValueError(f"not a dotted-quad IPv4 address: {text!r}")
    value = 0
    for part in parts:
        octet = int(part)
        if not 0 <= octet <= 255:
            raise ValueError(f"octet out of range in {text!r}")
        value = (value << 8) | octet
    return value


def mac_to_str(mac: bytes) -> str:
    return ":".join(f"{b:02x}" for b in mac)


def str_to_mac(text: str) -> bytes:
    parts = text.strip().lower().replace("-", ":").split(":")
    if len(parts) != 6:
        raise ValueError(f"not a MAC address: {text!r}")
    return bytes(int(p, 16) for p in parts)


def _decode_frame(ts_ns: int, orig_len: int, data: bytes) -> DecodedPacket | None:
    """Decode one captured Ethernet frame; None when unsupported/malformed."""
    if len(data) < 14:
        return None
    dst_mac = data[0:6]
    src_mac = data[6:12]
    eth_type = (data[12] << 8) | data[13]
    if eth_type in (ETHERTYPE_VLAN, ETHERTYPE_IPV6):
        return None

    base = dict(
        ts_ns=ts_ns,
        frame_len=orig_len,
        src_mac=src_mac,
        dst_mac=dst_mac,
        eth_type=eth_type,
    )

    if eth_type == ETHERTYPE_ARP:
        return DecodedPacket(l4_kind=L4_ARP, **base)

    if eth_type != ETHERTYPE_IPV4:
        return DecodedPacket(l4_kind=L4_OTHER, **base)

    ip = data[14:]
    if len(ip) < 20:
        return None
    version = ip[0] >> 4
    ihl = (ip[0] & 0x0F) * 4
    if version != 4 or ihl < 20 or len(ip) < ihl:
        return None
    total_len = (ip[2] << 8) | ip[3]
    ip_id = (ip[4] << 8) | ip[5]
    flags_frag = (ip[6] << 8) | ip[7]
    ip_flags = (flags_frag >> 13) & 0x7
    ttl = ip[8]
    proto = ip[9]
    src_ip = int.from_bytes(ip[12:16], "big")
    dst_ip = int.from_bytes(ip[16:20], "big")

    base.update(
        ip_present=True,
        src_ip=src_ip,
        dst_ip=dst_ip,
        ip_proto=proto,
        ip_ttl=ttl,
        ip_flags=ip_flags,
        ip_id=ip_id,
    )

    l4 = ip[ihl:]
    # Claimed L4 length from the IP header, clamped against what the
    # wire can actually hold (payload_len <= frame_len must hold even
    # for lying headers).
    claimed_l4 = max(0, total_len - ihl)
    wire_l4 = max(0, orig_len - 14 - ihl)
    l4_len = min(claimed_l4, wire_l4)

    if proto == IPPROTO_TCP:
        if len(l4) < 20:
            return None
        sport = (l4[0] << 8) | l4[1]
        dport = (l4[2] << 8) | l4[3]
        data_off = (l4[12] >> 4) * 4
        if data_off < 20:
            return None
        flags = l4[13]
        window = (l4[14] << 8) | l4[15]
        payload_len = max(0, l4_len - data_off)
        payload = l4[data_off : data_off + payload_len]
        return DecodedPacket(
            l4_kind=L4_TCP,
            sport=sport,
            dport=dport,
            tcp_flags=flags,
            tcp_window=window,
            payload_len=payload_len,
            payload_entropy=shannon_entropy(payload),
            **base,
        )

    if proto == IPPROTO_UDP:
        if len(l4) < 8:
            return None
        sport = (l4[0] << 8) | l4[1]
        dport = (l4[2] << 8) | l4[3]
        payload_len = max(0, l4_len - 8)
        payload = l4[8 : 8 + payload_len]
        return DecodedPacket(
            l4_kind=L4_UDP,
            sport=sport,
            dport=dport,
            payload_len=payload_len,
            payload_entropy=shannon_entropy(payload),
            **base,
        )

    if proto == IPPROTO_ICMP:
        if len(l4) < 8:
            return None
        payload_len = max(0, l4_len - 8)
        payload = l4[8 : 8 + payload_len]
        return DecodedPacket(
            l4_kind=L4_ICMP,
            payload_len=payload_len,
            payload_entropy=shannon_entropy(payload),
            **base,
        )

    # Other IP protocols: everything past the IP header counts as payload.
    payload = l4[:l4_len]
    return DecodedPacket(
        l4_kind=L4_OTHER,
        payload_len=l4_len,
        payload_entropy=shannon_entropy(payload),
        **base,
    )


def read_pcap(path: str | Path) -> DecodeResult:
    """Read a classic libpcap file into decoded packets, in capture order.

    Timestamps are preserved exactly as stored (out-of-order captures
    stay out of order). A truncated final record is dropped and counted.

    Raises BadMagic, TruncatedHeader or UnsupportedLinkType when the
    file itself is unreadable; per-record problems only bump counters.
    """
    raw = Path(path).read_bytes()
    if len(raw) < 24:
        raise TruncatedHeader(f"{path}: file shorter than a pcap global header")

    magic = struct.unpack("<I", raw[0:4])[0]
    if magic in (MAGIC_MICRO_LE, MAGIC_NANO_LE):
        endian = "<"
    elif magic in (MAGIC_MICRO_BE, MAGIC_NANO_BE):
        endian = ">"
        magic = struct.unpack(">I", raw[0:4])[0]
    else:
        raise BadMagic(f"{path}: magic 0x{magic:08X} is not a pcap magic")
    frac_scale = 1 if magic == MAGIC_NANO_LE else 1000

    _, _, _, _, _, linktype = struct.unpack(endian + "HHiIII", raw[4:24])
    if linktype != LINKTYPE_ETHERNET:
        raise UnsupportedLinkType(f"{path}: linktype {linktype} (only Ethernet/1)")

    rec_hdr = struct.Struct(endian + "IIII")
    packets: list[DecodedPacket] = []
    stats = DecodeStats()
    off = 24
    size = len(raw)
    while off < size:
        if off + 16 > size:
            stats.truncated_final_record += 1
            break
        ts_sec, ts_frac, incl_len, orig_len = rec_hdr.unpack_from(raw, off)
        off += 16
        if off + incl_len > size:
            stats.truncated_final_record += 1
            break
        data = raw[off : off + incl_len]
        off += incl_len
        ts_ns = ts_sec * 1_000_000_000 + ts_frac * frac_scale
        pkt = _decode_frame(ts_ns, orig_len, data)
        if pkt is None:
            if len(data) >= 14 and ((data[12] << 8) | data[13]) in (
                ETHERTYPE_VLAN,
                ETHERTYPE_IPV6,
            ):
                stats.skipped_non_ethernet += 1
            else:
                stats.skipped_malformed += 1
            continue
        if pkt.payload_len > pkt.frame_len:
            # cannot happen with the clamping above; belt and braces
            stats.skipped_malformed += 1
            continue
        packets.append(pkt)
        stats.packets += 1
    return DecodeResult(packets=packets, stats=stats)
