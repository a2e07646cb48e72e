"""Declarative packet labelling rules.

A rule file is a JSON array of objects, each holding a ``match`` block
of predicates, a ``label`` ("BENIGN" or "ATTACK") and an integer
``priority``. The highest-priority matching rule wins; ties are broken
by rule order (earlier wins); packets matched by nothing get the
default label.

Example rule file::

    [
      {"match": {"src_ip": "10.0.0.5", "dport": 23}, "label": "ATTACK", "priority": 10},
      {"match": {"l4_kind": "ARP", "time_range": [120.0, 360.0]}, "label": "ATTACK", "priority": 5}
    ]

Supported predicates: src_ip, dst_ip, src_mac, dst_mac, ip_proto,
l4_kind, sport, dport, tcp_flag_required (flag name, e.g. "SYN"),
time_range ([t0, t1) in epoch seconds).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .pcap import (
    L4_NAMES,
    LABEL_ATTACK,
    LABEL_BENIGN,
    DecodedPacket,
    str_to_ip,
    str_to_mac,
)

_FLAG_BITS = {
    "FIN": 0x01,
    "SYN": 0x02,
    "RST": 0x04,
    "PSH": 0x08,
    "ACK": 0x10,
    "URG": 0x20,
    "ECE": 0x40,
    "CWR": 0x80,
}

_LABELS = {"BENIGN": LABEL_BENIGN, "ATTACK": LABEL_ATTACK}


class InvalidRule(ValueError):
    """Rule without predicates, or with a malformed field."""


@dataclass(frozen=True)
class LabelRule:
    label: int
    priority: int = 0
    src_ip: int | None = None
    dst_ip: int | None = None
    src_mac: bytes | None = None
    dst_mac: bytes | None = None
    ip_proto: int | None = None
    l4_kind: int | None = None
    sport: int | None = None
    dport: int | None = None
    tcp_flag_required: int | None = None
    time_range: tuple[Fraction, Fraction] | None = None

    def __post_init__(self) -> None:
        predicates = (
            self.src_ip,
            self.dst_ip,
            self.src_mac,
            self.dst_mac,
            self.ip_proto,
            self.l4_kind,
            self.sport,
            self.dport,
            self.tcp_flag_required,
            self.time_range,
        )
        if all(p is None for p in predicates):
            raise InvalidRule("rule has no predicates")
        if self.time_range is not None and not self.time_range[0] < self.time_range[1]:
            raise InvalidRule(f"time_range must satisfy t0 < t1, got {self.time_range}")

    def matches(self, pkt: DecodedPacket) -> bool:
        if self.src_ip is not None and (not pkt.ip_present or pkt.src_ip != self.src_ip):
            return False
        if self.dst_ip is not None and (not pkt.ip_present or pkt.dst_ip != self.dst_ip):
            return False
        if self.src_mac is not None and pkt.src_mac != self.src_mac:
            return False
        if self.dst_mac is not None and pkt.dst_mac != self.dst_mac:
            return False
        if self.ip_proto is not None and (not pkt.ip_present or pkt.ip_proto != self.ip_proto):
            return False
        if self.l4_kind is not None and pkt.l4_kind != self.l4_kind:
            return False
        if self.sport is not None and pkt.sport != self.sport:
            return False
        if self.dport is not None and pkt.dport != self.dport:
            return False
        if self.tcp_flag_required is not None and not (pkt.tcp_flags & self.tcp_flag_required):
            return False
        if self.time_range is not None:
            ts = pkt.capture_ts
            if not (self.time_range[0] <= ts < self.time_range[1]):
                return False
        return True


@dataclass
class RuleSet:
    rules: list[LabelRule] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rules)


def _parse_label(raw) -> int:
    if raw not in _LABELS:
        raise InvalidRule(f"label must be one of {sorted(_LABELS)}, got {raw!r}")
    return _LABELS[raw]


def rule_from_dict(obj: dict) -> LabelRule:
    if not isinstance(obj, dict):
        raise InvalidRule(f"rule must be an object, got {type(obj).__name__}")
    match = obj.get("match", {})
    if not isinstance(match, dict):
        raise InvalidRule("'match' must be an object")
    unknown = set(match) - {
        "src_ip",
        "dst_ip",
        "src_mac",
        "dst_mac",
        "ip_proto",
        "l4_kind",
        "sport",
        "dport",
        "tcp_flag_required",
        "time_range",
    }
    if unknown:
        raise InvalidRule(f"unknown predicates: {sorted(unknown)}")

    kwargs: dict = {}
    try:
        if "src_ip" in match:
            kwargs["src_ip"] = str_to_ip(match["src_ip"])
        if "dst_ip" in match:
            kwargs["dst_ip"] = str_to_ip(match["dst_ip"])
        if "src_mac" in match:
            kwargs["src_mac"] = str_to_mac(match["src_mac"])
        if "dst_mac" in match:
            kwargs["dst_mac"] = str_to_mac(match["dst_mac"])
    except ValueError as exc:
        raise InvalidRule(str(exc)) from exc
    if "ip_proto" in match:
        kwargs["ip_proto"] = int(match["ip_proto"])
    if "l4_kind" in match:
        kind = str(match["l4_kind"]).upper()
        if kind not in L4_NAMES:
            raise InvalidRule(f"l4_kind must be one of {L4_NAMES}, got {kind!r}")
        kwargs["l4_kind"] = L4_NAMES.index(kind)
    if "sport" in match:
        kwargs["sport"] = int(match["sport"])
    if "dport" in match:
        kwargs["dport"] = int(match["dport"])
    if "tcp_flag_required" in match:
        flag = str(match["tcp_flag_required"]).upper()
        if flag not in _FLAG_BITS:
            raise InvalidRule(f"unknown TCP flag {flag!r}")
        kwargs["tcp_flag_required"] = _FLAG_BITS[flag]
    if "time_range" in match:
        tr = match["time_range"]
        if not (isinstance(tr, (list, tuple)) and len(tr) == 2):
            raise InvalidRule("time_range must be a [t0, t1] pair")
        kwargs["time_range"] = (Fraction(str(tr[0])), Fraction(str(tr[1])))

    return LabelRule(label=_parse_label(obj.get("label")), priority=int(obj.get("priority", 0)), **kwargs)


def load_rules(path: str | Path) -> RuleSet:
    """Parse a JSON rule file, validating every rule."""
    raw = json.loads(Path(path).read_text())
    if not isinstance(raw, list):
        raise InvalidRule("rule file must contain a JSON array")
    return RuleSet(rules=[rule_from_dict(obj) for obj in raw])


def apply_rules(
    packets: list[DecodedPacket],
    rules: RuleSet,
    default: int = LABEL_BENIGN,
) -> list[DecodedPacket]:
    """Label each packet with its single winning rule, or the default.

    Pure over (packet, rules, default): permuting the input permutes the
    output identically.
    """
    labelled = []
    for pkt in packets:
        best: LabelRule | None = None
        for rule in rules.rules:
            if (best is None or rule.priority > best.priority) and rule.matches(pkt):
                best = rule
        labelled.append(pkt.with_label(default if best is None else best.label))
    return labelled
