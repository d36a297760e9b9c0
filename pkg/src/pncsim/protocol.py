"""Discrete-event emulation of the AP and hub exchange for one round.

Per round each AP reports its fade-state index, waits for the hub's
mapping-index reply, then delivers the network-coded data. Every
backhaul packet is sent as R identical copies, each independently
subject to erasure; a 1-second timeout on the mapping reply makes the
AP fall back to the mapping it last used. The hub replies once per
round, after both fade-state indices arrived, and decodes once both
data packets arrived.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import gf2
from .pnc_core import MappingCatalog, ncv_codes, online_select

# packet durations (seconds) at the 1 Msample/s backhaul rate
SFS_PACKET_S = 560e-6
MAPPING_PACKET_S = 560e-6
DATA_PACKET_S = 800e-6
DEFAULT_TIMEOUT_S = 1.0


@dataclass(frozen=True)
class Message:
    kind: str                 # "sfs_index" | "mapping_index" | "ncs_data"
    src: str
    dst: str
    round_id: int
    sfs: Optional[int] = None
    mapping: Optional[int] = None
    ncvs: Optional[tuple] = None

    def payload_str(self) -> str:
        if self.kind == "sfs_index":
            return f"sfs={self.sfs}"
        if self.kind == "mapping_index":
            return f"mapping={self.mapping}"
        return f"ncvs[{len(self.ncvs)}]"


@dataclass
class ApState:
    ap_id: int
    last_mapping: Optional[int] = None
    deadline: Optional[float] = None
    words: Optional[np.ndarray] = None
    sfs_index: Optional[int] = None
    used_fallback: bool = False
    stalled: bool = False

    @property
    def name(self) -> str:
        return f"ap{self.ap_id}"


@dataclass
class HubState:
    catalog: MappingCatalog
    received_sfs: Dict[int, int] = field(default_factory=dict)   # ap_id -> sfs
    mapping_sent: Optional[int] = None
    ncv_data: Dict[int, tuple] = field(default_factory=dict)     # ap_id -> codes
    decoded: Optional[np.ndarray] = None
    integrity_errors: int = 0
    orphan_data: set = field(default_factory=set)                # ap_ids seen early


@dataclass(frozen=True)
class ApObservation:
    """What one AP extracted from the radio frame."""

    sfs_index: int
    words: np.ndarray  # ML word estimates per data-carrier use, ints 0..15


@dataclass
class RoundOutcome:
    status: str                      # completed | fallback_used | stalled
    decoded_words: Optional[np.ndarray]
    mapping_index: Optional[int]
    ap_fallback: Tuple[bool, bool]
    integrity_errors: int
    trace: List[str]
    kind_counts: Dict[str, int]


class EventQueue:
    """Time-ordered events, FIFO among equal timestamps."""

    def __init__(self):
        self._heap = []
        self._seq = 0

    def push(self, time: float, action, arg) -> None:
        heapq.heappush(self._heap, (time, self._seq, action, arg))
        self._seq += 1

    def pop(self):
        return heapq.heappop(self._heap)

    def __len__(self) -> int:
        return len(self._heap)


def _encode_codes(m: gf2.Gf2Matrix, words: np.ndarray) -> tuple:
    return tuple(int(x) for x in ncv_codes(m)[words])


def ap_step(
    state: ApState,
    event: Tuple[str, object],
    catalog: MappingCatalog,
    replication: int,
    now: float,
    timeout_s: float = DEFAULT_TIMEOUT_S,
) -> Tuple[ApState, List[Message], Optional[float]]:
    """Advance one AP; returns (state, messages to send, new deadline)."""
    kind, arg = event
    out: List[Message] = []
    deadline = None

    if kind == "ue_frame":
        obs: ApObservation = arg
        state.words = np.asarray(obs.words)
        state.sfs_index = int(obs.sfs_index)
        out = [
            Message("sfs_index", state.name, "hub", round_id=0, sfs=state.sfs_index)
            for _ in range(replication)
        ]
        deadline = now + timeout_s
        state.deadline = deadline

    elif kind == "mapping_index":
        msg: Message = arg
        if state.deadline is None:
            return state, out, None  # duplicate after resolution
        state.deadline = None
        state.last_mapping = int(msg.mapping)
        entry = catalog.by_mapping_index(state.last_mapping)
        own = entry.m1 if state.ap_id == 1 else entry.m2
        codes = _encode_codes(own, state.words)
        out = [
            Message("ncs_data", state.name, "hub", round_id=0, ncvs=codes)
            for _ in range(replication)
        ]

    elif kind == "timeout":
        if state.deadline is None:
            return state, out, None  # reply already arrived
        state.deadline = None
        if state.last_mapping is None:
            state.stalled = True
        else:
            state.used_fallback = True
            entry = catalog.by_mapping_index(state.last_mapping)
            own = entry.m1 if state.ap_id == 1 else entry.m2
            codes = _encode_codes(own, state.words)
            out = [
                Message("ncs_data", state.name, "hub", round_id=0, ncvs=codes)
                for _ in range(replication)
            ]
    else:
        raise ValueError(f"unknown AP event {kind!r}")
    return state, out, deadline


def _decode_lut(catalog: MappingCatalog, mapping_index: int) -> np.ndarray:
    """16-entry table: (x1_code * 4 + x2_code) -> joint word."""
    entry = catalog.by_mapping_index(mapping_index)
    if gf2.rank_mod2(entry.combined) != 4:
        raise RuntimeError("hub would decode with a singular matrix")
    c1 = ncv_codes(entry.m1)
    c2 = ncv_codes(entry.m2)
    lut = np.full(16, -1, dtype=np.int64)
    for w in range(16):
        lut[c1[w] * 4 + c2[w]] = w
    return lut


def hub_step(
    state: HubState, event: Tuple[str, Message], replication: int = 1
) -> Tuple[HubState, List[Message]]:
    """Advance the hub; duplicate messages within the round are ignored."""
    kind, msg = event
    out: List[Message] = []

    if kind == "sfs_index":
        ap_id = int(msg.src[-1])
        if ap_id not in state.received_sfs:
            state.received_sfs[ap_id] = int(msg.sfs)
            if len(state.received_sfs) == 2 and state.mapping_sent is None:
                i, j = state.received_sfs[1], state.received_sfs[2]
                _, _, _, idx = online_select(i, j, state.catalog)
                state.mapping_sent = idx
                out = [
                    Message("mapping_index", "hub", f"ap{k}", round_id=0, mapping=idx)
                    for k in (1, 2)
                    for _ in range(replication)
                ]

    elif kind == "ncs_data":
        ap_id = int(msg.src[-1])
        if state.mapping_sent is None:
            if ap_id not in state.orphan_data:
                state.orphan_data.add(ap_id)
                state.integrity_errors += 1
            return state, out
        if ap_id not in state.ncv_data:
            state.ncv_data[ap_id] = msg.ncvs
            if len(state.ncv_data) == 2 and state.decoded is None:
                lut = _decode_lut(state.catalog, state.mapping_sent)
                x1 = np.asarray(state.ncv_data[1], dtype=np.int64)
                x2 = np.asarray(state.ncv_data[2], dtype=np.int64)
                state.decoded = lut[x1 * 4 + x2]
    else:
        raise ValueError(f"unknown hub event {kind!r}")
    return state, out


def run_round(
    catalog: MappingCatalog,
    obs1: Optional[ApObservation],
    obs2: Optional[ApObservation],
    loss_prob: float = 0.0,
    replication: int = 4,
    rng: Optional[np.random.Generator] = None,
    timeout_s: float = DEFAULT_TIMEOUT_S,
    ap1_state: Optional[ApState] = None,
    ap2_state: Optional[ApState] = None,
    collect_trace: bool = False,
    loss_only_kind: Optional[str] = None,
) -> RoundOutcome:
    """Drive one full exchange between both APs and the hub.

    ``obs1``/``obs2`` are None when that AP missed the radio frame. AP
    states may be carried across rounds so the timeout fallback can
    reuse the previous mapping. ``loss_only_kind`` restricts erasures to
    one message kind (useful for forcing the fallback path in tests).
    """
    if not (0.0 <= loss_prob < 1.0):
        raise ValueError("loss probability must be in [0, 1)")
    if replication < 1:
        raise ValueError("replication must be >= 1")
    if loss_prob > 0.0 and rng is None:
        raise ValueError("an rng is required when loss is enabled")

    aps = {
        1: ap1_state if ap1_state is not None else ApState(ap_id=1),
        2: ap2_state if ap2_state is not None else ApState(ap_id=2),
    }
    for ap in aps.values():
        ap.deadline = None
        ap.used_fallback = False
        ap.stalled = False
        ap.words = None
        ap.sfs_index = None
    hub = HubState(catalog=catalog)
    queue = EventQueue()
    trace: List[str] = []
    kind_counts: Dict[str, int] = {}

    durations = {
        "sfs_index": SFS_PACKET_S,
        "mapping_index": MAPPING_PACKET_S,
        "ncs_data": DATA_PACKET_S,
    }

    def send(messages: List[Message], now: float) -> None:
        for k, msg in enumerate(messages):
            arrive = now + (k + 1) * durations[msg.kind]
            erasable = loss_only_kind is None or msg.kind == loss_only_kind
            lost = erasable and loss_prob > 0.0 and rng.random() < loss_prob
            if collect_trace:
                tag = "lost" if lost else "sent"
                trace.append(
                    f"{arrive:.6f} {msg.kind} {msg.src} {msg.dst} {msg.payload_str()} {tag}"
                )
            if not lost:
                queue.push(arrive, "deliver", msg)

    for ap_id, obs in ((1, obs1), (2, obs2)):
        if obs is None:
            aps[ap_id].stalled = True
            continue
        _, msgs, deadline = ap_step(
            aps[ap_id], ("ue_frame", obs), catalog, replication, 0.0, timeout_s
        )
        send(msgs, 0.0)
        if deadline is not None:
            queue.push(deadline, "timeout", ap_id)

    while len(queue):
        now, _, action, arg = queue.pop()
        if action == "timeout":
            ap = aps[arg]
            _, msgs, _ = ap_step(ap, ("timeout", None), catalog, replication, now, timeout_s)
            if collect_trace and (msgs or ap.stalled):
                what = "fallback" if msgs else "stall"
                trace.append(f"{now:.6f} timeout {ap.name} - {what}")
            send(msgs, now)
        elif action == "deliver":
            msg: Message = arg
            kind_counts[msg.kind] = kind_counts.get(msg.kind, 0) + 1
            if msg.dst == "hub":
                _, msgs = hub_step(hub, (msg.kind, msg), replication)
                send(msgs, now)
            else:
                ap = aps[int(msg.dst[-1])]
                _, msgs, _ = ap_step(
                    ap, ("mapping_index", msg), catalog, replication, now, timeout_s
                )
                send(msgs, now)

    used_fallback = (aps[1].used_fallback, aps[2].used_fallback)
    if hub.decoded is not None:
        status = "fallback_used" if any(used_fallback) else "completed"
    else:
        status = "stalled"
    return RoundOutcome(
        status=status,
        decoded_words=hub.decoded,
        mapping_index=hub.mapping_sent,
        ap_fallback=used_fallback,
        integrity_errors=hub.integrity_errors,
        trace=trace,
        kind_counts=kind_counts,
    )
