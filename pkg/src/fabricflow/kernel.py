"""Control plane: activities, capabilities and channel establishment.

The kernel is not a scheduled actor; its operations take effect immediately
at the current virtual time and cost nothing.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from .dtu import (
    AccessDenied,
    MemoryEndpoint,
    Network,
    ReceiveEndpoint,
    SendEndpoint,
)


class KernelError(RuntimeError):
    pass


class EndpointExhausted(KernelError):
    pass


@dataclass(frozen=True)
class Activity:
    id: int
    tile: str
    tenant: str


@dataclass
class Capability:
    id: int
    holder: int
    kind: str  # send-to, receive-on, memory-range
    tile: str
    ep: int
    target_tile: str
    detail: dict = field(default_factory=dict)
    revoked: bool = False


@dataclass(frozen=True)
class DataChannelHandle:
    sender: Activity
    receiver: Activity
    send_ep: int
    mem_ep: int
    recv_ep: int
    send_cap: int
    mem_cap: int
    recv_cap: int
    slots: int
    slot_bytes: int
    buffer_bytes: int


class Kernel:
    def __init__(self, network: Network):
        self.net = network
        self._authority = network.issue_authority()
        self.activities: dict[int, Activity] = {}
        self.caps: dict[int, Capability] = {}
        self._by_tile: dict[str, int] = {}
        self._ids = itertools.count(1)

    def create_activity(self, tile: str, tenant: str) -> Activity:
        spec = self.net.config.tile(tile)
        if spec.kind == "kernel":
            raise KernelError(f"{tile!r} is the kernel tile")
        if tile in self._by_tile:
            raise KernelError(f"tile {tile!r} already hosts activity {self._by_tile[tile]}")
        act = Activity(next(self._ids), tile, tenant)
        self.activities[act.id] = act
        self._by_tile[tile] = act.id
        return act

    def activity_on(self, tile: str) -> Optional[Activity]:
        aid = self._by_tile.get(tile)
        return None if aid is None else self.activities[aid]

    def _live(self, act: Activity) -> None:
        if self.activities.get(act.id) != act:
            raise KernelError(f"activity {act.id} is not alive")

    def _issue(self, holder: Activity, kind: str, ep: int, target_tile: str, **detail) -> Capability:
        cap = Capability(next(self._ids), holder.id, kind, holder.tile, ep, target_tile, detail)
        self.caps[cap.id] = cap
        return cap

    def establish_channel(self, sender: Activity, receiver: Activity, slots: int = 1,
                          slot_bytes: int = 64, buffer_bytes: int = 1 << 20) -> DataChannelHandle:
        """Configure memory + send endpoints on the sender and a receive endpoint on the receiver."""
        self._live(sender)
        self._live(receiver)
        if sender.tile == receiver.tile:
            raise KernelError("sender and receiver must be on different tiles")
        if slots < 1:
            raise KernelError("a channel needs at least one slot")
        free_s = self.net.dtu(sender.tile).free_endpoints()
        free_r = self.net.dtu(receiver.tile).free_endpoints()
        if len(free_s) < 2 or not free_r:
            raise EndpointExhausted(
                f"not enough free endpoints ({sender.tile}: {len(free_s)}, {receiver.tile}: {len(free_r)})")
        mem_i, send_i = free_s[0], free_s[1]
        recv_i = free_r[0]
        tok = self._authority
        self.net.configure_endpoint(tok, receiver.tile, recv_i, ReceiveEndpoint(receiver.tile, slots, slot_bytes))
        self.net.configure_endpoint(tok, sender.tile, mem_i, MemoryEndpoint(
            sender.tile, receiver.tile, 0, buffer_bytes, frozenset({"write"})))
        self.net.configure_endpoint(tok, sender.tile, send_i, SendEndpoint(
            sender.tile, (receiver.tile, recv_i), slots, slot_bytes))
        recv_cap = self._issue(receiver, "receive-on", recv_i, receiver.tile, slots=slots, slot_bytes=slot_bytes)
        mem_cap = self._issue(sender, "memory-range", mem_i, receiver.tile, base=0, len=buffer_bytes, perms=("write",))
        send_cap = self._issue(sender, "send-to", send_i, receiver.tile, target_ep=recv_i)
        return DataChannelHandle(sender, receiver, send_i, mem_i, recv_i,
                                 send_cap.id, mem_cap.id, recv_cap.id, slots, slot_bytes, buffer_bytes)

    def revoke(self, cap_id: int) -> None:
        cap = self.caps.get(cap_id)
        if cap is None:
            raise KernelError(f"unknown capability {cap_id}")
        if cap.revoked:
            raise KernelError(f"capability {cap_id} already revoked")
        cap.revoked = True
        self.net.configure_endpoint(self._authority, cap.tile, cap.ep, None)

    def live_caps(self, holder: Optional[int] = None) -> list[Capability]:
        return [c for c in self.caps.values() if not c.revoked and (holder is None or c.holder == holder)]

    def check_transitive_reach(self, tenant: str) -> set[str]:
        """Tiles reachable from ``tenant``'s activities over live send/memory capabilities."""
        edges: dict[str, set[str]] = {}
        for cap in self.live_caps():
            if cap.kind in ("send-to", "memory-range"):
                edges.setdefault(cap.tile, set()).add(cap.target_tile)
        starts = [a.tile for a in self.activities.values() if a.tenant == tenant]
        seen: set[str] = set()
        todo = deque(starts)
        while todo:
            tile = todo.popleft()
            for nxt in edges.get(tile, ()):
                if nxt not in seen:
                    seen.add(nxt)
                    todo.append(nxt)
        return seen

    def audit_endpoints(self) -> list[str]:
        """Configured endpoints lacking exactly one live issuing capability."""
        backing: dict[tuple[str, int], int] = {}
        for cap in self.live_caps():
            backing[(cap.tile, cap.ep)] = backing.get((cap.tile, cap.ep), 0) + 1
        problems = []
        for tile, dtu in self.net.dtus.items():
            for i, ep in enumerate(dtu.endpoints):
                n = backing.get((tile, i), 0)
                if ep is not None and n != 1:
                    problems.append(f"{tile}:{i} backed by {n} live capabilities")
                if ep is None and n:
                    problems.append(f"{tile}:{i} unconfigured but has a live capability")
        return problems


__all__ = ["AccessDenied", "Activity", "Capability", "DataChannelHandle", "EndpointExhausted",
           "Kernel", "KernelError"]
