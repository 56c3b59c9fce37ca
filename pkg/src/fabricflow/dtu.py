"""Per-tile data transfer units: endpoints, credited messaging, packetized DMA.

Only the holder of the kernel authority can configure endpoints.  Everything
else here is data plane: a tile can only act through its own endpoints, and
an unconfigured endpoint authorizes nothing.
"""

from __future__ import annotations

import itertools
from collections import OrderedDict, deque
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

from .engine import Engine, Future
from .fabric import (
    FabricConfig,
    bridge_overhead,
    byte_cost,
    handling_ns,
    make_hop,
    one_way_latency,
    per_byte_ns,
)

EP_PER_TILE = 32


class AccessDenied(PermissionError):
    pass


class MessageTooLarge(ValueError):
    pass


class InvalidHandle(LookupError):
    pass


class EndpointIndexError(IndexError):
    pass


@dataclass
class Message:
    id: int
    src: str
    payload_bytes: int
    kind: str  # notify, response, generic
    origin: Optional["SendEndpoint"] = None
    reply_to: Optional["ReplyHandle"] = None


@dataclass(frozen=True)
class ReplyHandle:
    tile: str
    ep: int
    msg_id: int


@dataclass(eq=False)
class ReceiveEndpoint:
    owner: str
    slots: int
    slot_bytes: int
    queue: "OrderedDict[int, Message]" = field(default_factory=OrderedDict)
    handler: Optional[Callable[[Message, ReplyHandle], None]] = None


@dataclass(eq=False)
class SendEndpoint:
    owner: str
    target: tuple[str, int]
    slots: int
    slot_bytes: int
    credits: int = -1
    pending: deque = field(default_factory=deque)
    on_reply: Optional[Callable[[Message], None]] = None

    def __post_init__(self):
        if self.credits < 0:
            self.credits = self.slots


@dataclass(eq=False)
class MemoryEndpoint:
    owner: str
    target_tile: str
    base: int
    len: int
    perms: frozenset = frozenset({"read", "write"})


Endpoint = Union[ReceiveEndpoint, SendEndpoint, MemoryEndpoint]


class KernelAuthority:
    """Opaque token; only its holder may touch the control plane."""

    __slots__ = ()


class Network:
    """All DTUs of one fabric, bound to a single engine."""

    def __init__(self, config: FabricConfig, engine: Optional[Engine] = None):
        self.config = config
        self.engine = engine if engine is not None else Engine(seed=config.seed)
        self.dtus = {t.id: DTU(self, t.id) for t in config.tiles}
        self.in_flight: dict[int, Message] = {}
        self._authority: Optional[KernelAuthority] = None
        self._ids = itertools.count(1)

    def issue_authority(self) -> KernelAuthority:
        if self._authority is not None:
            raise AccessDenied("kernel authority already issued")
        self._authority = KernelAuthority()
        return self._authority

    def dtu(self, tile: str) -> "DTU":
        try:
            return self.dtus[tile]
        except KeyError:
            raise KeyError(f"unknown tile {tile!r}") from None

    def configure_endpoint(self, authority, tile: str, index: int,
                           descriptor: Optional[Endpoint]) -> Optional[Endpoint]:
        """Replace endpoint ``index`` of ``tile``; ``None`` deconfigures it."""
        if authority is None or authority is not self._authority:
            raise AccessDenied("only the kernel may configure endpoints")
        dtu = self.dtu(tile)
        if not 0 <= index < EP_PER_TILE:
            raise EndpointIndexError(f"endpoint index {index} out of range")
        old = dtu.endpoints[index]
        dtu.endpoints[index] = descriptor
        if isinstance(old, SendEndpoint):
            for _, _, fut in old.pending:
                fut.set_error(self.engine.now, AccessDenied("endpoint reconfigured"))
            old.pending.clear()
        if descriptor is None:
            label = "deconfigure"
        else:
            label = "reconfigure" if old is not None else "configure"
        self.engine.record(tile, label, source=self.config.kernel_tile.id)
        return descriptor

    def next_id(self) -> int:
        return next(self._ids)

    # link cost pieces used by every transmission
    def wire(self, src: str, dst: str) -> int:
        base = one_way_latency(self.config, make_hop(self.config, src, dst))
        ppm = self.config.jitter_ppm
        if not ppm:
            return base
        jitter = int(base * ppm * self.engine.rng.uniform(-1.0, 1.0) / 1_000_000)
        return max(0, base + jitter)

    def bridge(self, src: str, dst: str) -> int:
        return bridge_overhead(self.config, make_hop(self.config, src, dst))

    def bytes_ns(self, src: str, dst: str, nbytes: int) -> int:
        return byte_cost(nbytes, per_byte_ns(self.config, make_hop(self.config, src, dst)))

    def handling(self, tile: str) -> int:
        return handling_ns(self.config, self.config.tile(tile))


class DTU:
    def __init__(self, network: Network, tile: str):
        self.net = network
        self.tile = tile
        self.endpoints: list[Optional[Endpoint]] = [None] * EP_PER_TILE

    @property
    def engine(self) -> Engine:
        return self.net.engine

    def _ep(self, index: int, kind: type):
        if not 0 <= index < EP_PER_TILE:
            raise EndpointIndexError(f"endpoint index {index} out of range")
        ep = self.endpoints[index]
        if not isinstance(ep, kind):
            raise AccessDenied(f"{self.tile}: endpoint {index} is not a configured {kind.__name__}")
        return ep

    def free_endpoints(self) -> list[int]:
        return [i for i, ep in enumerate(self.endpoints) if ep is None]

    # -- messaging -------------------------------------------------------

    def set_receive_handler(self, index: int, handler) -> None:
        self._ep(index, ReceiveEndpoint).handler = handler

    def set_reply_handler(self, index: int, handler) -> None:
        self._ep(index, SendEndpoint).on_reply = handler

    def send(self, index: int, payload_bytes: int, kind: str = "generic") -> Future:
        """Send via send endpoint ``index``; blocks (queues) while out of credits."""
        ep = self._ep(index, SendEndpoint)
        if payload_bytes > ep.slot_bytes:
            raise MessageTooLarge(f"{payload_bytes} B exceeds slot size {ep.slot_bytes} B")
        fut = Future()
        if ep.credits > 0 and not ep.pending:
            self._transmit(ep, payload_bytes, kind, fut)
        else:
            ep.pending.append((payload_bytes, kind, fut))
            self.engine.record(self.tile, "send-blocked")
        return fut

    def _transmit(self, ep: SendEndpoint, payload_bytes: int, kind: str, fut: Future) -> None:
        net = self.net
        ep.credits -= 1
        dst_tile, dst_index = ep.target
        msg = Message(net.next_id(), self.tile, payload_bytes, kind, origin=ep)
        net.in_flight[msg.id] = msg
        delay = (net.handling(self.tile) + net.wire(self.tile, dst_tile)
                 + net.bridge(self.tile, dst_tile) + net.bytes_ns(self.tile, dst_tile, payload_bytes))
        self.engine.record(self.tile, "send")
        target_ep = net.dtu(dst_tile).endpoints[dst_index]

        def deliver():
            net.in_flight.pop(msg.id, None)
            net.dtu(dst_tile)._deliver(dst_index, target_ep, msg, fut)

        self.engine.schedule(delay, deliver, target=dst_tile, label="recv", source=self.tile)

    def _deliver(self, index: int, expected: Optional[Endpoint], msg: Message, fut: Future) -> None:
        ep = self.endpoints[index]
        if ep is None or ep is not expected or not isinstance(ep, ReceiveEndpoint):
            self.engine.record(self.tile, "drop")
            fut.set_error(self.engine.now, AccessDenied("receive endpoint gone"))
            return
        handle = ReplyHandle(self.tile, index, msg.id)
        msg.reply_to = handle
        ep.queue[msg.id] = msg
        fut.set_result(self.engine.now, handle)
        if ep.handler is not None:
            ep.handler(msg, handle)

    def reply(self, index: int, handle: ReplyHandle, payload_bytes: int = 0) -> Future:
        """Answer a queued message, freeing its slot and returning the credit."""
        ep = self._ep(index, ReceiveEndpoint)
        if handle.tile != self.tile or handle.ep != index or handle.msg_id not in ep.queue:
            raise InvalidHandle(f"no unreplied message for {handle}")
        if payload_bytes > ep.slot_bytes:
            raise MessageTooLarge(f"{payload_bytes} B exceeds slot size {ep.slot_bytes} B")
        original = ep.queue.pop(handle.msg_id)
        net = self.net
        origin = original.origin
        dst = original.src
        resp = Message(net.next_id(), self.tile, payload_bytes, "response", origin=origin)
        net.in_flight[resp.id] = resp
        delay = (net.handling(self.tile) + net.wire(self.tile, dst)
                 + net.bridge(self.tile, dst) + net.bytes_ns(self.tile, dst, payload_bytes))
        self.engine.record(self.tile, "reply")
        fut = Future()

        def arrive():
            net.in_flight.pop(resp.id, None)
            net.dtu(dst)._credit_return(origin, resp, fut)

        self.engine.schedule(delay, arrive, target=dst, label="recv", source=self.tile)
        return fut

    def _credit_return(self, ep: Optional[SendEndpoint], resp: Message, fut: Future) -> None:
        if ep is None or not any(e is ep for e in self.endpoints):
            self.engine.record(self.tile, "drop")
            fut.set_error(self.engine.now, AccessDenied("send endpoint gone"))
            return
        ep.credits += 1
        fut.set_result(self.engine.now, resp)
        if ep.on_reply is not None:
            ep.on_reply(resp)
        while ep.pending and ep.credits > 0:
            payload_bytes, kind, pfut = ep.pending.popleft()
            self._transmit(ep, payload_bytes, kind, pfut)

    # -- memory ----------------------------------------------------------

    def write_memory(self, index: int, offset: int, size: int) -> Future:
        return self._transfer(index, offset, size, "write", "wmem-done")

    def read_memory(self, index: int, offset: int, size: int) -> Future:
        return self._transfer(index, offset, size, "read", "rmem-done")

    def _transfer(self, index: int, offset: int, size: int, perm: str, done_label: str) -> Future:
        ep = self._ep(index, MemoryEndpoint)
        if perm not in ep.perms:
            raise AccessDenied(f"{self.tile}: endpoint {index} lacks {perm} permission")
        if size < 0 or offset < ep.base or offset + size > ep.base + ep.len:
            raise AccessDenied(f"{self.tile}: access [{offset}, {offset + size}) outside endpoint range")
        fut = Future()
        engine, net = self.engine, self.net
        dst = ep.target_tile
        pkt = net.config.packet_bytes
        sizes = [min(pkt, size - off) for off in range(0, size, pkt)]
        if not sizes:
            engine.record(self.tile, done_label)
            fut.set_result(engine.now, 0)
            return fut

        def alive() -> bool:
            return self.endpoints[index] is ep

        def abort(sent: int) -> None:
            engine.record(self.tile, "abort")
            fut.set_error(engine.now, AccessDenied(
                f"{self.tile}: memory endpoint {index} revoked after {sent} of {len(sizes)} packets"))

        if net.config.ack_mode == "serialized-rtt":
            def inject(i: int) -> None:
                if not alive():
                    return abort(i)
                nbytes = sizes[i]
                flight = net.wire(self.tile, dst) + net.bridge(self.tile, dst) + net.bytes_ns(self.tile, dst, nbytes)
                engine.schedule(flight, lambda: acked_later(i), target=dst, label="pkt", source=self.tile)

            def acked_later(i: int) -> None:
                back = net.wire(dst, self.tile) + net.bridge(dst, self.tile)
                engine.schedule(back, lambda: on_ack(i), target=self.tile, label="ack", source=dst)

            def on_ack(i: int) -> None:
                if i + 1 < len(sizes):
                    inject(i + 1)
                else:
                    engine.record(self.tile, done_label)
                    fut.set_result(engine.now, size)

            inject(0)
        else:
            gap = net.bytes_ns(self.tile, dst, pkt)
            arrived = [0]

            def inject(i: int) -> None:
                if not alive():
                    return abort(i)
                flight = net.wire(self.tile, dst) + net.bridge(self.tile, dst)
                engine.schedule(flight, on_arrival, target=dst, label="pkt", source=self.tile)
                if i + 1 < len(sizes):
                    engine.schedule(gap, lambda: inject(i + 1), target=self.tile)

            def on_arrival() -> None:
                arrived[0] += 1
                if arrived[0] == len(sizes) and not fut.done:
                    # receiver-side commit of the whole transfer
                    engine.schedule(net.bytes_ns(self.tile, dst, size), finish, target=self.tile)

            def finish() -> None:
                if not fut.done:
                    engine.record(self.tile, done_label)
                    fut.set_result(engine.now, size)

            inject(0)
        return fut


def credit_audit(network: Network) -> list[str]:
    """Check credits + in-flight + queued == slots for every live send endpoint."""
    outstanding: dict[int, int] = {}
    for msg in network.in_flight.values():
        if msg.origin is not None:
            outstanding[id(msg.origin)] = outstanding.get(id(msg.origin), 0) + 1
    for dtu in network.dtus.values():
        for ep in dtu.endpoints:
            if isinstance(ep, ReceiveEndpoint):
                for msg in ep.queue.values():
                    if msg.origin is not None:
                        outstanding[id(msg.origin)] = outstanding.get(id(msg.origin), 0) + 1
    problems = []
    for dtu in network.dtus.values():
        for i, ep in enumerate(dtu.endpoints):
            if not isinstance(ep, SendEndpoint):
                continue
            total = ep.credits + outstanding.get(id(ep), 0)
            if total != ep.slots or not 0 <= ep.credits <= ep.slots:
                problems.append(f"{dtu.tile}:{i} credits={ep.credits} outstanding="
                                f"{outstanding.get(id(ep), 0)} slots={ep.slots}")
    return problems
