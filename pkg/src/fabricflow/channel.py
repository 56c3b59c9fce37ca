"""The data-channel protocol on top of the DTU.

The sender pushes the payload into the receiver's buffer through its memory
endpoint, then sends a notify message.  The receiver handles the notify, runs
its (simulated) compute, hands the data to a continuation and replies.  The
reply only returns the credit; nothing downstream waits for it.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

from .dtu import AccessDenied, Network
from .engine import Future
from .kernel import DataChannelHandle

SENDER_STATES = ("Idle", "Pushing", "Notifying", "AwaitResponse", "Done")
RECEIVER_STATES = ("Waiting", "DataReady", "Processing", "Responded")


class ChannelBusy(RuntimeError):
    pass


@dataclass
class SenderState:
    state: str = "Idle"
    bytes_pushed: int = 0
    t_start: Optional[int] = None
    t_push_done: Optional[int] = None
    t_response: Optional[int] = None
    history: list = field(default_factory=list)

    def advance(self, new: str) -> None:
        if new != "Idle" and SENDER_STATES.index(new) <= SENDER_STATES.index(self.state):
            raise RuntimeError(f"sender cannot go from {self.state} to {new}")
        self.state = new
        self.history.append(new)


@dataclass
class ReceiverState:
    state: str = "Waiting"
    compute_delay_ns: int = 0
    responses: int = 0
    history: list = field(default_factory=list)

    def advance(self, new: str) -> None:
        if new != "Waiting" and RECEIVER_STATES.index(new) <= RECEIVER_STATES.index(self.state):
            raise RuntimeError(f"receiver cannot go from {self.state} to {new}")
        self.state = new
        self.history.append(new)


@dataclass
class TransferRecord:
    channel: DataChannelHandle
    size: int
    push_start: Optional[int] = None
    push_end: Optional[int] = None
    notify_arrival: Optional[int] = None
    notify_handled: Optional[int] = None
    process_end: Optional[int] = None
    response_arrival: Optional[int] = None
    error: Optional[BaseException] = None

    @property
    def leg_ns(self) -> Optional[int]:
        """Push start until the notify has been handled at the receiver."""
        if self.notify_handled is None or self.push_start is None:
            return None
        return self.notify_handled - self.push_start

    def phase_times(self) -> list[int]:
        times = [self.push_start, self.push_end, self.notify_arrival, self.notify_handled,
                 self.process_end, self.response_arrival]
        return [t for t in times if t is not None]


class DataChannel:
    def __init__(self, network: Network, handle: DataChannelHandle, compute_ns: int = 0):
        self.net = network
        self.handle = handle
        self.sender = SenderState()
        self.receiver = ReceiverState(compute_delay_ns=compute_ns)
        self.records: list[TransferRecord] = []
        self._inbound: deque = deque()
        network.dtu(handle.receiver.tile).set_receive_handler(handle.recv_ep, self._on_notify)

    @property
    def src(self) -> str:
        return self.handle.sender.tile

    @property
    def dst(self) -> str:
        return self.handle.receiver.tile

    def transfer(self, size: int, on_data: Optional[Callable[[TransferRecord], None]] = None,
                 on_error: Optional[Callable[[TransferRecord], None]] = None) -> TransferRecord:
        if self.sender.state not in ("Idle", "Done"):
            raise ChannelBusy(f"channel {self.src}->{self.dst} is {self.sender.state}")
        engine = self.net.engine
        rec = TransferRecord(self.handle, size)
        self.records.append(rec)
        if self.sender.state == "Done":
            self.sender.advance("Idle")
        self.sender.bytes_pushed = 0
        self.sender.t_start = rec.push_start = engine.now
        self.sender.t_push_done = self.sender.t_response = None
        self.sender.advance("Pushing")
        engine.record(self.src, "push-start")
        dtu = self.net.dtu(self.src)

        def fail(exc: BaseException) -> None:
            rec.error = exc
            engine.record(self.src, "transfer-error")
            if self.sender.state != "Done":
                self.sender.advance("Done")
            if on_error is not None:
                on_error(rec)

        def pushed(f: Future) -> None:
            if f.error is not None:
                return fail(f.error)
            self.sender.bytes_pushed = size
            self.sender.t_push_done = rec.push_end = engine.now
            engine.record(self.src, "push-done")
            self.sender.advance("Notifying")
            self._inbound.append((rec, on_data))
            try:
                sent = dtu.send(self.handle.send_ep, self.net.config.control_msg_bytes, "notify")
            except AccessDenied as exc:
                self._inbound.pop()
                return fail(exc)
            sent.add_done_callback(notified)

        def notified(f: Future) -> None:
            if f.error is not None:
                return fail(f.error)
            if self.sender.state == "Notifying":
                self.sender.advance("AwaitResponse")

        try:
            wrote = dtu.write_memory(self.handle.mem_ep, 0, size)
        except AccessDenied as exc:
            fail(exc)
            return rec
        wrote.add_done_callback(pushed)
        return rec

    def _on_notify(self, msg, handle) -> None:
        engine = self.net.engine
        rec, on_data = self._inbound.popleft()
        rec.notify_arrival = engine.now
        engine.record(self.dst, "notify", source=self.src)
        self.receiver.advance("DataReady")
        dtu = self.net.dtu(self.dst)

        def handled() -> None:
            rec.notify_handled = engine.now
            self.receiver.advance("Processing")
            engine.schedule(self.receiver.compute_delay_ns, processed, target=self.dst)

        def processed() -> None:
            rec.process_end = engine.now
            engine.record(self.dst, "proc-done")
            if on_data is not None:
                on_data(rec)
            resp = dtu.reply(self.handle.recv_ep, handle, 0)
            self.receiver.responses += 1
            self.receiver.advance("Responded")
            self.receiver.advance("Waiting")
            resp.add_done_callback(responded)

        def responded(f: Future) -> None:
            if f.error is not None:
                return
            rec.response_arrival = engine.now
            self.sender.t_response = engine.now
            engine.record(self.src, "resp", source=self.dst)
            self.sender.advance("Done")

        engine.schedule(self.net.handling(self.dst), handled, target=self.dst)


def chain(channels: list[DataChannel], size: int, network: Network) -> Future:
    """Push ``size`` bytes through ``channels`` in order.

    The returned future resolves with the time from the first push start
    until the last channel's receiver has handled its notify.
    """
    engine = network.engine
    fut = Future()
    start = engine.now
    if not channels:
        fut.set_result(engine.now, 0)
        return fut

    def failed(rec: TransferRecord) -> None:
        if not fut.done:
            fut.set_error(engine.now, rec.error)

    def stage(k: int):
        def on_data(rec: TransferRecord) -> None:
            if k + 1 < len(channels):
                channels[k + 1].transfer(size, stage(k + 1), failed)
            else:
                fut.set_result(engine.now, engine.now - start)
        return on_data

    channels[0].transfer(size, stage(0), failed)
    return fut
