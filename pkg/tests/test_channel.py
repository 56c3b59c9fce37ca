import pytest

from fabricflow.bench import build
from fabricflow.channel import ChannelBusy, DataChannel, chain
from fabricflow.dtu import AccessDenied, Network
from fabricflow.kernel import Kernel
from fabricflow.pipeline import PipelineSpec


def make_channel(cfg, src="app", dst="d1", compute_ns=0):
    kernel = Kernel(Network(cfg))
    a = kernel.create_activity(src, "T")
    b = kernel.create_activity(dst, "T")
    handle = kernel.establish_channel(a, b)
    return kernel, DataChannel(kernel.net, handle, compute_ns)


def test_cross_transfer_phases(wire):
    kernel, ch = make_channel(wire)
    rec = ch.transfer(4096)
    kernel.net.engine.run_until_idle()
    assert rec.push_end - rec.push_start == 1000
    assert rec.notify_arrival == rec.push_end + 500
    assert rec.response_arrival == rec.notify_arrival + 500
    assert ch.sender.state == "Done"
    assert ch.sender.history == ["Pushing", "Notifying", "AwaitResponse", "Done"]
    assert ch.receiver.history == ["DataReady", "Processing", "Responded", "Waiting"]


def test_zero_size_is_notify_only(wire):
    kernel, ch = make_channel(wire)
    rec = ch.transfer(0)
    kernel.net.engine.run_until_idle()
    assert rec.notify_arrival == rec.push_start + 500
    assert len(kernel.net.engine.trace.labels("pkt")) == 0


def test_two_packet_push(wire):
    kernel, ch = make_channel(wire)
    rec = ch.transfer(8192)
    kernel.net.engine.run_until_idle()
    assert rec.push_end - rec.push_start == 2000


def test_compute_delay_and_trace_labels(wire):
    kernel, ch = make_channel(wire, compute_ns=300)
    rec = ch.transfer(4096)
    kernel.net.engine.run_until_idle()
    assert rec.process_end == rec.notify_handled + 300
    labels = [e.label for e in kernel.net.engine.trace]
    for lbl in ("push-start", "push-done", "notify", "proc-done", "resp"):
        assert lbl in labels
    assert labels.index("push-start") < labels.index("push-done") < labels.index("notify") \
        < labels.index("proc-done") < labels.index("resp")


def test_busy_channel_rejects_second_transfer(wire):
    kernel, ch = make_channel(wire)
    ch.transfer(64)
    with pytest.raises(ChannelBusy):
        ch.transfer(64)
    kernel.net.engine.run_until_idle()
    ch.transfer(64)  # Done -> Idle again


def test_revoked_channel_surfaces_error(wire):
    kernel, ch = make_channel(wire)
    kernel.revoke(ch.handle.mem_cap)
    rec = ch.transfer(4096)
    assert isinstance(rec.error, AccessDenied)
    kernel2, ch2 = make_channel(wire)
    kernel2.revoke(ch2.handle.send_cap)
    rec2 = ch2.transfer(4096)
    kernel2.net.engine.run_until_idle()
    assert isinstance(rec2.error, AccessDenied)
    assert rec2.push_end is not None and rec2.notify_arrival is None


def _chain_latency(cfg, path, size):
    kernel = Kernel(Network(cfg))
    acts = {t: kernel.create_activity(t, "T") for t in {x for hop in path for x in hop}}
    chans = [DataChannel(kernel.net, kernel.establish_channel(acts[a], acts[b])) for a, b in path]
    fut = chain(chans, size, kernel.net)
    kernel.net.engine.run_until_idle()
    return fut.result()


def test_chain_app_d1_d2_app(wire):
    # cross (1000 + 500) + local (500 + 250) + cross (1000 + 500)
    assert _chain_latency(wire, [("app", "d1"), ("d1", "d2"), ("d2", "app")], 4096) == 3750


def test_single_local_chain(wire):
    assert _chain_latency(wire, [("d1", "d2")], 4096) == 750


def test_empty_chain(wire):
    net = Network(wire)
    assert chain([], 4096, net).result() == 0


def test_chain_error_propagates(wire):
    sc = build("distributed", PipelineSpec("app", ("d1", "d2")), wire)
    sc.kernel.revoke(sc.channels[1].handle.mem_cap)
    fut = chain(sc.channels, 4096, sc.network)
    sc.engine.run_until_idle()
    with pytest.raises(AccessDenied):
        fut.result()
