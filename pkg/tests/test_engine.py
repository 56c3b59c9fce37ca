import pytest

from fabricflow.engine import Engine, Future, LivelockError, SimulationError


def test_empty_queue_returns_zero():
    assert Engine().run_until_idle() == 0


def test_single_event_time():
    eng = Engine()
    eng.schedule(1500, target="a", label="x")
    assert eng.run_until_idle() == 1500


def test_delay_is_relative_to_now():
    eng = Engine()
    fired = []
    eng.schedule(1000, lambda: eng.schedule(500, lambda: fired.append(eng.now)))
    eng.run_until_idle()
    assert fired == [1500]


def test_equal_times_fire_in_insertion_order():
    eng = Engine()
    order = []
    eng.schedule(10, lambda: order.append("a"))
    eng.schedule(10, lambda: order.append("b"))
    eng.schedule(5, lambda: eng.schedule(5, lambda: order.append("c")))
    eng.run_until_idle()
    assert order == ["a", "b", "c"]


def test_zero_delay_runs_after_queued_same_time_events():
    eng = Engine()
    order = []

    def first():
        order.append(1)
        eng.schedule(0, lambda: order.append(3))

    eng.schedule(0, first)
    eng.schedule(0, lambda: order.append(2))
    eng.run_until_idle()
    assert order == [1, 2, 3]


def test_negative_delay_rejected():
    with pytest.raises(ValueError):
        Engine().schedule(-1)


def test_cancel_and_event_accounting():
    eng = Engine()
    hits = []
    ev = eng.schedule(10, lambda: hits.append(1))
    eng.schedule(20, lambda: hits.append(2))
    eng.cancel(ev)
    eng.run_until_idle()
    assert hits == [2]
    assert eng.scheduled == eng.processed + eng.cancelled


def test_event_ceiling_raises():
    eng = Engine(max_events=100)

    def loop():
        eng.schedule(1, loop)

    eng.schedule(0, loop)
    with pytest.raises(LivelockError):
        eng.run_until_idle()


def test_trace_export_format():
    eng = Engine()
    eng.schedule(7, target="t1", label="send")
    eng.run_until_idle()
    eng.record("t2", "note")
    assert eng.trace.export() == "7 t1 send\n7 t2 note\n"


def test_future_lifecycle():
    fut = Future()
    seen = []
    fut.add_done_callback(lambda f: seen.append(f.time))
    with pytest.raises(SimulationError):
        fut.result()
    fut.set_result(42, "v")
    assert fut.result() == "v" and seen == [42]
    with pytest.raises(SimulationError):
        fut.set_result(43)
