from core.iteration_state import IterationLog, IterationStatus


def test_log_lifecycle():
    log = IterationLog()
    log.register(0, [0])
    log.register(1, [1, 2])
    log.register(2, [3])

    log.mark(0, IterationStatus.INSERTED, points_after=10)
    log.mark(1, IterationStatus.CHECKPOINTED, checkpoint="iter_01", coverage=[0.5, 0.25])
    log.mark_failed(2, "backend exploded")

    # инициализация не считается завершённой итерацией
    assert log.completed() == 1
    counters = log.status_counters()
    assert counters[IterationStatus.FAILED] == 1
    assert counters[IterationStatus.PLANNED] == 0
    assert sum(counters.values()) == 3

    events = log.to_event_list()
    assert [e["index"] for e in events] == [0, 1, 2]
    assert events[1]["status"] == "checkpointed"
    assert events[1]["coverage"] == [0.5, 0.25]
    assert events[2]["error"] == "backend exploded"
