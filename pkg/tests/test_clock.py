import threading

import pytest

from parafan.clock import VirtualClock


def test_sequential_sleep_advances():
    clock = VirtualClock()
    clock.sleep(1.5)
    clock.sleep(0.25)
    assert clock.now() == 1.75
    assert clock.sleeps == [1.5, 0.25]


def test_negative_sleep_rejected():
    with pytest.raises(ValueError):
        VirtualClock().sleep(-0.1)


def test_registered_workers_overlap():
    clock = VirtualClock()
    wakes = {}

    def worker(name, durations):
        try:
            for d in durations:
                clock.sleep(d)
            wakes[name] = clock.now()
        finally:
            clock.leave()

    clock.expect(3)
    threads = [
        threading.Thread(target=worker, args=("a", [1.0, 1.0])),
        threading.Thread(target=worker, args=("b", [3.0])),
        threading.Thread(target=worker, args=("c", [0.5, 0.5, 0.5])),
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join(timeout=5)
    assert wakes == {"a": 2.0, "b": 3.0, "c": 1.5}
    assert clock.now() == 3.0
