import pytest

from evonas.arch import canonical_text, identifier
from evonas.arch.spaces import FixedBinarySpace
from evonas.backends import SurrogateBackend
from evonas.bus import InProcessBus, Listener, kill_all
from evonas.errors import ConfigError
from evonas.jobs import JobSpec
from evonas.simfarm import SimulatedFarm, parse_fault_script, simulate_farm
from evonas.slots import SlotStatus

import random


def make_jobs(n, seed=0):
    space = FixedBinarySpace(stage_sizes=(4,), stage_channels=(8,))
    rng = random.Random(seed)
    jobs = []
    seen = set()
    while len(jobs) < n:
        g = space.sample(rng)
        ident = identifier(g)
        if ident in seen:
            continue
        seen.add(ident)
        jobs.append(
            JobSpec(
                name=f"job{len(jobs):03d}",
                identifier=ident,
                payload=canonical_text(g),
                backend="surrogate",
                settings={"dataset": "cifar10", "stage_channels": "8"},
                seed=len(jobs),
                epochs=2,
            )
        )
    return jobs


def make_farm(tmp_path, workers, **kwargs):
    bus = InProcessBus()
    listener = Listener(bus, tmp_path, cache=None)
    farm = SimulatedFarm(workers, SurrogateBackend(), bus, listener, **kwargs)
    return farm, bus, listener


def test_serial_slot_runs_jobs_back_to_back(tmp_path):
    farm, _, _ = make_farm(tmp_path, {"w": 1}, duration=5.0)
    farm.run_jobs(make_jobs(3))
    finishes = [e.time for e in farm.trace if e.kind == "finish"]
    assert finishes == [5.0, 10.0, 15.0]


def test_ten_jobs_four_slots_makespan_three(tmp_path):
    farm, _, _ = make_farm(tmp_path, {"w": 4}, duration=1.0)
    farm.run_jobs(make_jobs(10))
    assert farm.last_makespan == pytest.approx(3.0)


def test_eight_jobs_four_slots_makespan_two(tmp_path):
    farm, _, _ = make_farm(tmp_path, {"w": 4}, duration=1.0)
    farm.run_jobs(make_jobs(8))
    assert farm.last_makespan == pytest.approx(2.0)


def test_makespan_with_dispatch_overhead_within_five_percent(tmp_path):
    farm, _, _ = make_farm(tmp_path, {"w": 4}, duration=1.0, dispatch_overhead=0.01)
    farm.run_jobs(make_jobs(10))
    assert farm.last_makespan <= 3.0 * 1.05


def test_results_and_stats(tmp_path):
    farm, bus, _ = make_farm(tmp_path, {"w": 2}, duration=1.0)
    results = farm.run_jobs(make_jobs(5))
    assert len(results) == 5
    assert all(r.ok and 0 <= r.value <= 100 for r in results.values())
    assert farm.stats.jobs == 5
    assert farm.stats.busy_seconds == pytest.approx(5.0)
    assert bus.pending() == 0
    assert bus.live_processes() == []


def test_same_seed_identical_event_traces(tmp_path):
    farm_a, _, _ = make_farm(tmp_path / "a", {"w": 3}, duration=2.0, seed=5)
    farm_b, _, _ = make_farm(tmp_path / "b", {"w": 3}, duration=2.0, seed=5)
    farm_a.run_jobs(make_jobs(7))
    farm_b.run_jobs(make_jobs(7))
    assert farm_a.trace == farm_b.trace


def test_work_conservation_no_idle_slot_with_queued_jobs(tmp_path):
    farm, _, _ = make_farm(tmp_path, {"w": 3}, duration=1.0)
    farm.run_jobs(make_jobs(9))
    # replay the trace between distinct virtual instants: whenever jobs are
    # still queued, every slot must be busy
    from itertools import groupby

    busy = 0
    outstanding = 9
    for _, events in groupby(farm.trace, key=lambda e: e.time):
        for event in events:
            if event.kind == "start":
                busy += 1
            elif event.kind == "finish":
                busy -= 1
                outstanding -= 1
        queued = outstanding - busy
        if queued > 0:
            assert busy == 3  # a queued job never waits beside an idle slot
    assert outstanding == 0


def test_crashed_worker_requeues_job_on_survivor(tmp_path):
    farm, bus, _ = make_farm(
        tmp_path,
        {"w1": 1, "w2": 1},
        duration=10.0,
        faults=[{"kind": "crash", "node": "w1", "at": 7.0}],
    )
    results = farm.run_jobs(make_jobs(2))
    assert all(r.ok for r in results.values())
    requeues = [e for e in farm.trace if e.kind == "requeue"]
    assert len(requeues) == 1
    crashed_job = requeues[0].job
    # the requeued attempt must finish on the surviving worker
    last_start = [e for e in farm.trace if e.kind == "start" and e.job == crashed_job][-1]
    assert last_start.node == "w2"
    statuses = {s.node: s.status for s in farm.store.snapshot()}
    assert statuses["w1"] is SlotStatus.LOST
    assert bus.live_processes() == []


def test_job_requeued_exactly_once_per_retry_budget(tmp_path):
    farm, _, _ = make_farm(
        tmp_path,
        {"w1": 1},
        duration=10.0,
        retry_budget=1,
        faults=[{"kind": "crash", "node": "w1", "at": 3.0}],
    )
    results = farm.run_jobs(make_jobs(1))
    job = make_jobs(1)[0]
    requeues = [e for e in farm.trace if e.kind == "requeue"]
    fails = [e for e in farm.trace if e.kind == "fail"]
    assert len(requeues) == 1  # one requeue allowed...
    assert len(fails) == 1  # ...then no slots remain, so the job fails
    assert not results[job.name].ok
    assert results[job.name].value == 0.0


def test_failed_job_resolves_with_zero_fitness_record(tmp_path):
    farm, bus, listener = make_farm(
        tmp_path, {"w1": 1}, duration=4.0, retry_budget=0,
        faults=[{"kind": "crash", "node": "w1", "at": 2.0}],
    )
    results = farm.run_jobs(make_jobs(1))
    (result,) = results.values()
    assert not result.ok and result.value == 0.0
    results_file = (tmp_path / "results.txt").read_text()
    assert results_file == "job000=0.00\n"
    run_log = (tmp_path / "run.log").read_text()
    assert "evaluation failed" in run_log


def test_kill_all_leaves_no_orphan_processes(tmp_path):
    farm, bus, _ = make_farm(tmp_path, {"w": 2}, duration=50.0)
    jobs = make_jobs(4)
    for job in jobs:
        farm.submit(job)
    assert len(bus.live_processes()) == 2  # two placed, two queued
    count = kill_all(bus, farm.terminate)
    farm.cancel_queued()
    assert count == 2
    assert bus.live_processes() == []
    assert all(s.status is SlotStatus.IDLE for s in farm.store.snapshot())


def test_kill_all_during_race_over_many_interleavings(tmp_path):
    # interrupt after each event step in turn; no orphan may survive any cut
    for cut in range(8):
        farm, bus, _ = make_farm(tmp_path / str(cut), {"w": 2}, duration=3.0)
        for job in make_jobs(6, seed=cut):
            farm.submit(job)
        for _ in range(cut):
            if not farm.step():
                break
        kill_all(bus, farm.terminate)
        farm.cancel_queued()
        assert bus.live_processes() == []
        busy = [s for s in farm.store.snapshot() if s.status is SlotStatus.BUSY]
        assert busy == []


def test_fault_script_validation():
    with pytest.raises(ConfigError):
        parse_fault_script([{"kind": "meteor", "node": "w", "at": 1.0}])
    with pytest.raises(ConfigError):
        parse_fault_script([{"kind": "crash", "node": "w"}])
    with pytest.raises(ConfigError):
        parse_fault_script([{"kind": "crash", "node": "w", "at": -3}])
    assert parse_fault_script([{"kind": "crash", "node": "w", "at": 3}])[0].at == 3.0


def test_farm_requires_workers(tmp_path):
    bus = InProcessBus()
    listener = Listener(bus, tmp_path, cache=None)
    with pytest.raises(ConfigError):
        simulate_farm({}, SurrogateBackend(), bus, listener)


def test_gpu_days_accounting_matches_durations(tmp_path):
    farm, _, _ = make_farm(tmp_path, {"w": 4}, duration=3600.0)
    farm.run_jobs(make_jobs(8))
    # 8 jobs x 1 slot-hour each = 8 slot-hours
    assert farm.stats.busy_seconds == pytest.approx(8 * 3600.0)
    total = sum(
        float(line.split()[2]) for line in (tmp_path / "durations.txt").read_text().splitlines()
    )
    assert total == pytest.approx(8 * 3600.0)
