"""Smoke test for the labplan extension.

Build and copy the module first:
    cargo build --release -p labplan-py --features extension-module
    cp target/release/liblabplan_py.so crates/py/python/labplan.so
"""
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import labplan


def main():
    assert len(labplan.TASKS) == 7

    plan = labplan.plan("crystallize", prompt=0)
    assert len(plan) > 0 and plan.steps[-1].startswith("wait")
    assert labplan.audit(plan.render(), "crystallize") == (0, 0)
    again = labplan.Plan.parse(plan.render())
    assert again.steps == plan.steps

    world = labplan.World("pick_place", seed=3)
    volume = world.total_volume()
    seq = world.ground("pick up cuboid")
    outcomes = world.execute(seq)
    assert all(o["outcome"] == "Done" for o in outcomes), outcomes
    assert world.total_volume() == volume
    twin = labplan.World("pick_place", seed=3)
    twin.execute(seq)
    assert twin.trace_hash() == world.trace_hash()

    rec = labplan.trial("mix", prompt=1, scene=2)
    assert rec["success"], rec

    report = labplan.evaluate(["pour"], prompts=2, scenes=2)
    task = report["tasks"][0]
    assert task["trials"] == 4 and task["success_rate"] == 100.0

    beta, alpha_bar = labplan.noise_schedule(100)
    assert len(beta) == 100 and len(alpha_bar) == 101
    assert all(a > b for a, b in zip(alpha_bar, alpha_bar[1:]))

    lat = labplan.latency_report([("LLM", 3024.0, False), ("MP", 5714.0, False), ("VLM", 3441.0, False), ("RL", 15.0, True)])
    assert lat["online_total_ms"] == 15.0

    with tempfile.TemporaryDirectory() as d:
        policy = labplan.Policy.train(budget=64)
        path = os.path.join(d, "policy.ckpt")
        policy.save(path)
        assert 0.0 <= labplan.Policy.load(path).evaluate(10) <= 1.0

    print("labplan smoke test passed")


if __name__ == "__main__":
    main()
