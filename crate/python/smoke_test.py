#!/usr/bin/env python3
"""Smoke test for the forage_py extension module.

Build the module first:

    cargo build -p forage-py --release

then run:

    python3 python/smoke_test.py
"""

import json
import math
import shutil
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def import_module():
    candidates = [
        REPO / "target" / "release" / "libforage_py.so",
        REPO / "target" / "debug" / "libforage_py.so",
    ]
    built = next((p for p in candidates if p.exists()), None)
    if built is None:
        sys.exit("libforage_py.so not found; run `cargo build -p forage-py --release` first")
    staging = Path(tempfile.mkdtemp(prefix="forage_py_"))
    shutil.copy(built, staging / "forage_py.so")
    sys.path.insert(0, str(staging))
    import forage_py

    return forage_py


def approx(a, b, tol=1e-9):
    assert abs(a - b) <= tol, f"{a} != {b} (tol {tol})"


def main():
    fw = import_module()

    # Reward function on the documented cases.
    approx(fw.reward(9, 9, 9, 9), 0.5)
    approx(fw.reward(5, 9, 9, 9), 0.4)
    approx(fw.reward(1, 1, 1, 1), -0.3)

    # Named streams: deterministic, label-separated.
    a = fw.RngStream(42, "worldgen")
    b = fw.RngStream(42, "worldgen")
    c = fw.RngStream(42, "policy")
    seq_a = [a.next_u64() for _ in range(16)]
    seq_b = [b.next_u64() for _ in range(16)]
    seq_c = [c.next_u64() for _ in range(16)]
    assert seq_a == seq_b
    assert seq_a != seq_c
    v = fw.RngStream(7, "u").next_uniform()
    assert 0.0 <= v < 1.0

    # Arena generation round-trips through JSON.
    arena = json.loads(fw.arena_json(7, 96))
    assert arena["map_size"] == 96
    assert arena["agent_start"] == {"x": 48, "y": 48}
    assert len(arena["cow_spawn_points"]) == 12

    # Environment episode under random actions, twice, identically.
    def rollout(steps):
        env = fw.ForageEnv(5, episode_seed=9, map_size=24, max_cows=12, n_spawn_points=3)
        stream = fw.RngStream(3, "actions")
        trace = []
        for _ in range(steps):
            if env.done():
                break
            action = stream.next_int_below(fw.ACTION_COUNT)
            r, done, info = env.step(action)
            assert 0 <= info["health"] <= 9
            assert 0 <= info["food"] <= 9
            assert info["cows"] <= 12
            trace.append((r, done, info["position"]))
        return trace

    t1 = rollout(300)
    t2 = rollout(300)
    assert t1 == t2
    assert len(t1) > 50

    # Agent forward pass drives the env.
    agent = fw.Agent(11, hidden_dim=16)
    assert agent.parameter_count() > 0
    env = fw.ForageEnv(5, episode_seed=9, map_size=24, max_cows=12, n_spawn_points=3)
    obs = env.observe()
    assert len(obs) == fw.ENCODED_LEN
    for _ in range(20):
        action, value, logp = agent.act(obs)
        assert 0 <= action < fw.ACTION_COUNT
        assert logp <= 0.0
        r, done, info = env.step(action)
        if done:
            break
        obs = env.observe()
    assert len(agent.hidden_state()) == 16

    # GAE single-step hand case: terminal step, A = r - V.
    adv, ret = fw.gae([1.0], [0.5], [True], 0.0, 0.99, 0.8)
    approx(adv[0], 0.5)
    approx(ret[0], 1.0)

    # Ridge fit recovers an exact linear map.
    h = [[float(i), float(i % 3)] for i in range(50)]
    y = [[2.0 * r[0] + 1.0, -r[1]] for r in h]
    a_fit, b_fit = fw.ridge_fit(h, y, 1e-8)
    approx(a_fit[0][0], 2.0, 1e-4)
    approx(a_fit[1][1], -1.0, 1e-4)
    approx(b_fit[0], 1.0, 1e-3)

    # VIF: duplicated column is infinite.
    x = [[float(i), float(i)] for i in range(30)]
    v = fw.vif(x)
    assert math.isinf(v[0]) and math.isinf(v[1])

    # Occupancy entropy of four equally used bins is ln 4.
    positions = [(0, 0), (4, 0), (0, 4), (4, 4)] * 25
    approx(fw.occupancy_entropy(positions, 4), math.log(4.0), 1e-12)

    # Circular variance: straight line 0, alternating east/west 1.
    line = [(i, 0) for i in range(20)]
    approx(fw.angular_variance(line), 0.0, 1e-12)
    zigzag = [(i % 2, 0) for i in range(41)]
    approx(fw.angular_variance(zigzag), 1.0, 1e-12)

    print("forage_py smoke test: OK")


if __name__ == "__main__":
    main()
