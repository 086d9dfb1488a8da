"""Smoke test for the Python bindings.

Build and install first:
    pip install maturin
    maturin build --release -m crates/py/Cargo.toml
    pip install target/wheels/overwatch-*.whl
"""

import math
import os
import tempfile

import overwatch as ow


def main():
    assert ow.encode_scalar(3.2, 4) == [0.0, 0.0, 0.0, 0.8, 0.2]
    assert ow.encode_scalar(0.7, 4) == [0.3, 0.7, 0.0, 0.0, 0.0]

    small = ow.Scenario("m1-small")
    assert "m1" in ow.Scenario.presets()
    state = ow.State.start(small)
    res = ow.step(small, state, [small.v_max] * small.n_robots, [0] * small.n_robots)
    assert res.state.t == 1 and math.isfinite(res.raw_reward)

    oracle = ow.Oracle(small)
    episode = oracle.rollout()
    assert episode.all_arrived
    assert abs(episode.raw_return - oracle.optimal_return) < 1e-9
    greedy = ow.run_baseline(small, "greedy")
    assert greedy.raw_return <= oracle.optimal_return + 1e-9

    m1 = ow.Scenario("m1")
    heuristic = ow.run_baseline(m1, "overwatch", [35.0])
    assert heuristic.behavior()["overwatch_detected"]

    with tempfile.TemporaryDirectory() as tmp:
        log = os.path.join(tmp, "trajectory.csv")
        episode.write_log(log)
        assert ow.validate_file(log) == "Trajectory"
        for path in episode.export_plots(tmp):
            ow.validate_file(str(path))

        policy = ow.Policy.train(small, "h-ppo", seed=1, total_steps=4096, hidden=[16])
        ckpt = os.path.join(tmp, "policy.bin")
        policy.save(ckpt)
        again = ow.Policy.load(ckpt, small)
        placements = [[z] for z in small.supports[0]]
        assert policy.evaluate(placements) == again.evaluate(placements)
        speeds, guards = again.act(ow.State.start(small))
        assert len(speeds) == small.n_robots and len(guards) == small.n_robots

    print("python smoke test passed")


if __name__ == "__main__":
    main()
