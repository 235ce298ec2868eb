"""Smoke test for the equibim Python extension.

Build and install first:  pip install --no-build-isolation -e crates/python
Run:                      python python/smoke_test.py
"""

import math
import pathlib
import tempfile

import equibim

FIXTURES = pathlib.Path(__file__).resolve().parent.parent / "crates" / "core" / "fixtures"


def close(a, b, tol=1e-9):
    return all(abs(x - y) <= tol for x, y in zip(a, b))


def check_geometry():
    assert equibim.reflect_point([0.2, 0.3, 0.1]) == [0.2, -0.3, 0.1]
    q = [math.cos(0.2), 0.0, 0.0, math.sin(0.2)]
    r = equibim.reflect_rotation(q)
    assert close(equibim.reflect_rotation(r), q)
    p, o = equibim.reflect_pose([0.1, 0.2, 0.3], q, frame=[0.0, 0.1, 0.0, 0.0, 0.0, 0.0])
    assert close(p, [0.1, -0.4, 0.3])
    img = [float(i) for i in range(6)]
    assert equibim.flip_image(3, 2, 1, img) == [2.0, 1.0, 0.0, 5.0, 4.0, 3.0]


def check_robot():
    robot = equibim.Robot.load(str(FIXTURES / "planar_pair.urdf"))
    partner, signs, residual = robot.discover_symmetry("left_tool", "right_tool")
    assert sorted(partner) == list(range(len(robot.joint_names)))
    assert all(s in (-1.0, 1.0) for s in signs)
    assert residual < 1e-6
    try:
        equibim.Robot.load(str(FIXTURES / "planar_pair_perturbed.urdf")).discover_symmetry("left_tool", "right_tool")
    except RuntimeError:
        pass
    else:
        raise AssertionError("perturbed fixture was accepted")


def check_simulator():
    sim = equibim.Simulator(image_size=16, n_points=32, history=1, horizon=2)
    s = sim.reset("pick_place", "left", seed=3)
    m = sim.mirror_state(s)
    assert close(m.object, [s.object[0], -s.object[1], s.object[2]])
    w, h, c, data = sim.render_image(s)
    _, _, _, mirrored = sim.render_image(m)
    assert close(equibim.flip_image(w, h, c, data), mirrored, 1e-6)
    for _ in range(5):
        s = sim.expert_step(s, "pick_place")
    assert s.step == 5
    assert sim.expert_success_rate("pick_place", episodes=5, seed=1) >= 0.8


def check_pipeline():
    with tempfile.TemporaryDirectory() as tmp:
        tmp = pathlib.Path(tmp)
        n = equibim.generate(str(tmp / "demos"), count=3, side="left", seed=2, image_size=12, history=1, horizon=2)
        assert n == 3
        ckpt = str(tmp / "policy.ckpt")
        metrics = equibim.train(str(tmp / "demos"), ckpt, mode="equibim", epochs=2, hidden=[16])
        assert len(metrics.strip().splitlines()) == 3
        rate = equibim.evaluate(ckpt, episodes=2, side="right", seed=5)
        assert 0.0 <= rate <= 1.0
        try:
            equibim.train(str(tmp / "demos"), ckpt, mode="baseline", lambda_sym=0.5)
        except ValueError:
            pass
        else:
            raise AssertionError("baseline with a nonzero symmetry weight was accepted")


if __name__ == "__main__":
    check_geometry()
    check_robot()
    check_simulator()
    check_pipeline()
    print("equibim python smoke test passed")
