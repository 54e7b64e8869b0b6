"""Smoke test for the trajrecon Python extension.

Build and install first:
    pip install --no-build-isolation -e crates/py
"""

import math
import os
import tempfile

import trajrecon


def line(fid, t0, t1, x0, v, y):
    n = round((t1 - t0) / 0.04) + 1
    t = [t0 + 0.04 * k for k in range(n)]
    return trajrecon.Fragment(fid, t, [x0 + v * (s - t0) for s in t], [y] * n)


def main():
    frags = [
        line("f1", 0.0, 2.0, 0.0, 60.0, 6.0),
        line("f2", 0.4, 2.4, 20.0, 50.0, 18.0),
        line("f3", 3.0, 5.0, 180.0, 60.0, 6.0),
        line("f4", 3.4, 5.4, 170.0, 50.0, 18.0),
    ]
    params = trajrecon.CostParams(p_enter=0.2, p_exit=0.2, beta=2.0)

    chains, excluded, cost = trajrecon.associate(frags, params, batch=True)
    assert sorted(chains) == [["f1", "f3"], ["f2", "f4"]], chains
    assert excluded == [] and cost < 0
    online, _, online_cost = trajrecon.associate(frags, params)
    assert sorted(online) == sorted(chains) and math.isclose(online_cost, cost, abs_tol=1e-9)

    split, _, _ = trajrecon.associate_pipeline(frags, params, partitions=[0.0, 150.0, 400.0])
    assert sorted(split) == sorted(chains)

    by_id = {f.id: f for f in frags}
    tr = trajrecon.rectify([by_id[i] for i in chains[0]], id="t0")
    assert len(tr.x) == len(tr.t) and len(tr.vx) == len(tr.t) - 1 and tr.solved
    assert max(abs(a) for a in tr.ax) < 1.0

    out = trajrecon.run(frags, params)
    assert [t.fragment_ids for t in out] == [["f1", "f3"], ["f2", "f4"]]

    gt, raw = trajrecon.replica(seed=2, duration=30.0)
    assert len(raw) > len(gt) > 0
    report = trajrecon.evaluate(gt, gt)
    assert report["precision"] == 1.0 and report["recall"] == 1.0
    raw_report = trajrecon.evaluate(gt, raw)
    assert raw_report["fgmt_per_gt"] > 0

    with tempfile.TemporaryDirectory() as d:
        p = os.path.join(d, "frags.jsonl")
        trajrecon.write_fragments(p, frags)
        assert [f.id for f in trajrecon.read_fragments(p)] == [f.id for f in frags]
        q = os.path.join(d, "traj.jsonl")
        trajrecon.write_trajectories(q, out)
        assert [t.id for t in trajrecon.read_trajectories(q)] == [t.id for t in out]

    try:
        trajrecon.Fragment("bad", [1.0, 0.5], [0.0, 1.0], [0.0, 0.0])
    except ValueError:
        pass
    else:
        raise AssertionError("non-increasing timestamps accepted")

    print(f"ok: {len(chains)} chains, cost {cost:.3f}; replica {len(gt)} vehicles, {len(raw)} fragments")


if __name__ == "__main__":
    main()
