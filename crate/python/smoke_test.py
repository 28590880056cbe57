"""Quick check of the dhs extension module.

Build and install first:

    pip install maturin
    maturin build --release -m crates/py/Cargo.toml -o dist
    pip install dist/dhs-*.whl
"""

import math
import tempfile
from pathlib import Path

import dhs


def main():
    net = dhs.Network.aroma()
    assert net.n_loads == 5
    assert net.reduced_edges() == [(0, 1), (0, 2), (1, 3), (2, 4), (2, 5), (3, 4), (3, 5)]
    assert sum(net.allocate(54)) == 54
    assert dhs.Network.parse(net.to_text()).to_text() == net.to_text()

    sim = dhs.Simulator(net, warmup_hours=2.0)
    demands = [3e5] * 5
    sim.reset(75.0, demands)
    outputs, p0 = sim.step(75.0, demands)
    assert len(outputs) == len(sim.output_names) == 17
    q0 = outputs[1]
    assert math.isclose(q0, sum(outputs[4::3]), rel_tol=1e-12)
    assert p0 > 0.0

    ds = sim.generate_dataset(800, seed=3)
    assert len(ds) == 800
    assert len(ds.half_training()) < len(ds)

    y = [[0.0], [2.0]]
    assert dhs.fit_index(y, [[1.0], [1.0]]) == 0.0
    assert dhs.r2_per_output(y, y, 0) == 100.0
    try:
        dhs.fit_index([[1.0], [1.0]], [[1.0], [1.0]])
    except dhs.DhsError:
        pass
    else:
        raise AssertionError("constant signal must raise")

    model = dhs.Model.build("pi-gru", net, 30, seed=1)
    assert model.arch == "pi-gru" and model.n_states == 30
    model.train(ds, epochs=2, batches_per_epoch=2, seed=1)
    report = model.evaluate(ds, "test", washout=20)
    assert math.isfinite(report.fit)
    pred = model.predict(ds.inputs("test")[:10])
    assert len(pred) == 10 and len(pred[0]) == 17

    with tempfile.TemporaryDirectory() as d:
        path = str(Path(d) / "pi.json")
        model.save(path)
        again = dhs.Model.load(path)
        assert again.predict(ds.inputs("test")[:10]) == pred

    rb = dhs.closed_loop(sim, "rule-based", steps=6)
    assert rb.t0s == [75.0] * 6 and rb.t_avg is None
    mpc = dhs.closed_loop(sim, "nmpc", model=model, steps=3, horizon=12, block=3)
    assert len(mpc.t0s) == 3 and mpc.t_avg is not None
    assert all(65.0 <= t <= 85.0 for t in mpc.t0s)

    print(f"ok: {report}, rule-based cost {rb.cost:.2f}, nmpc cost {mpc.cost:.2f}")


if __name__ == "__main__":
    main()
