"""Quick check of the Python bindings.

Build and install first:

    pip install maturin
    maturin build --release -m crates/py/Cargo.toml -o dist
    pip install dist/ibuq-*.whl
"""

import math
import tempfile

import ibuq


def main():
    assert ibuq.discontinuous_fn(-0.25) == 0.5 * (math.sin(-0.5 * math.pi) ** 3 - 1)

    x, y = ibuq.sample_discontinuous(32, noise=0.1, seed=7)
    assert len(x) == len(y) == 32
    assert (x, y) == ibuq.sample_discontinuous(32, noise=0.1, seed=7)

    model = ibuq.IbuqRegressor.fit(x, y, seed=0, iterations=200, latent_dim=4, hidden=[16, 16])
    objective, iyz, ixz = model.final_terms
    assert all(math.isfinite(v) for v in (objective, iyz, ixz))
    assert abs(objective - (iyz - model.beta * ixz)) < 1e-9

    grid = [-1 + 2 * i / 100 for i in range(101)]
    pred = model.predict(grid, samples=16, seed=1)
    assert len(pred["mean"]) == 101 and len(pred["std"][0]) == 1
    assert all(s[0] >= 0 for s in pred["std"])
    assert all(0 <= g <= 1 for g in pred["gate"])

    with tempfile.TemporaryDirectory() as d:
        model.save(d)
        again = ibuq.IbuqRegressor.load(d).predict(grid, samples=16, seed=1)
        assert again == pred

    ens = ibuq.DeepEnsemble.fit(x, y, members=3, steps=100)
    mean, std = ens.predict(grid)
    assert ens.members == 3 and len(mean) == 101

    err = ibuq.rl2e([m[0] for m in mean], [ibuq.discontinuous_fn(g) for g in grid])
    assert math.isfinite(err)

    u = ibuq.grf_sample(0.5, m=20, seed=3)
    s = ibuq.solve_diffusion_reaction(u, nt=20)
    assert len(s) == 20 and len(s[0]) == 20 and all(v == 0 for v in (row[0] for row in s))

    scores = ibuq.lof_scores([[0, 0], [0, 1], [1, 0], [1, 1], [10, 10]], k=2)
    assert min(range(5), key=scores.__getitem__) == 4

    try:
        ibuq.IbuqRegressor.fit([[1.0, 2.0], [3.0]], y[:2])
    except ValueError:
        pass
    else:
        raise AssertionError("ragged input accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
