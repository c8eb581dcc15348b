"""Smoke test for the scgmm_py extension module.

Build first, e.g. `maturin develop -m crates/py/Cargo.toml --features extension-module`,
or copy target/<profile>/libscgmm_py.so to scgmm_py.so somewhere on PYTHONPATH.
"""

import json
import math

import scgmm_py as sc


def main() -> None:
    phi = lambda m: sc.Gaussian([m], [[1.0]])  # noqa: E731
    g1 = sc.MixingDistribution([0.4, 0.6], [phi(-1.0), phi(1.0)])
    g2 = sc.MixingDistribution([0.6, 0.4], [phi(-1.0), phi(1.0)])
    target = sc.MixingDistribution([0.5, 0.5], [phi(-1.0), phi(1.0)])

    # Example 2: the reduction of the pooled locals is their common average.
    out = sc.aggregate([g1, g2], [0.5, 0.5], method="gmr")
    assert sc.w1(out, target) <= 1e-8, out
    assert out.order == 2 and out.dim == 1
    pooled = sc.aggregate([g1, g2], [0.5, 0.5], method="pool")
    assert pooled.weights == [0.2, 0.3, 0.3, 0.2]
    assert sc.w1(sc.reduce(pooled, 2), target) <= 1e-8

    # KL and density basics.
    assert abs(phi(0.0).kl(phi(1.0)) - 0.5) < 1e-15
    assert abs(phi(0.0).log_density([0.0]) + 0.5 * math.log(2 * math.pi)) < 1e-15

    # Generate, sample, fit, score.
    truth = sc.generate(2, 2, 0.05, seed=3, mc_samples=20_000)
    rows, labels = truth.sample(2000, seed=4)
    est = sc.fit(rows, 2, seed=5, n_starts=3)
    assert sc.w1(est, truth) < 0.5
    assert sc.ari(labels, labels) == 1.0
    assert sc.ari([0, 0, 1, 1], [0, 1, 0, 1]) == -0.5

    shards = sc.split(10, 3, seed=1)
    assert sorted(i for s in shards for i in s) == list(range(10))

    # JSON round trip is exact.
    back = sc.MixingDistribution.from_json(est.to_json())
    assert back.weights == est.weights
    assert json.loads(est.to_json())["format"] == "mixture-v1"

    try:
        sc.MixingDistribution([0.5, 0.6], [phi(0.0), phi(1.0)])
    except ValueError as e:
        assert "weights do not sum to 1" in str(e)
    else:
        raise AssertionError("invalid weights accepted")

    print("scgmm_py smoke test passed")


if __name__ == "__main__":
    main()
