"""Smoke test for the koopcert extension module.

Build with `cargo build -p koopcert-py --features extension-module --release`,
copy `target/release/libkoopcert_py.so` to `python/koopcert.so`, then run
`python3 python/smoke_test.py`.
"""

import math
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import koopcert  # noqa: E402


def main():
    assert abs(koopcert.bessel_k(0.5, 1.0) - math.sqrt(math.pi / 2) * math.exp(-1.0)) < 1e-13

    shift, g = koopcert.GalerkinSystem.lebesgue_shift(100, 4)
    bounds = shift.bounds(g, 20)
    assert len(bounds) == 20
    exact = [0.0] * 3 + [1.0] * 17
    assert all(abs(b - e) < 1e-10 for b, e in zip(bounds, exact)), bounds

    x, y = koopcert.simulate("duffing", 400, seed=7)
    assert len(x) == 400 and len(x[0]) == 2
    sys_ = koopcert.GalerkinSystem.edmd(x, y, 5, -2.5, 2.5)
    assert sys_.dim == 36 and sys_.space == "L2"
    angles = sys_.principal_angles()
    assert angles == sorted(angles) and 0.0 <= angles[0] <= math.pi / 2

    c, init = sys_.fit_coordinate(0)
    strict = sys_.bounds(c, 10)
    full = sys_.bounds(c, 10, full_order=True)
    assert all(f >= s - 1e-12 for s, f in zip(strict, full))
    expected = sys_.svd(20).expected_bounds(sys_.svd(20).fit_coordinate(0)[0], 10, samples=50, seed=1)
    assert len(expected) == 10 and all(e >= 0.0 for e in expected)

    pad = sys_.pad(12)
    assert pad.dim == 12

    with tempfile.TemporaryDirectory() as d:
        sys_.save(d)
        back = koopcert.GalerkinSystem.load(d)
        assert back.k == sys_.k

    kx, ky = koopcert.simulate("duffing", 80, seed=3)
    ker = koopcert.GalerkinSystem.kedmd(kx, ky, nu=2.0)
    pred, pointwise = ker.kernel_forecast(kx[5], 1, 4)
    assert len(pred) == 5 and abs(pred[0] - kx[5][1]) < 1e-6
    assert pointwise[0] < 1e-5

    try:
        koopcert.simulate("pendulum", 3)
    except ValueError:
        pass
    else:
        raise AssertionError("unknown system accepted")

    print(f"koopcert {koopcert.__version__} smoke test passed")


if __name__ == "__main__":
    main()
