"""Smoke test for the Python bindings; run with pytest or as a script."""

import math
import tempfile
from pathlib import Path

import coldec


def test_delta_amplitudes_are_unitary():
    r, t = coldec.delta_amplitudes(1000.0, 250.0)
    assert abs(abs(r) ** 2 + abs(t) ** 2 - 1.0) < 1e-12
    assert abs(t - (1.0 + r)) < 1e-12


def test_barrier_and_gaussian_amplitudes():
    r, t = coldec.barrier_amplitudes(500.0, 1e-2, 250.0)
    assert abs(abs(r) ** 2 + abs(t) ** 2 - 1.0) < 1e-10
    r, t = coldec.gaussian_amplitudes(500.0, 1e-2, 250.0)
    assert abs(abs(r) ** 2 + abs(t) ** 2 - 1.0) < 1e-6


def test_collision_function_is_one_on_the_diagonal():
    value = coldec.collision_function(1000.0, 0.2, 0.02, 250.0, 0.03, 0.03)
    assert abs(value - 1.0) < 1e-8
    off = coldec.collision_function(1000.0, 0.2, 0.02, 250.0, 0.05, -0.05)
    assert abs(off) < 1.0


def test_bad_config_raises_value_error():
    try:
        coldec.resolve_config("[grid]\nnodes = 200\n")
    except ValueError as err:
        assert "grid.nodes" in str(err)
    else:
        raise AssertionError("even node count was accepted")


def test_defaults_and_oracle():
    text = coldec.resolve_config("")
    assert "nodes = 201" in text
    taus, errors, slope = coldec.oracle_convergence()
    assert len(taus) == len(errors) >= 3
    assert slope <= -0.2
    assert all(math.isfinite(e) for e in errors)


def test_run_kernel_command():
    with tempfile.TemporaryDirectory() as tmp:
        files = coldec.run("kernel", tmp, "[grid]\nnodes = 41\n[kernel]\noverlay_alphas = [500.0]\n")
        names = {Path(f).name for f in files}
        assert {"kernel.csv", "kernel_antidiag.csv", "manifest_kernel.toml"} <= names


if __name__ == "__main__":
    for name, fn in sorted(globals().items()):
        if name.startswith("test_") and callable(fn):
            fn()
            print(f"ok {name}")
