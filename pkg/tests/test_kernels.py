"""The numba kernels and the numpy fallback must agree to rounding error."""

import os
import subprocess
import sys

import numpy as np
import pytest

from fedacs import _kernels
from fedacs._kernels import numba_kernels, numpy_kernels

pytestmark = pytest.mark.skipif(numba_kernels is None, reason="numba backend disabled")


def _pair(name):
    return getattr(numpy_kernels, name), getattr(numba_kernels, name)


def _close(a, b, tol=1e-12):
    if isinstance(a, tuple):
        for x, y in zip(a, b):
            _close(x, y, tol)
        return
    np.testing.assert_allclose(np.asarray(a), np.asarray(b), rtol=tol, atol=tol)


@pytest.fixture(params=range(5))
def case(request):
    rng = np.random.default_rng(request.param)
    d, C, H, m, n = 7, 4, 5, 11, 6
    return dict(
        X=rng.normal(size=(m, d)),
        y=rng.integers(0, C, size=m),
        lin=rng.normal(size=(d + 1) * C),
        mlp=rng.normal(size=(d + 1) * H + (H + 1) * C),
        W=rng.normal(size=(n, 9)),
        C=C, H=H,
        delta=float(rng.uniform(-0.5, 0.9)),
    )


def test_linear(case):
    f_np, f_nb = _pair("linear_loss_grad")
    _close(f_np(case["X"], case["y"], case["lin"], case["C"]), f_nb(case["X"], case["y"], case["lin"], case["C"]))
    f_np, f_nb = _pair("linear_logits")
    _close(f_np(case["X"], case["lin"], case["C"]), f_nb(case["X"], case["lin"], case["C"]))


@pytest.mark.parametrize("act", [0, 1], ids=["relu", "tanh"])
def test_mlp(case, act):
    args = (case["X"], case["y"], case["mlp"], case["H"], case["C"], act)
    _close(_pair("mlp_loss_grad")[0](*args), _pair("mlp_loss_grad")[1](*args))
    largs = (case["X"], case["mlp"], case["H"], case["C"], act)
    _close(_pair("mlp_logits")[0](*largs), _pair("mlp_logits")[1](*largs))


def test_quadratic(case):
    w = case["X"][0] + 0.5
    _close(_pair("quadratic_loss_grad")[0](case["X"], w), _pair("quadratic_loss_grad")[1](case["X"], w))


def test_server_side(case):
    W = case["W"]
    norms_np, norms_nb = _pair("row_norms")[0](W), _pair("row_norms")[1](W)
    _close(norms_np, norms_nb)
    S_np = numpy_kernels.cosine_matrix(W, norms_np)
    S_nb = numba_kernels.cosine_matrix(W, norms_np)
    _close(S_np, S_nb)
    np.testing.assert_array_equal(np.diag(S_nb), 1.0)
    np.testing.assert_array_equal(S_nb, S_nb.T)
    # attention weights are a pure function of S; compare on the same input bitwise
    np.testing.assert_array_equal(numpy_kernels.attention_weights(S_np, case["delta"]),
                                  numba_kernels.attention_weights(S_np, case["delta"]))
    _close(numpy_kernels.regularizer(W, S_np), numba_kernels.regularizer(W, S_np), 1e-11)


def test_mean_xent(case):
    logits = case["X"][:, :case["C"]] * 30
    _close(_pair("mean_xent")[0](logits, case["y"]), _pair("mean_xent")[1](logits, case["y"]))


def test_active_backend_is_numba_by_default():
    if os.environ.get("FEDACS_NUMBA", "1").lower() in ("0", "false", "no", "off"):
        pytest.skip("numpy backend forced by environment")
    assert _kernels.BACKEND == "numba"


@pytest.mark.parametrize("flag, expected", [("0", "numpy"), ("off", "numpy"), ("1", "numba")])
def test_env_flag_selects_backend(flag, expected):
    env = dict(os.environ, FEDACS_NUMBA=flag)
    res = subprocess.run([sys.executable, "-c", "import fedacs; print(fedacs.BACKEND)"],
                         capture_output=True, text=True, env=env, check=True)
    assert res.stdout.strip() == expected


def test_fallback_backend_reproduces_run(tmp_path):
    """A short FedACS run is numerically the same under either backend."""
    script = (
        "import numpy as np\n"
        "from fedacs.config import parse_config_text\n"
        "from fedacs.experiment import run_experiment\n"
        "cfg = parse_config_text('[dataset]\\nkind = \"synthetic\"\\nn_clusters = 3\\ninput_dim = 4\\n"
        "samples_per_cluster = 30\\n[partition]\\nn_clients = 4\\n[algorithm]\\nrounds = 5\\n')\n"
        "r = run_experiment(cfg).records[0][-1]\n"
        "print(repr(r.mean_test_accuracy))\n"
    )
    outs = []
    for flag in ("0", "1"):
        env = dict(os.environ, FEDACS_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", script], capture_output=True, text=True, env=env, check=True)
        outs.append(float(res.stdout.strip()))
    assert outs[0] == pytest.approx(outs[1], abs=1e-12)


def test_benchmark_smoke(capsys):
    import importlib.util
    from pathlib import Path
    path = Path(__file__).resolve().parent.parent / "benchmarks" / "bench_kernels.py"
    spec = importlib.util.spec_from_file_location("bench_kernels", path)
    bench = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(bench)
    assert bench.main(["--repeat", "2"]) == 0
    out = capsys.readouterr().out
    assert "linear_loss_grad" in out and "speedup" in out
