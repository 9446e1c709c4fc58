import importlib.util
from pathlib import Path

import pytest

from sgt._accel import HAVE_NUMBA


@pytest.mark.skipif(not HAVE_NUMBA, reason="numba not installed")
def test_benchmark_runs_and_backends_agree(capsys):
    path = Path(__file__).resolve().parent.parent / "benchmarks" / "bench_lasso.py"
    spec = importlib.util.spec_from_file_location("bench_lasso", path)
    bench = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(bench)
    assert bench.main(["--n", "12", "--dim", "5", "--repeat", "1"]) == 0
    assert "speedup" in capsys.readouterr().out
