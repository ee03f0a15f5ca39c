"""
🔐 TensorTEE Simulator - Testes da linha de comando
"""

import pytest

import config
from freeze_golden_vectors import GOLDEN_PATH, compute_golden_vectors, load_golden_vectors
from storage import MetricsQueries
from simulator import expand_sweep, main, run_label
from utils.errors import ConfigError


def test_sweep_is_a_cartesian_product():
    points = expand_sweep(["mode=sgx-mgx,tensortee", "threads=1,2"])
    assert len(points) == 4
    assert {"mode": "tensortee", "threads": "2"} in points
    assert expand_sweep(None) == [{}]
    with pytest.raises(ConfigError):
        expand_sweep(["threads="])


def test_run_label_omits_mode_from_point():
    assert run_label("adam", "tensortee", {"mode": "tensortee", "threads": "2"}) == "adam-tensortee-threads=2"


@pytest.mark.parametrize("argv", [
    ["run", "--set", "bogus"],
    ["run", "--set", "nosuch=1"],
    ["run", "--scenario", "bert"],
])
def test_bad_run_arguments_exit_with_config_error(results, argv):
    assert main(argv + ["--out", str(results.root)]) == config.EXIT_CONFIG_ERROR


def test_report_without_metrics_is_a_config_error(results):
    assert main(["report", "--out", str(results.root)]) == config.EXIT_CONFIG_ERROR


def test_run_then_report(results):
    argv = ["run", "--scenario", "adam", "--set", "tensor_sizes_kib=64", "--set", "iterations=1",
            "--set", "threads=1", "--sweep", "mode=sgx-mgx,tensortee", "--out", str(results.root)]
    assert main(argv) == config.EXIT_OK
    runs = MetricsQueries.runs(required=True)
    assert set(runs) == {"adam-sgx-mgx", "adam-tensortee"}
    assert main(["report", "--out", str(results.root)]) == config.EXIT_OK
    assert results.exists("report_hit_rate.csv")


def test_injected_fault_exits_with_integrity_code(results):
    argv = ["run", "--scenario", "zero-offload", "--mode", "tensortee", "--inject-fault",
            "--set", "tensor_sizes_kib=4", "--set", "iterations=1", "--set", "threads=1",
            "--set", "batch_factor=1", "--out", str(results.root)]
    assert main(argv) == config.EXIT_INTEGRITY_FAULT
    assert main(argv + ["--expect-fault"]) == config.EXIT_OK


def test_trace_dump_writes_file(results):
    assert main(["trace-dump", "--scenario", "stream", "--head", "2",
                 "--out", str(results.root)]) == config.EXIT_OK
    assert results.exists("trace-stream.txt")


# ═══════════════════════════════════════════════════════════════
# VETORES DE REFERÊNCIA
# ═══════════════════════════════════════════════════════════════

def test_golden_vectors_are_deterministic():
    vectors = compute_golden_vectors()
    assert vectors == compute_golden_vectors()
    first = vectors[0]
    assert (first["seed"], first["binding"]["ident"], first["vn"]) == (config.DEFAULT_SEED, 0x1000, 1)
    assert all(len(bytes.fromhex(v["pad_hex"])) == config.CACHELINE_BYTES for v in vectors)
    assert len({v["pad_hex"] for v in vectors}) == len(vectors)


def test_golden_vectors_match_frozen_file():
    assert GOLDEN_PATH.exists(), f"{GOLDEN_PATH.name} ausente; rode freeze_golden_vectors.py"
    frozen = load_golden_vectors()
    assert len(frozen) == 3
    assert compute_golden_vectors(frozen[0]["seed"]) == frozen
