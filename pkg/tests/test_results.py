"""
🔐 TensorTEE Simulator - Testes do store de resultados e das tabelas de relatório
"""

import pytest

import config
from storage import CsvQueries, MetricsQueries, TraceQueries
from utils.errors import ConfigError
from utils.report_tables import ReportTables
from workloads.generators import gen_stream_trace


def _run(scenario, mode, cycles, **metrics):
    return {"scenario": scenario, "mode": mode, "sweep": {"mode": mode},
            "metrics": {"total_cycles": cycles, **metrics}}


# ═══════════════════════════════════════════════════════════════
# STORE
# ═══════════════════════════════════════════════════════════════

def test_metrics_accumulate_across_runs(results):
    assert MetricsQueries.runs() == {}
    MetricsQueries.save_run("adam-tensortee", _run("adam", "tensortee", 10))
    MetricsQueries.save_run("adam-sgx-mgx", _run("adam", "sgx-mgx", 20))
    runs = MetricsQueries.runs(required=True)
    assert set(runs) == {"adam-tensortee", "adam-sgx-mgx"}
    assert results.exists(config.METRICS_FILE)


def test_missing_metrics_file_is_a_config_error(results):
    with pytest.raises(ConfigError):
        MetricsQueries.load(required=True)


def test_broken_metrics_file_is_a_config_error(results):
    results.ensure()
    results.path(config.METRICS_FILE).write_text("{", encoding="utf-8")
    with pytest.raises(ConfigError):
        MetricsQueries.load()


def test_csv_header_is_written_once(results):
    CsvQueries.append("costs.csv", ["op", "cycles"], [{"op": "a", "cycles": 1}], "run-1")
    CsvQueries.append("costs.csv", ["op", "cycles"], [{"op": "b", "cycles": 2, "extra": 9}], "run-2")
    rows = CsvQueries.read("costs.csv")
    assert [row["run"] for row in rows] == ["run-1", "run-2"]
    assert rows[1] == {"run": "run-2", "op": "b", "cycles": "2"}
    assert results.path("costs.csv").read_text(encoding="utf-8").count("run,op,cycles") == 1


def test_trace_dump_and_limited_load(results):
    records = gen_stream_trace(config.TENSOR_BASE_VA, 32)
    assert TraceQueries.dump("stream.txt.gz", records) == 32
    assert TraceQueries.load("stream.txt.gz", limit=5) == records[:5]
    assert len(TraceQueries.load("stream.txt.gz")) == 32


# ═══════════════════════════════════════════════════════════════
# TABELAS
# ═══════════════════════════════════════════════════════════════

def test_require_rejects_empty_runs():
    with pytest.raises(ConfigError):
        ReportTables.require({})


def test_progress_bar_saturates():
    assert ReportTables.progress_bar(0.5) == "[█████░░░░░]"
    assert ReportTables.progress_bar(1.7) == "[" + "█" * 10 + "]"
    assert ReportTables.progress_bar(-1.0) == "[" + "░" * 10 + "]"


def test_normalized_performance_is_relative_to_nonsecure():
    runs = {
        "a": _run("zero-offload", "nonsecure", 100),
        "b": _run("zero-offload", "sgx-mgx", 400),
        "c": _run("zero-offload", "tensortee", 125),
    }
    rows = ReportTables.normalized_performance(runs)
    assert len(rows) == 1
    row = rows[0]
    assert row[config.MODE_LABELS["nonsecure"]] == 1.0
    assert row[config.MODE_LABELS["sgx-mgx"]] == 0.25
    assert row[config.MODE_LABELS["tensortee"]] == 0.8


def test_mac_granularity_puts_tensor_level_last():
    def stream(verify_mode, granularity):
        return {"mode": "x", "metrics": {"verify_mode": verify_mode, "mac_granularity": granularity,
                                         "overhead": 0.1, "mac_storage_bytes": 7}}

    runs = {"d": stream("DelayedTensor", 512), "b512": stream("Blocking(512)", 512),
            "b64": stream("Blocking(64)", 64)}
    rows = ReportTables.mac_granularity(runs)
    assert [row["granularity"] for row in rows] == [64, 512, "tensor"]


def test_hit_rate_rows_skip_runs_without_analyzer():
    steps = [{"iteration": 1, "hit_in": 0.5, "hit_boundary": 0.4, "hit_all": 0.9}]
    runs = {"t": _run("adam", "tensortee", 10, iterations=steps),
            "s": _run("adam", "sgx-mgx", 20, iterations=[{"iteration": 1}])}
    rows = ReportTables.hit_rate_vs_iteration(runs)
    assert [row["run"] for row in rows] == ["t"]
    assert rows[0]["bar"] == "[█████░░░░░]"


def test_render_lists_header_and_missing_values():
    text = ReportTables.render("performance", [{"point": "adam", "TensorTEE": None}])
    assert "── performance ──" in text
    assert "TensorTEE" in text
    assert text.splitlines()[-1].split() == ["adam", "-"]
