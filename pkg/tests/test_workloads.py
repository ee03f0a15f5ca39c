"""
🔐 TensorTEE Simulator - Testes dos geradores de trace e dos cenários
"""

import numpy as np
import pytest

import config
from components.transfer_protocol import NPU_TO_CPU
from utils.errors import ConfigError, IntegrityFault
from workloads.generators import (PARAM_KINDS, ScenarioConfig, ScenarioLayout, adam_param_trace,
                                  gen_gemm_trace, gen_mixed_trace, split_chunks)
from workloads.scenarios import run_adam, run_gemm, run_npu_stream, run_scenario
from workloads.trace import TraceIO, TraceRecord
from workloads.zero_offload import run_zero_offload

SMALL_OFFLOAD = {"tensor_sizes_kib": "4", "iterations": 2, "threads": 1, "batch_factor": 1}


# ═══════════════════════════════════════════════════════════════
# GERADORES
# ═══════════════════════════════════════════════════════════════

def test_layout_separates_tensors_by_a_page():
    layout = ScenarioLayout((4, 8))
    first = layout.params[0]
    assert first.g - first.w == 4096 + config.PAGE_BYTES
    assert layout.locate(first.g + 128) == (first, "g", 2)
    assert layout.locate(first.w + 4096) is None
    assert first.tensor_id("v") == 3
    assert layout.params[1].tensor_id("w") == len(PARAM_KINDS)


def test_adam_trace_reads_four_and_writes_three_tensors():
    cfg = ScenarioConfig(tensor_sizes_kib=(4,), threads=1)
    param = cfg.layout().params[0]
    records = adam_param_trace(param, cfg)
    assert sum(r.kind == "R" for r in records) == 4 * 64
    assert sum(r.kind == "W" for r in records) == 3 * 64
    assert {r.va for r in records if r.kind == "W"} & set(range(param.g, param.g + 4096)) == set()


def test_split_chunks_hands_extra_lines_to_first_threads():
    assert split_chunks(10, 4) == [(0, 3), (3, 3), (6, 2), (8, 2)]
    assert split_chunks(2, 4) == [(0, 1), (1, 1)]


def test_gemm_trace_shape_and_validation():
    records = gen_gemm_trace(128, 128, 128, 64)
    assert sum(r.kind == "R" for r in records) == 4096
    assert sum(r.kind == "W" for r in records) == 1024
    with pytest.raises(ValueError):
        gen_gemm_trace(100, 128, 128, 64)


def test_mixed_trace_is_reproducible():
    regions = [(config.TENSOR_BASE_VA, 8)]
    assert gen_mixed_trace(7, regions, 200) == gen_mixed_trace(7, regions, 200)
    assert len(gen_mixed_trace(7, regions, 200)) == 200


def test_trace_file_round_trip(tmp_path):
    records = [TraceRecord(0, 0, "R", config.TENSOR_BASE_VA, 3),
               TraceRecord(1, 2, "W", config.TENSOR_BASE_VA + 64)]
    path = tmp_path / "trace.txt.gz"
    assert TraceIO.write(path, records) == 2
    assert list(TraceIO.read(path)) == records
    with pytest.raises(ValueError):
        TraceRecord(0, 0, "R", 3)


# ═══════════════════════════════════════════════════════════════
# CENÁRIOS DA CPU
# ═══════════════════════════════════════════════════════════════

def test_adam_hit_rate_trajectory(settings):
    run = settings.with_overrides({"tensor_sizes_kib": "64", "threads": 1, "iterations": 2})
    outcome = run_adam(run, "tensortee")
    first, second = outcome.metrics["iterations"]
    assert first["hit_all"] >= 0.99
    assert second["hit_in"] == 1.0


def test_adam_without_analyzer_reports_no_hit_rates(settings):
    run = settings.with_overrides({"tensor_sizes_kib": "16", "threads": 2, "iterations": 1})
    outcome = run_adam(run, "sgx-mgx")
    assert "hit_in" not in outcome.metrics["iterations"][0]
    assert outcome.metrics["total_cycles"] > 0


def test_adam_costs_flow_through_the_event_loop(settings):
    run = settings.with_overrides({"tensor_sizes_kib": "16", "threads": 1, "iterations": 3})
    outcome = run_adam(run, "tensortee")
    engine = outcome.metrics["engine"]
    assert engine["counters"]["event.adam-iteration"] == 3
    assert engine["costs"]["data_bytes"] == sum(row["data_bytes"] for row in outcome.cost_rows)
    assert engine["cycles"] == outcome.metrics["total_cycles"]


@pytest.mark.slow
def test_adam_hit_in_grows_over_twenty_iterations(settings):
    run = settings.with_overrides({"tensor_sizes_kib": "64", "threads": 1, "iterations": 20})
    hit_in = [entry["hit_in"] for entry in run_adam(run, "tensortee").metrics["iterations"]]
    assert len(hit_in) == 20
    assert hit_in[0] <= hit_in[4] <= hit_in[19]
    assert hit_in[19] >= 0.9


@pytest.mark.slow
def test_gemm_second_pass_hits_detected_tensors(settings):
    run = settings.with_overrides({"gemm_dim": 256, "gemm_tile": 64, "iterations": 2})
    outcome = run_gemm(run, "tensortee")
    second = outcome.metrics["passes"][1]
    assert second["hit_in"] >= 0.97
    assert outcome.metrics["meta_table"]
    assert outcome.metrics["engine"]["counters"]["event.gemm-pass"] == 2


def test_npu_stream_overhead_by_verification_mode(settings):
    run = settings.with_overrides({"tensor_sizes_kib": "64", "batch_factor": 1})
    delayed = run_npu_stream(run, "tensortee").metrics
    blocking = run_npu_stream(run.with_overrides({"mode.mac_granularity": 64}), "sgx-mgx").metrics
    assert delayed["verify_mode"] == "DelayedTensor"
    assert blocking["verify_mode"] == "Blocking(64)"
    assert 0 <= delayed["overhead"] < blocking["overhead"]
    assert delayed["mac_storage_bytes"] < blocking["mac_storage_bytes"]


def test_blocking_granularity_sweep_never_beats_delayed(settings):
    run = settings.with_overrides({"tensor_sizes_kib": "64", "batch_factor": 1})
    delayed = run_npu_stream(run, "tensortee").metrics
    assert delayed["engine"]["counters"]["event.npu-stream"] == 1
    sweep = {granularity: run_npu_stream(run.with_overrides({"mode.mac_granularity": granularity}),
                                         "sgx-mgx").metrics
             for granularity in config.MAC_GRANULARITIES}
    for metrics in sweep.values():
        assert delayed["cycles"] <= metrics["cycles"]
    coarsest = sweep[max(config.MAC_GRANULARITIES)]
    assert coarsest["overhead"] > 0
    assert coarsest["overhead"] >= 4 * delayed["overhead"]
    storage = [sweep[granularity]["mac_storage_bytes"] for granularity in config.MAC_GRANULARITIES]
    assert storage == sorted(storage, reverse=True)
    assert len(set(storage)) == len(storage)


def test_unknown_scenario_is_a_config_error(settings):
    with pytest.raises(ConfigError):
        run_scenario(settings.with_overrides({"workload.scenario": "bert"}))


# ═══════════════════════════════════════════════════════════════
# ZERO-OFFLOAD
# ═══════════════════════════════════════════════════════════════

def test_zero_offload_weights_match_across_modes(settings):
    run = settings.with_overrides(SMALL_OFFLOAD)
    results = {mode: run_zero_offload(run, mode, functional=True)
               for mode in ("nonsecure", "sgx-mgx", "tensortee")}
    reference = results["nonsecure"].final_weights[0]
    assert reference.shape == (1024,)
    for mode in ("sgx-mgx", "tensortee"):
        np.testing.assert_array_equal(results[mode].final_weights[0], reference)
    assert not np.array_equal(reference, np.zeros_like(reference))


def test_zero_offload_transfer_costs(settings):
    run = settings.with_overrides(SMALL_OFFLOAD)
    direct = run_zero_offload(run, "tensortee").to_dict()
    relay = run_zero_offload(run, "sgx-mgx").to_dict()
    assert direct["transfer_bytes_aes"] == 0
    assert relay["transfer_bytes_aes"] == 4 * relay["transfer_bytes_link"]
    assert direct["transfer_bytes_link"] == relay["transfer_bytes_link"]
    assert len(direct["iterations"]) == 2
    assert direct["total_cycles"] < relay["total_cycles"]


@pytest.mark.parametrize("mode", ["tensortee", "sgx-mgx"])
def test_zero_offload_detects_gradient_tamper(settings, mode):
    run = settings.with_overrides(SMALL_OFFLOAD)

    def tamper(platform, iteration):
        platform.npu.inject_tamper(1, 0, 5)

    with pytest.raises(IntegrityFault):
        run_zero_offload(run, mode, functional=True, on_backward=tamper)


def test_zero_offload_runs_through_the_event_loop(settings):
    run = settings.with_overrides(SMALL_OFFLOAD)
    result = run_zero_offload(run, "tensortee")
    counters = result.engine["counters"]
    for kind in ("forward", "backward", "gradient-ready", "gradient-arrived"):
        assert counters[f"event.{kind}"] == 2
    assert result.engine["costs"]["data_bytes"] == result.costs.data_bytes
    assert counters["transfer.link_bytes"] == sum(r.bytes_link for r in result.transfers)
    assert result.engine["cycles"] == result.iterations[-1].end


def _gradient_cycles(result):
    return sum(r.cycles_total for r in result.transfers if r.direction == NPU_TO_CPU)


def test_direct_gradient_transfer_beats_relay_fivefold(settings):
    run = settings.with_overrides({"tensor_sizes_kib": "64", "iterations": 1, "threads": 1,
                                   "batch_factor": 1})
    relay = _gradient_cycles(run_zero_offload(run, "sgx-mgx", functional=False))
    direct = _gradient_cycles(run_zero_offload(run, "tensortee", functional=False))
    assert direct > 0
    assert relay >= 5 * direct


@pytest.mark.slow
def test_tensortee_stays_within_ten_percent_of_nonsecure(settings):
    run = settings.with_overrides({"tensor_sizes_kib": "64", "iterations": 2, "threads": 1,
                                   "batch_factor": 4})
    secure = run_zero_offload(run, "tensortee", functional=False).total_cycles
    plain = run_zero_offload(run, "nonsecure", functional=False).total_cycles
    assert secure <= 1.10 * plain
