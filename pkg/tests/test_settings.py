"""
🔐 TensorTEE Simulator - Testes da configuração
"""

import json
from fractions import Fraction

import pytest

import config
from utils.errors import ConfigError
from utils.settings import SimSettings


def test_defaults_come_from_config(settings):
    assert settings.cpu.freq_mhz == config.CPU_FREQ_MHZ
    assert settings.npu.fault_threshold == 3
    assert settings.cpu.merge_window == 8
    assert settings.mode.name == "tensortee"


def test_mode_resolution(settings):
    assert settings.mode.resolved_verify() == "delayed"
    assert settings.mode.resolved_transfer() == "direct"
    mgx = settings.with_overrides({"mode.name": "sgx-mgx"})
    assert mgx.mode.resolved_verify() == "blocking"
    assert mgx.mode.resolved_transfer() == "baseline"
    plain = settings.with_overrides({"mode.name": "nonsecure"})
    assert (plain.mode.resolved_verify(), plain.mode.resolved_transfer()) == ("none", "plain")


def test_overrides_accept_short_and_dotted_keys(settings):
    updated = settings.with_overrides({"tile_lines": "128", "workload.iterations": 2,
                                       "en_tmf": "false"})
    assert updated.npu.tile_lines == 128
    assert updated.workload.iterations == 2
    assert updated.cpu.en_tmf is False
    assert settings.npu.tile_lines == config.NPU_TILE_LINES


def test_tuple_override_accepts_colon_list(settings):
    updated = settings.with_overrides({"tensor_sizes_kib": "4:8"})
    assert updated.workload.tensor_sizes_kib == (4, 8)


@pytest.mark.parametrize("overrides", [
    {"no_such_field": 1},
    {"gpu.freq_mhz": 1},
    {"freq_mhz": 1000},
    {"aes_latency_cycles": 10},
    {"mode.name": "turbo"},
    {"mode.mac_granularity": 100},
    {"workload.iterations": "many"},
])
def test_invalid_overrides_raise_config_error(settings, overrides):
    with pytest.raises(ConfigError):
        settings.with_overrides(overrides)


def test_load_json_sections(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"npu": {"tile_lines": 64}, "mode": {"name": "sgx-mgx"}}))
    loaded = SimSettings.load(path, use_env=False)
    assert loaded.npu.tile_lines == 64
    assert loaded.mode.name == "sgx-mgx"


def test_load_rejects_broken_json_and_unknown_section(tmp_path):
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    with pytest.raises(ConfigError):
        SimSettings.load(broken, use_env=False)
    unknown = tmp_path / "unknown.json"
    unknown.write_text(json.dumps({"gpu": {}}))
    with pytest.raises(ConfigError):
        SimSettings.load(unknown, use_env=False)


def test_seed_from_environment(monkeypatch):
    monkeypatch.setenv("TENSORTEE_SEED", "0x10")
    assert SimSettings.load().crypto.seed == 16


def test_time_conversions(settings):
    assert settings.cpu_bytes_per_cycle(35.0) == Fraction(10)
    assert settings.npu_to_cpu_cycles(100) == 350
