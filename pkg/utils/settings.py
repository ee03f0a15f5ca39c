"""
🔐 TensorTEE Simulator - Settings
Configuração tipada: padrões de config.py sobrepostos por JSON, variáveis de ambiente e sweeps
"""

import json
import os
from dataclasses import dataclass, field, fields, replace
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import config
from utils.errors import ConfigError


@dataclass(frozen=True)
class CpuSettings:
    freq_mhz: int = config.CPU_FREQ_MHZ
    cores: int = config.CPU_CORES
    dram_channels: int = config.CPU_DRAM_CHANNELS
    dram_gbps_per_channel: float = config.CPU_DRAM_GBPS_PER_CHANNEL
    dram_latency_cycles: int = config.CPU_DRAM_LATENCY_CYCLES
    aes_gbps_per_channel: float = config.CPU_AES_GBPS_PER_CHANNEL
    aes_latency_cycles: int = config.CPU_AES_LATENCY_CYCLES
    mac_latency_cycles: int = config.CPU_MAC_LATENCY_CYCLES
    hash_latency_cycles: int = config.CPU_HASH_LATENCY_CYCLES
    metadata_cache_bytes: int = config.CPU_METADATA_CACHE_BYTES
    mac_buffer_lines: int = config.CPU_MAC_BUFFER_LINES
    compute_cycles_per_line: int = config.CPU_COMPUTE_CYCLES_PER_LINE
    latency_tolerance_cycles: int = config.CPU_LATENCY_TOLERANCE_CYCLES
    en_tmf: bool = True
    meta_table_entries: int = config.META_TABLE_ENTRIES
    filter_entries: int = config.TENSOR_FILTER_ENTRIES
    filter_collect_limit: int = config.FILTER_COLLECT_LIMIT
    filter_max_stride: int = config.FILTER_MAX_STRIDE
    merge_window: int = config.MERGE_WINDOW
    bitmap_cache_bytes: int = config.BITMAP_CACHE_BYTES


@dataclass(frozen=True)
class NpuSettings:
    freq_mhz: int = config.NPU_FREQ_MHZ
    pe_rows: int = config.NPU_PE_ROWS
    pe_cols: int = config.NPU_PE_COLS
    gddr_channels: int = config.NPU_GDDR_CHANNELS
    gddr_gbps: float = config.NPU_GDDR_GBPS
    gddr_latency_cycles: int = config.NPU_GDDR_LATENCY_CYCLES
    aes_gbps_per_engine: float = config.NPU_AES_GBPS_PER_ENGINE
    aes_engines: int = config.NPU_GDDR_CHANNELS
    aes_latency_cycles: int = config.NPU_AES_LATENCY_CYCLES
    mac_latency_cycles: int = config.NPU_MAC_LATENCY_CYCLES
    compute_cycles_per_line: int = config.NPU_COMPUTE_CYCLES_PER_LINE
    tile_lines: int = config.NPU_TILE_LINES
    compare_cycles: int = config.NPU_COMPARE_CYCLES
    fault_threshold: int = config.FAULT_THRESHOLD
    poison_bits: int = config.POISON_TABLE_BITS


@dataclass(frozen=True)
class LinkSettings:
    gbps: float = config.LINK_GBPS
    latency_cycles: int = config.LINK_LATENCY_CYCLES
    metadata_gbps: float = config.METADATA_CHANNEL_GBPS
    sync_cycles: int = config.SYNC_CYCLES
    xfer_aes_gbps: float = config.XFER_AES_GBPS


@dataclass(frozen=True)
class CryptoSettings:
    seed: int = config.DEFAULT_SEED


@dataclass(frozen=True)
class WorkloadSettings:
    scenario: str = config.DEFAULT_SCENARIO
    tensor_sizes_kib: Tuple[int, ...] = config.DEFAULT_TENSOR_SIZES_KIB
    iterations: int = config.DEFAULT_ITERATIONS
    threads: int = config.DEFAULT_THREADS
    interleave_quantum: int = config.INTERLEAVE_QUANTUM_LINES
    writeback_lag: int = config.WRITEBACK_LAG_LINES
    batch_factor: int = config.BATCH_EMULATION_FACTOR
    gemm_dim: int = config.GEMM_DIM
    gemm_tile: int = config.GEMM_TILE
    lr: float = config.ADAM_LR
    beta1: float = config.ADAM_BETA1
    beta2: float = config.ADAM_BETA2
    eps: float = config.ADAM_EPS
    functional: bool = False


@dataclass(frozen=True)
class ModeSettings:
    name: str = "tensortee"
    verify: str = ""            # "" = definido pelo modo
    mac_granularity: int = config.MGX_MAC_GRANULARITY
    transfer: str = ""          # "" = definido pelo modo

    def resolved_verify(self) -> str:
        if self.verify:
            return self.verify
        return {"nonsecure": "none", "sgx-mgx": "blocking", "tensortee": "delayed",
                "blocking": "blocking", "delayed": "delayed"}.get(self.name, "delayed")

    def resolved_transfer(self) -> str:
        if self.transfer:
            return self.transfer
        return {"nonsecure": "plain", "sgx-mgx": "baseline"}.get(self.name, "direct")


SECTIONS = {
    "cpu": CpuSettings,
    "npu": NpuSettings,
    "link": LinkSettings,
    "crypto": CryptoSettings,
    "workload": WorkloadSettings,
    "mode": ModeSettings,
}

MODE_NAMES = ("nonsecure", "sgx-mgx", "tensortee", "blocking", "delayed")


def _coerce(dotted: str, current: Any, value: Any) -> Any:
    """Converte o valor para o tipo do padrão, rejeitando o que não casa"""
    try:
        if isinstance(current, bool):
            if isinstance(value, str):
                if value.lower() in ("1", "true", "yes", "on"):
                    return True
                if value.lower() in ("0", "false", "no", "off"):
                    return False
                raise ValueError(value)
            if isinstance(value, bool):
                return value
            raise ValueError(value)
        if isinstance(current, int):
            if isinstance(value, bool):
                raise ValueError(value)
            if isinstance(value, str):
                return int(value, 0)
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if isinstance(current, float):
            if isinstance(value, bool):
                raise ValueError(value)
            return float(value)
        if isinstance(current, tuple):
            if isinstance(value, str):
                value = [item for item in value.replace(":", ",").split(",") if item]
            return tuple(int(item) for item in value)
        if isinstance(current, str):
            if not isinstance(value, str):
                raise ValueError(value)
            return value
    except (TypeError, ValueError):
        raise ConfigError(f"valor inválido para {dotted}: {value!r}") from None
    return value


@dataclass(frozen=True)
class SimSettings:
    """Configuração completa de uma execução"""
    cpu: CpuSettings = field(default_factory=CpuSettings)
    npu: NpuSettings = field(default_factory=NpuSettings)
    link: LinkSettings = field(default_factory=LinkSettings)
    crypto: CryptoSettings = field(default_factory=CryptoSettings)
    workload: WorkloadSettings = field(default_factory=WorkloadSettings)
    mode: ModeSettings = field(default_factory=ModeSettings)

    # ═══════════════════════════════════════════════════════════════
    # CARREGAMENTO
    # ═══════════════════════════════════════════════════════════════

    @staticmethod
    def from_dict(data: Dict[str, Any]) -> "SimSettings":
        if not isinstance(data, dict):
            raise ConfigError("a configuração deve ser um objeto JSON")
        settings = SimSettings()
        for section, values in data.items():
            if section not in SECTIONS:
                raise ConfigError(f"seção desconhecida: {section}")
            if not isinstance(values, dict):
                raise ConfigError(f"seção {section} deve ser um objeto")
            settings = settings.with_overrides({f"{section}.{key}": value
                                                for key, value in values.items()})
        return settings

    @staticmethod
    def load(path: Optional[Union[str, Path]] = None, use_env: bool = True) -> "SimSettings":
        """Lê o JSON (se houver) e aplica TENSORTEE_SEED"""
        settings = SimSettings()
        if path:
            try:
                text = Path(path).read_text(encoding="utf-8")
            except OSError as exc:
                raise ConfigError(f"não foi possível ler {path}: {exc.strerror}") from None
            try:
                data = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ConfigError(
                    f"{path}: JSON inválido na linha {exc.lineno}, coluna {exc.colno}: {exc.msg}"
                ) from None
            settings = SimSettings.from_dict(data)
        if use_env:
            settings = settings.apply_env()
        return settings

    def apply_env(self) -> "SimSettings":
        seed = os.getenv("TENSORTEE_SEED")
        if seed:
            return self.with_overrides({"crypto.seed": seed})
        return self

    # ═══════════════════════════════════════════════════════════════
    # OVERRIDES
    # ═══════════════════════════════════════════════════════════════

    @staticmethod
    def resolve_key(key: str) -> Tuple[str, str]:
        """Aceita 'npu.tile_lines' ou só 'tile_lines' (se não for ambíguo)"""
        if "." in key:
            section, name = key.split(".", 1)
            if section not in SECTIONS:
                raise ConfigError(f"seção desconhecida: {section}")
            if name not in {f.name for f in fields(SECTIONS[section])}:
                raise ConfigError(f"campo desconhecido: {key}")
            return section, name
        owners = [section for section, cls in SECTIONS.items()
                  if key in {f.name for f in fields(cls)}]
        if not owners:
            raise ConfigError(f"campo desconhecido: {key}")
        if len(owners) > 1:
            raise ConfigError(f"campo ambíguo: {key} (use {' ou '.join(o + '.' + key for o in owners)})")
        return owners[0], key

    def with_overrides(self, overrides: Dict[str, Any]) -> "SimSettings":
        updated = self
        for key, value in overrides.items():
            section, name = SimSettings.resolve_key(key)
            block = getattr(updated, section)
            coerced = _coerce(f"{section}.{name}", getattr(block, name), value)
            updated = replace(updated, **{section: replace(block, **{name: coerced})})
        updated.validate()
        return updated

    def validate(self):
        if self.mode.name not in MODE_NAMES:
            raise ConfigError(f"modo desconhecido: {self.mode.name}")
        if self.mode.resolved_verify() not in ("none", "blocking", "delayed"):
            raise ConfigError(f"mode.verify inválido: {self.mode.verify}")
        if self.mode.resolved_transfer() not in ("plain", "baseline", "direct"):
            raise ConfigError(f"mode.transfer inválido: {self.mode.transfer}")
        granularity = self.mode.mac_granularity
        if granularity < config.CACHELINE_BYTES or granularity > config.PAGE_BYTES \
                or granularity & (granularity - 1):
            raise ConfigError(f"mode.mac_granularity deve ser potência de 2 entre 64 e 4096: {granularity}")
        if self.npu.tile_lines <= 0 or self.workload.threads <= 0:
            raise ConfigError("tile_lines e threads devem ser positivos")

    # ═══════════════════════════════════════════════════════════════
    # CONVERSÕES DE TEMPO (base: ciclo da CPU)
    # ═══════════════════════════════════════════════════════════════

    def cpu_bytes_per_cycle(self, gbps: float) -> Fraction:
        """GB/s → bytes por ciclo de CPU, em aritmética exata"""
        return Fraction(str(gbps)) * 1000 / self.cpu.freq_mhz

    def npu_to_cpu_cycles(self, npu_cycles: int) -> int:
        return -(-npu_cycles * self.cpu.freq_mhz // self.npu.freq_mhz)

    def to_dict(self) -> Dict[str, Dict[str, Any]]:
        payload: Dict[str, Dict[str, Any]] = {}
        for section in SECTIONS:
            block = getattr(self, section)
            payload[section] = {}
            for item in fields(block):
                value = getattr(block, item.name)
                payload[section][item.name] = list(value) if isinstance(value, tuple) else value
        return payload
