"""
🔐 TensorTEE Simulator - Scenarios
Execuções nomeadas: Adam só na CPU, GEMM em tiles, streams da NPU e ZeRO-Offload
"""

import copy
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import config
from engine.system import Platform, TensorTeeSystem
from utils.cost_report import CostReport
from utils.errors import ConfigError
from utils.settings import SimSettings
from workloads.generators import GemmLayout, ScenarioConfig, gen_adam_trace, gen_gemm_trace
from workloads.zero_offload import AdamKernel, run_zero_offload

logger = logging.getLogger("TensorTEE.Scenarios")

SCENARIOS = ("zero-offload", "adam", "gemm", "npu-stream")


@dataclass
class ScenarioOutcome:
    """Métricas em JSON e linhas para os CSVs de cada módulo"""
    scenario: str
    mode: str
    metrics: Dict[str, object] = field(default_factory=dict)
    cost_rows: List[Dict[str, object]] = field(default_factory=list)
    npu_rows: List[Dict[str, object]] = field(default_factory=list)
    transfer_rows: List[Dict[str, object]] = field(default_factory=list)


def _analyzer_delta(platform: Platform, before) -> Dict[str, float]:
    analyzer = platform.analyzer
    if analyzer is None:
        return {}
    delta = analyzer.stats.since(before)
    return {"hit_in": delta.hit_in_rate, "hit_boundary": delta.hit_boundary_rate,
            "hit_all": delta.hit_all_rate, "mispredictions": delta.mispredictions}


def _snapshot(platform: Platform):
    analyzer = platform.analyzer
    return copy.deepcopy(analyzer.stats) if analyzer is not None else None


def _cost_row(label: str, costs: CostReport) -> Dict[str, object]:
    row = costs.to_row()
    row["op"] = label
    return row


# ═══════════════════════════════════════════════════════════════
# CPU: ADAM E GEMM
# ═══════════════════════════════════════════════════════════════

def run_adam(settings: SimSettings, mode: Optional[str] = None) -> ScenarioOutcome:
    """Só o otimizador: a trajetória de hit rate por iteração"""
    cfg = ScenarioConfig.from_settings(settings)
    layout = cfg.layout()
    platform = TensorTeeSystem(settings).build_platform(mode, region=(layout.base, layout.n_lines))
    for param, kind in layout.tensors():
        if platform.memory is not None and platform.analyzer is not None:
            platform.memory.register_tensor(param.tensor_id(kind), param.base(kind), param.n_lines)
    kernel = AdamKernel(layout, platform.settings.workload) if platform.functional else None
    records = gen_adam_trace(cfg, layout)
    outcome = ScenarioOutcome("adam", platform.mode)
    iterations = []

    def iteration_step(index: int, at_cycle: int) -> int:
        iteration = index + 1
        before = _snapshot(platform)
        if kernel is not None:
            kernel.begin_step()
        replay = platform.replayer.replay(records, at_cycle,
                                          on_read=kernel.on_read if kernel else None,
                                          on_write=kernel.on_write if kernel else None)
        platform.loop.metrics.record_cost(replay.costs)
        entry = {"iteration": iteration, "cycles": replay.cycles,
                 "metadata_bytes": replay.costs.metadata_bytes,
                 "offchip_vn_bytes": replay.costs.offchip_vn_bytes}
        entry.update(_analyzer_delta(platform, before))
        iterations.append(entry)
        outcome.cost_rows.append(_cost_row(f"adam-iter{iteration}", replay.costs))
        return replay.end_cycle

    clock = platform.loop.run_chain("adam-iteration", cfg.iterations, iteration_step)
    outcome.metrics = {"total_cycles": clock, "iterations": iterations,
                       "engine": platform.loop.metrics.to_dict()}
    if platform.analyzer is not None:
        outcome.metrics["analyzer"] = platform.analyzer.stats.to_dict()
        outcome.metrics["meta_table_entries"] = len(platform.analyzer)
    return outcome


def run_gemm(settings: SimSettings, mode: Optional[str] = None) -> ScenarioOutcome:
    """GEMM repetido: a primeira passada detecta, as seguintes medem hit_in"""
    workload = settings.workload
    dim, tile = workload.gemm_dim, workload.gemm_tile
    layout = GemmLayout.allocate(dim, dim, dim)
    n_lines = (layout.end - layout.a_base) // config.CACHELINE_BYTES
    platform = TensorTeeSystem(settings).build_platform(mode, region=(layout.a_base, n_lines))
    records = gen_gemm_trace(dim, dim, dim, tile)
    outcome = ScenarioOutcome("gemm", platform.mode)
    passes = []

    def pass_step(index: int, at_cycle: int) -> int:
        before = _snapshot(platform)
        replay = platform.replayer.replay(records, at_cycle)
        platform.loop.metrics.record_cost(replay.costs)
        entry = {"pass": index + 1, "cycles": replay.cycles,
                 "metadata_bytes": replay.costs.metadata_bytes,
                 "offchip_vn_bytes": replay.costs.offchip_vn_bytes}
        entry.update(_analyzer_delta(platform, before))
        passes.append(entry)
        outcome.cost_rows.append(_cost_row(f"gemm-pass{index + 1}", replay.costs))
        return replay.end_cycle

    clock = platform.loop.run_chain("gemm-pass", max(2, workload.iterations), pass_step)
    outcome.metrics = {"dim": dim, "tile": tile, "total_cycles": clock, "passes": passes,
                       "engine": platform.loop.metrics.to_dict()}
    if platform.analyzer is not None:
        outcome.metrics["meta_table"] = platform.analyzer.dump_table()
    return outcome


# ═══════════════════════════════════════════════════════════════
# NPU: CUSTO DA VERIFICAÇÃO
# ═══════════════════════════════════════════════════════════════

def run_npu_stream(settings: SimSettings, mode: Optional[str] = None) -> ScenarioOutcome:
    """
    Streams dos pesos do cenário no modo de verificação ativo, comparados com
    a mesma carga sem proteção (overhead relativo).
    """
    cfg = ScenarioConfig.from_settings(settings)
    layout = cfg.layout().rebased(config.NPU_TENSOR_BASE)
    system = TensorTeeSystem(settings)
    runs = {}
    for label, run_mode in (("protected", mode), ("unprotected", "nonsecure")):
        platform = system.build_platform(run_mode, functional=False)
        for param in layout.params:
            platform.npu.register_tensor(param.tensor_id("w"), param.w, param.n_lines)

        def stream_step(index: int, at_cycle: int, platform: Platform = platform) -> int:
            param = layout.params[index]
            timing = platform.npu.stream_schedule(param.w, param.n_lines, at_cycle,
                                                  param.tensor_id("w"), passes=cfg.batch_factor)
            platform.loop.metrics.count("npu.stream_lines", param.n_lines * cfg.batch_factor)
            return timing.end

        clock = platform.loop.run_chain("npu-stream", len(layout.params), stream_step)
        runs[label] = (platform, clock)
    platform, cycles = runs["protected"]
    baseline = runs["unprotected"][1]
    outcome = ScenarioOutcome("npu-stream", platform.mode, npu_rows=list(platform.npu.rows))
    outcome.metrics = {
        "verify_mode": platform.npu.mode.label,
        "mac_granularity": platform.settings.mode.mac_granularity,
        "cycles": cycles,
        "unprotected_cycles": baseline,
        "overhead": cycles / baseline - 1.0 if baseline else 0.0,
        "mac_storage_bytes": platform.npu.mac_storage_bytes(),
        "engine": platform.loop.metrics.to_dict(),
    }
    return outcome


# ═══════════════════════════════════════════════════════════════
# ZERO-OFFLOAD
# ═══════════════════════════════════════════════════════════════

def run_offload(settings: SimSettings, mode: Optional[str] = None,
                on_backward: Optional[Callable] = None) -> ScenarioOutcome:
    result = run_zero_offload(settings, mode, on_backward=on_backward)
    outcome = ScenarioOutcome("zero-offload", result.mode)
    outcome.metrics = result.to_dict()
    outcome.cost_rows = [_cost_row("zero-offload", result.costs)]
    outcome.npu_rows = result.npu_rows
    outcome.transfer_rows = [report.to_row() for report in result.transfers]
    return outcome


RUNNERS = {
    "zero-offload": run_offload,
    "adam": run_adam,
    "gemm": run_gemm,
    "npu-stream": run_npu_stream,
}


def run_scenario(settings: SimSettings, mode: Optional[str] = None, **kwargs) -> ScenarioOutcome:
    scenario = settings.workload.scenario
    if scenario not in RUNNERS:
        raise ConfigError(f"cenário desconhecido: {scenario} (opções: {', '.join(SCENARIOS)})")
    logger.info("🔄 cenário %s no modo %s", scenario, mode or settings.mode.name)
    return RUNNERS[scenario](settings, mode, **kwargs)
