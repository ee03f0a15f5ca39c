"""
🔐 TensorTEE Simulator - ZeRO-Offload
Treino colaborativo: forward/backward na NPU, Adam na CPU, gradientes e pesos
atravessando o link a cada iteração
"""

import copy
import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np

import config
from components.transfer_protocol import CPU_TO_NPU, NPU_TO_CPU, TransferReport
from engine.events import SimEvent
from engine.system import Platform, TensorTeeSystem
from utils.cost_report import CostReport
from utils.settings import SimSettings, WorkloadSettings
from workloads.generators import (PARAM_KINDS, ParamLayout, ScenarioConfig, ScenarioLayout,
                                  adam_param_trace)
from workloads.trace import TraceRecord

logger = logging.getLogger("TensorTEE.ZeroOffload")

LINE = config.CACHELINE_BYTES
OVERLAPPING_PROTOCOLS = ("plain", "direct")


# ═══════════════════════════════════════════════════════════════
# VALORES DETERMINÍSTICOS
# ═══════════════════════════════════════════════════════════════

def initial_weights(param: ParamLayout, seed: int) -> np.ndarray:
    rng = np.random.default_rng((seed, param.index))
    return (rng.standard_normal(param.elements) * 0.02).astype(np.float32)


def gradient_values(param: ParamLayout, seed: int, iteration: int) -> np.ndarray:
    rng = np.random.default_rng((seed, param.index, iteration))
    return (rng.standard_normal(param.elements) * 0.01).astype(np.float32)


def to_lines(values: np.ndarray) -> List[bytes]:
    raw = values.astype(np.float32).tobytes()
    return [raw[offset:offset + LINE] for offset in range(0, len(raw), LINE)]


class AdamKernel:
    """Adam em float32 sobre as linhas em claro que passam pela proteção da CPU"""

    def __init__(self, layout: ScenarioLayout, workload: WorkloadSettings):
        self.layout = layout
        self.lr = np.float32(workload.lr)
        self.beta1 = np.float32(workload.beta1)
        self.beta2 = np.float32(workload.beta2)
        self.eps = np.float32(workload.eps)
        self.step = 0
        self._loaded: Dict[tuple, bytes] = {}
        self._updated: Dict[tuple, Dict[str, bytes]] = {}

    def begin_step(self):
        self.step += 1

    def on_read(self, record: TraceRecord, plain: Optional[bytes]):
        param, kind, line = self.layout.locate(record.va)
        self._loaded[(param.index, kind, line)] = plain

    def on_write(self, record: TraceRecord) -> bytes:
        param, kind, line = self.layout.locate(record.va)
        key = (param.index, line)
        if key not in self._updated:
            self._updated[key] = self._update(param.index, line)
        values = self._updated[key]
        out = values.pop(kind)
        if not values:
            del self._updated[key]
        return out

    def _update(self, index: int, line: int) -> Dict[str, bytes]:
        w, g, m, v = (np.frombuffer(self._loaded.pop((index, kind, line)), dtype=np.float32)
                      for kind in PARAM_KINDS)
        one = np.float32(1.0)
        m = self.beta1 * m + (one - self.beta1) * g
        v = self.beta2 * v + (one - self.beta2) * g * g
        m_hat = m / np.float32(1.0 - float(self.beta1) ** self.step)
        v_hat = v / np.float32(1.0 - float(self.beta2) ** self.step)
        w = w - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return {"w": w.astype(np.float32).tobytes(),
                "m": m.astype(np.float32).tobytes(),
                "v": v.astype(np.float32).tobytes()}


# ═══════════════════════════════════════════════════════════════
# RESULTADOS
# ═══════════════════════════════════════════════════════════════

@dataclass
class IterationMetrics:
    iteration: int
    start: int
    end: int
    npu_compute: int = 0
    cpu_compute: int = 0
    communication: int = 0
    exposed_communication: int = 0
    hit_in: float = 0.0
    hit_boundary: float = 0.0
    hit_all: float = 0.0
    metadata_bytes: int = 0
    offchip_vn_bytes: int = 0

    @property
    def cycles(self) -> int:
        return self.end - self.start

    def to_dict(self) -> Dict[str, object]:
        payload = asdict(self)
        payload["cycles"] = self.cycles
        return payload


@dataclass
class OffloadResult:
    mode: str
    iterations: List[IterationMetrics] = field(default_factory=list)
    transfers: List[TransferReport] = field(default_factory=list)
    costs: CostReport = field(default_factory=lambda: CostReport(op="zero-offload", accesses=0))
    npu_rows: List[Dict[str, object]] = field(default_factory=list)
    final_weights: Dict[int, np.ndarray] = field(default_factory=dict)
    analyzer: Optional[Dict[str, object]] = None
    engine: Dict[str, object] = field(default_factory=dict)

    @property
    def total_cycles(self) -> int:
        if not self.iterations:
            return 0
        return self.iterations[-1].end - self.iterations[0].start

    def breakdown(self) -> Dict[str, float]:
        """Fatias do tempo de iteração: NPU, CPU e comunicação exposta"""
        total = sum(it.cycles for it in self.iterations) or 1
        npu = sum(it.npu_compute for it in self.iterations)
        cpu = sum(it.cpu_compute for it in self.iterations)
        exposed = sum(it.exposed_communication for it in self.iterations)
        return {"npu_compute": npu / total, "cpu_compute": cpu / total,
                "communication": exposed / total}

    def to_dict(self) -> Dict[str, object]:
        return {
            "mode": self.mode,
            "label": config.MODE_LABELS.get(self.mode, self.mode),
            "total_cycles": self.total_cycles,
            "breakdown": self.breakdown(),
            "iterations": [it.to_dict() for it in self.iterations],
            "costs": self.costs.to_dict(),
            "transfer_bytes_aes": sum(r.bytes_aes for r in self.transfers),
            "transfer_bytes_link": sum(r.bytes_link for r in self.transfers),
            "analyzer": self.analyzer,
            "engine": self.engine,
        }


# ═══════════════════════════════════════════════════════════════
# EXECUÇÃO
# ═══════════════════════════════════════════════════════════════

def _setup_tensors(platform: Platform, layout: ScenarioLayout) -> ScenarioLayout:
    npu_layout = layout.rebased(config.NPU_TENSOR_BASE)
    for param, kind in layout.tensors():
        npu_param = npu_layout.params[param.index]
        platform.register_tensor(param.tensor_id(kind), param.base(kind),
                                 npu_param.base(kind), param.n_lines)
    return npu_layout


def run_zero_offload(settings: SimSettings, mode: Optional[str] = None,
                     platform: Optional[Platform] = None,
                     functional: Optional[bool] = None,
                     on_backward: Optional[Callable[[Platform, int], None]] = None) -> OffloadResult:
    """
    Por iteração: forward e backward em streams na NPU (gradientes surgem ao longo
    do backward), gradientes para a CPU, Adam por tensor assim que o gradiente chega
    e pesos de volta para a NPU. Falhas de integridade propagam.

    `on_backward(platform, iteration)` roda depois que os gradientes estão na
    memória da NPU (ponto de injeção de falhas).
    """
    cfg = ScenarioConfig.from_settings(settings)
    layout = cfg.layout()
    if platform is None:
        platform = TensorTeeSystem(settings).build_platform(
            mode, functional, region=(layout.base, layout.n_lines))
    settings = platform.settings
    npu, transfer = platform.npu, platform.transfer
    npu_layout = _setup_tensors(platform, layout)
    functional = platform.functional
    seed = settings.crypto.seed
    kernel = AdamKernel(layout, settings.workload) if functional else None
    protocol = settings.mode.resolved_transfer()
    result = OffloadResult(platform.mode)
    traces = {param.index: adam_param_trace(param, cfg) for param in layout.params}

    def tensor(param: ParamLayout, kind: str):
        return platform.tensors[param.tensor_id(kind)]

    # Estado inicial: pesos escritos na CPU e copiados para a NPU
    if functional:
        for param in layout.params:
            for pa, line in zip(tensor(param, "w").cpu_lines(), to_lines(initial_weights(param, seed))):
                platform.cpu.write_line(pa, line)
    clock = start = platform.loop.now
    for param in layout.params:
        clock = max(clock, transfer.transfer(tensor(param, "w"), CPU_TO_NPU, start).end)
    transfer.reports.clear()

    analyzer = platform.analyzer
    loop = platform.loop
    for iteration in range(1, cfg.iterations + 1):
        metrics = IterationMetrics(iteration, clock, clock)
        before = copy.deepcopy(analyzer.stats) if analyzer is not None else None
        first_report = len(transfer.reports)
        iteration_costs = CostReport(op="iteration", accesses=0)
        state = {"cpu_clock": clock, "end": clock}

        def forward(event: SimEvent):
            t = event.fire_cycle
            for param in layout.params:
                w_id = param.tensor_id("w")
                timing = npu.stream_schedule(npu_layout.params[param.index].w, param.n_lines, t,
                                             w_id, passes=cfg.batch_factor)
                t = timing.end
                if functional:
                    npu.load_tensor_stream(npu.record(w_id))
            loop.schedule(t, "backward", backward, parent=event)

        def backward(event: SimEvent):
            # Cada gradiente fica pronto ao fim do seu stream
            t = event.fire_cycle
            ready: Dict[int, int] = {}
            for param in reversed(layout.params):
                w_id, g_id = param.tensor_id("w"), param.tensor_id("g")
                npu_param = npu_layout.params[param.index]
                timing = npu.stream_schedule(npu_param.w, param.n_lines, t, w_id, passes=cfg.batch_factor)
                t = timing.end
                stored = npu.store_schedule(npu_param.g, param.n_lines, t)
                ready[param.index] = max(stored, timing.verify_done)
                g_record = npu.record(g_id)
                if functional:
                    npu.load_tensor_stream(npu.record(w_id))
                    lines = to_lines(gradient_values(param, seed, iteration))
                else:
                    lines = [None] * param.n_lines
                npu.store_tensor_stream(g_record, lines)
                npu.propagate_poison([npu.record(w_id)], g_record)
            if on_backward is not None:
                on_backward(platform, iteration)
            npu_end = max([t] + list(ready.values()))
            metrics.npu_compute = npu_end - clock
            state["end"] = max(state["end"], npu_end)
            if kernel is not None:
                kernel.begin_step()
            # Gradientes sobrepostos ao backward só quando o protocolo não disputa o AES da NPU
            for param in reversed(layout.params):
                at = ready[param.index] if protocol in OVERLAPPING_PROTOCOLS else npu_end
                loop.schedule(at, "gradient-ready", send_gradient, payload=param, parent=event)

        def send_gradient(event: SimEvent):
            param = event.payload
            report = transfer.transfer(tensor(param, "g"), NPU_TO_CPU, event.fire_cycle)
            loop.metrics.count("transfer.link_bytes", report.bytes_link)
            loop.schedule(max(report.end, event.fire_cycle), "gradient-arrived", update_param,
                          payload=param, parent=event)

        def update_param(event: SimEvent):
            # Adam por tensor na ordem de chegada; pesos voltam assim que prontos
            param = event.payload
            replay = platform.replayer.replay(
                traces[param.index], max(state["cpu_clock"], event.fire_cycle),
                on_read=kernel.on_read if kernel else None,
                on_write=kernel.on_write if kernel else None)
            state["cpu_clock"] = replay.end_cycle
            metrics.cpu_compute += replay.cycles
            iteration_costs.add(replay.costs)
            loop.metrics.record_cost(replay.costs)
            back = transfer.transfer(tensor(param, "w"), CPU_TO_NPU, replay.end_cycle)
            loop.metrics.count("transfer.link_bytes", back.bytes_link)
            state["end"] = max(state["end"], back.end, replay.end_cycle)

        loop.schedule(clock, "forward", forward)
        loop.run_until()
        end = state["end"]
        loop.advance_to(end)

        reports = transfer.reports[first_report:]
        metrics.end = end
        metrics.communication = sum(r.cycles_total for r in reports)
        metrics.exposed_communication = max(0, metrics.cycles - metrics.npu_compute - metrics.cpu_compute)
        metrics.metadata_bytes = iteration_costs.metadata_bytes
        metrics.offchip_vn_bytes = iteration_costs.offchip_vn_bytes
        if analyzer is not None:
            delta = analyzer.stats.since(before)
            metrics.hit_in = delta.hit_in_rate
            metrics.hit_boundary = delta.hit_boundary_rate
            metrics.hit_all = delta.hit_all_rate
        result.iterations.append(metrics)
        result.costs.add(iteration_costs)
        clock = end
        logger.info("🔄 %s iteração %d: %d ciclos (NPU %d, CPU %d, comunicação exposta %d)",
                    platform.label, iteration, metrics.cycles, metrics.npu_compute,
                    metrics.cpu_compute, metrics.exposed_communication)

    result.transfers = list(transfer.reports)
    result.npu_rows = list(npu.rows)
    result.engine = loop.metrics.to_dict()
    if analyzer is not None:
        result.analyzer = analyzer.stats.to_dict()
    if functional:
        result.final_weights = read_weights(platform, layout)
    return result


def read_weights(platform: Platform, layout: ScenarioLayout) -> Dict[int, np.ndarray]:
    """Pesos em claro lidos de volta pela proteção da CPU"""
    weights = {}
    for param in layout.params:
        lines = [platform.cpu.read_line(pa)[0]
                 for pa in platform.tensors[param.tensor_id("w")].cpu_lines()]
        weights[param.index] = np.frombuffer(b"".join(lines), dtype=np.float32).copy()
    return weights
