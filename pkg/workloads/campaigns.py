"""
🔐 TensorTEE Simulator - Attack Campaigns
Campanhas de adulteração sobre a memória protegida da CPU e os tensores da NPU,
e o fuzzing de consistência de VN do TenAnalyzer
"""

import logging
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

import config
from components.cpu_baseline_tee import ATTACK_REGIONS, AttackKind, CpuBaselineTee
from components.cpu_memory import ProtectedMemory
from components.tenanalyzer import TenAnalyzer
from components.transfer_protocol import NPU_TO_CPU
from engine.system import TensorTeeSystem
from utils.crypto_model import KeyMaterial
from utils.errors import ConfigError, IntegrityFault
from utils.settings import SimSettings
from workloads.generators import gen_mixed_trace
from workloads.trace import MemRequest

logger = logging.getLogger("TensorTEE.Campaigns")

LINE = config.CACHELINE_BYTES
CPU_ATTACKS = {"bitflip": AttackKind.BITFLIP, "replay": AttackKind.REPLAY,
               "vntamper": AttackKind.VN_TAMPER}
ATTACKS = tuple(CPU_ATTACKS) + ("npu-bitflip", "vn-fuzz")
NPU_REGIONS = ("data", "code")
NPU_MODES = ("tensortee", "blocking", "delayed")


@dataclass
class CampaignResult:
    """
    Contagem por desfecho:
    - detected: a leitura (ou o load/fetch) levantou IntegrityFault
    - latent: a leitura devolveu o dado correto e a árvore acusou o estado adulterado
    - escapes: dado errado entregue ou adulteração que ninguém acusou
    """
    attack: str
    mode: str
    trials: int = 0
    detected: int = 0
    latent: int = 0
    escapes: int = 0
    leaks: int = 0
    by_region: Counter = field(default_factory=Counter)
    seconds: float = 0.0

    @property
    def detection_rate(self) -> float:
        return (self.detected + self.latent) / self.trials if self.trials else 0.0

    @property
    def clean(self) -> bool:
        return self.escapes == 0 and self.leaks == 0

    def to_dict(self) -> Dict[str, object]:
        return {
            "attack": self.attack,
            "mode": self.mode,
            "trials": self.trials,
            "detected": self.detected,
            "latent": self.latent,
            "escapes": self.escapes,
            "leaks": self.leaks,
            "detection_rate": self.detection_rate,
            "by_region": dict(self.by_region),
            "seconds": round(self.seconds, 3),
        }

    def summary(self) -> str:
        return (f"Campanha {self.attack} ({self.mode}): {self.detected + self.latent}/{self.trials} "
                f"detectados ({self.detection_rate:.1%}), escapes {self.escapes}, vazamentos {self.leaks}")


# ═══════════════════════════════════════════════════════════════
# CPU
# ═══════════════════════════════════════════════════════════════

def _cpu_target(system: TensorTeeSystem, mode: str, n_lines: int, key: KeyMaterial):
    memory = ProtectedMemory(config.TENSOR_BASE_VA, n_lines, functional=True)
    if mode == "sgx-mgx":
        return system.component("cpu.baseline")(memory, key, system.settings.cpu)
    memory.register_tensor(0, config.TENSOR_BASE_VA, n_lines)
    return system.component("cpu.tensortee")(memory, key, system.settings.cpu)


def _cpu_trial(cpu, kind: AttackKind, rng: np.random.Generator, n_lines: int,
               result: CampaignResult):
    lines = [config.TENSOR_BASE_VA + i * LINE for i in range(n_lines)]
    expected = {}
    # Duas atualizações completas deixam uma versão antiga disponível para replay
    for _ in range(2):
        for pa in lines:
            expected[pa] = rng.bytes(LINE)
            cpu.write_line(pa, expected[pa])
    for pa in lines:
        cpu.read_line(pa)

    pa = lines[int(rng.integers(n_lines))]
    if kind is AttackKind.BITFLIP:
        region = ATTACK_REGIONS[int(rng.integers(len(ATTACK_REGIONS)))]
        bit = int(rng.integers(LINE * 8 if region == "data" else config.VN_BITS))
    else:
        region, bit = "vn", int(rng.integers(16))
    result.by_region[region] += 1
    cpu.inject_attack(kind, pa, region, bit)

    try:
        plain, _ = cpu.read_line(pa)
    except IntegrityFault:
        result.detected += 1
        return
    if plain != expected[pa]:
        logger.error("❌ dado adulterado entregue em %#x (%s/%s)", pa, kind.value, region)
        result.escapes += 1
        return
    store = getattr(cpu, "vn_store", cpu)
    try:
        store.fetch_vn(pa)
    except IntegrityFault:
        result.latent += 1
        return
    logger.error("❌ adulteração não acusada em %#x (%s/%s)", pa, kind.value, region)
    result.escapes += 1


def run_cpu_campaign(settings: SimSettings, attack: str, trials: int,
                     mode: Optional[str] = None, n_lines: int = 64) -> CampaignResult:
    """Uma plataforma nova por tentativa; alvo aleatório dentro de um tensor de n_lines"""
    mode = mode or settings.mode.name
    if mode == "nonsecure":
        raise ConfigError("campanhas de ataque exigem um modo protegido")
    kind = CPU_ATTACKS[attack]
    system = TensorTeeSystem(settings)
    rng = np.random.default_rng((settings.crypto.seed, trials))
    result = CampaignResult(attack, mode)
    began = time.perf_counter()
    for trial in range(trials):
        key = KeyMaterial.from_seed(settings.crypto.seed + trial, "campaign")
        cpu = _cpu_target(system, mode, n_lines, key)
        _cpu_trial(cpu, kind, rng, n_lines, result)
        result.trials += 1
    result.seconds = time.perf_counter() - began
    return result


# ═══════════════════════════════════════════════════════════════
# NPU
# ═══════════════════════════════════════════════════════════════

def _npu_trial(system: TensorTeeSystem, mode: str, rng: np.random.Generator, n_lines: int,
               result: CampaignResult):
    base = config.TENSOR_BASE_VA
    platform = system.build_platform(mode, functional=True, region=(base, 3 * n_lines),
                                     capture=True)
    npu = platform.npu
    inputs = platform.register_tensor(0, base, config.NPU_TENSOR_BASE, n_lines)
    output = platform.register_tensor(1, base + n_lines * LINE,
                                      config.NPU_TENSOR_BASE + n_lines * LINE, n_lines)
    platform.register_tensor(2, base + 2 * n_lines * LINE, config.CODE_BASE_VA, n_lines, code=True)
    for tensor_id in (0, 1, 2):
        npu.store_tensor_stream(npu.record(tensor_id), [rng.bytes(LINE) for _ in range(n_lines)])

    region = NPU_REGIONS[int(rng.integers(len(NPU_REGIONS)))]
    result.by_region[region] += 1
    target = 0 if region == "data" else 2
    npu.inject_tamper(target, int(rng.integers(n_lines)), int(rng.integers(LINE * 8)))

    if region == "code":
        delayed_before = npu.delayed_lines
        try:
            for index in range(n_lines):
                npu.dispatch(MemRequest(config.CODE_BASE_VA + index * LINE, is_inst=True))
        except IntegrityFault:
            result.detected += 1
        else:
            result.escapes += 1
        if npu.delayed_lines != delayed_before:
            logger.error("❌ busca de código passou pela fila atrasada")
            result.escapes += 1
        return

    try:
        npu.load_tensor_stream(npu.record(inputs.tensor_id))
    except IntegrityFault:
        result.detected += 1
    else:
        result.escapes += 1
    npu.propagate_poison([npu.record(inputs.tensor_id)], npu.record(output.tensor_id))
    try:
        platform.transfer.transfer(output, NPU_TO_CPU)
    except IntegrityFault:
        pass
    else:
        logger.error("❌ tensor derivado de dado adulterado saiu pelo link")
        result.leaks += 1
    if any(tensor_id in (0, 1) for tensor_id, _ in platform.transfer.link_log):
        result.leaks += 1


def run_npu_campaign(settings: SimSettings, trials: int, mode: Optional[str] = None,
                     n_lines: int = 32) -> CampaignResult:
    """
    Adulteração de um bit nos tensores ou no código da NPU. Confere também que
    nada derivado do tensor adulterado atravessa o link e que buscas de código
    nunca entram na verificação atrasada.
    """
    mode = mode or settings.mode.name
    if mode not in NPU_MODES:
        logger.warning("⚠️ campanha da NPU usa verificação por tensor; modo %s trocado por tensortee", mode)
        mode = "tensortee"
    system = TensorTeeSystem(settings)
    rng = np.random.default_rng((settings.crypto.seed, trials, 1))
    result = CampaignResult("npu-bitflip", mode)
    began = time.perf_counter()
    for _ in range(trials):
        _npu_trial(system, mode, rng, n_lines, result)
        result.trials += 1
    result.seconds = time.perf_counter() - began
    return result


# ═══════════════════════════════════════════════════════════════
# CONSISTÊNCIA DE VN (fuzzing do TenAnalyzer)
# ═══════════════════════════════════════════════════════════════

@dataclass
class FuzzResult:
    """Traces mistos contra um oráculo que conta as escritas de cada linha"""
    trials: int = 0
    ops: int = 0
    checks: int = 0
    violations: int = 0
    invalidations: Counter = field(default_factory=Counter)
    seconds: float = 0.0
    attack: str = "vn-fuzz"
    mode: str = "tensortee"

    @property
    def clean(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> Dict[str, object]:
        return {
            "attack": self.attack,
            "mode": self.mode,
            "trials": self.trials,
            "ops": self.ops,
            "checks": self.checks,
            "violations": self.violations,
            "invalidations": dict(self.invalidations),
            "seconds": round(self.seconds, 3),
        }

    def summary(self) -> str:
        return (f"Fuzz de VN: {self.ops} operações em {self.trials} traces, "
                f"{sum(self.invalidations.values())} invalidações, {self.violations} violações")


def fuzz_regions(sizes: Sequence[int] = config.FUZZ_REGION_LINES,
                 base: int = config.TENSOR_BASE_VA) -> List[Tuple[int, int]]:
    """Tensores pequenos separados por uma página, perto o bastante para merges"""
    regions, cursor = [], base
    for n_lines in sizes:
        regions.append((cursor, n_lines))
        cursor += -(-(n_lines * LINE) // config.PAGE_BYTES) * config.PAGE_BYTES + config.PAGE_BYTES
    return regions


def _offchip_drift(analyzer: TenAnalyzer, oracle: Counter,
                   regions: Sequence[Tuple[int, int]]) -> List[str]:
    """Linhas fora de entradas em atualização devem ter o VN off-chip do oráculo"""
    problems = []
    for base, n_lines in regions:
        for va in range(base, base + n_lines * LINE, LINE):
            owner = analyzer.entry_for(va)
            if owner is not None and owner.uf:
                continue
            stored = analyzer.vn_store.peek_vn(va)
            if stored != oracle[va]:
                problems.append(f"VN off-chip de {va:#x} é {stored}, oráculo {oracle[va]}")
    return problems


def run_vn_fuzz(settings: SimSettings, trials: int,
                n_ops: int = config.FUZZ_TRACE_OPS) -> FuzzResult:
    """
    Cada tentativa roda um trace misto novo (streams, atualizações em ordem e escritas
    que violam o protocolo) num TenAnalyzer limpo. Toda leitura e escrita precisa
    devolver o VN do oráculo, e a cada FUZZ_CHECK_EVERY operações a tabela e a
    região off-chip são conferidas.
    """
    regions = fuzz_regions()
    base = regions[0][0]
    last_base, last_lines = regions[-1]
    n_lines = (last_base - base) // LINE + last_lines
    result = FuzzResult()
    began = time.perf_counter()
    for trial in range(trials):
        store = CpuBaselineTee(ProtectedMemory(base, n_lines, functional=False), None)
        analyzer = TenAnalyzer(store, settings.cpu)
        records = gen_mixed_trace(settings.crypto.seed + trial, regions, n_ops)
        oracle: Counter = Counter()
        for step, record in enumerate(records, start=1):
            if record.kind == "W":
                oracle[record.va] += 1
                seen = analyzer.on_write(record.va).vn
            else:
                seen = analyzer.on_read(record.va).vn
            if seen != oracle[record.va]:
                result.violations += 1
                logger.error("❌ trace %d, op %d: %s em %#x devolveu VN %d, oráculo %d",
                             trial, step, record.kind, record.va, seen, oracle[record.va])
            if step % config.FUZZ_CHECK_EVERY == 0 or step == len(records):
                result.checks += 1
                problems = analyzer.check_invariants() + _offchip_drift(analyzer, oracle, regions)
                for problem in problems:
                    logger.error("❌ trace %d, op %d: %s", trial, step, problem)
                result.violations += len(problems)
        result.ops += len(records)
        result.invalidations.update(analyzer.stats.invalidations)
        result.trials += 1
    result.seconds = time.perf_counter() - began
    return result


def run_campaign(settings: SimSettings, attack: str, trials: int,
                 mode: Optional[str] = None) -> Union[CampaignResult, FuzzResult]:
    if attack not in ATTACKS:
        raise ConfigError(f"ataque desconhecido: {attack} (opções: {', '.join(ATTACKS)})")
    if trials <= 0:
        raise ConfigError("--trials deve ser positivo")
    if attack == "vn-fuzz":
        result = run_vn_fuzz(settings, trials)
    elif attack == "npu-bitflip":
        result = run_npu_campaign(settings, trials, mode)
    else:
        result = run_cpu_campaign(settings, attack, trials, mode)
    level = logging.INFO if result.clean else logging.ERROR
    logger.log(level, "%s %s", "✅" if result.clean else "❌", result.summary())
    return result
