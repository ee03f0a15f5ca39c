"""
🔐 TensorTEE Simulator - System
Carrega os componentes e monta a plataforma CPU+NPU de cada modo
"""

import importlib
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple

import config
from components.cpu_memory import CpuReplayer, PlainMemory, ProtectedMemory
from components.npu_tee import VerifyMode
from components.transfer_protocol import EnclaveImage, SessionState, TransferTensor
from engine.events import EventLoop
from engine.resources import ResourceLedger
from utils.crypto_model import KeyMaterial
from utils.errors import ConfigError
from utils.settings import SimSettings

logger = logging.getLogger("TensorTEE.System")

DEFAULT_CPU_IMAGE = EnclaveImage("cpu-enclave", b"adam-optimizer-v1")
DEFAULT_NPU_IMAGE = EnclaveImage("npu-enclave", b"fwd-bwd-kernels-v1")
DEFAULT_REGION_LINES = 4096


@dataclass
class Platform:
    """Tudo o que uma execução usa: relógio, recursos, proteção da CPU, NPU e canal"""
    mode: str
    settings: SimSettings
    functional: bool
    ledger: ResourceLedger
    loop: EventLoop
    session: SessionState
    cpu: object
    memory: Optional[ProtectedMemory]
    npu: object
    transfer: object
    replayer: CpuReplayer
    tensors: Dict[int, TransferTensor] = field(default_factory=dict)

    @property
    def analyzer(self):
        return getattr(self.cpu, "analyzer", None)

    @property
    def label(self) -> str:
        return config.MODE_LABELS.get(self.mode, self.mode)

    def register_tensor(self, tensor_id: int, cpu_base: int, npu_base: int, n_lines: int,
                        code: bool = False) -> TransferTensor:
        """Mesmo tensor_id nos dois lados; só o modo TensorTEE usa binding lógico na CPU"""
        tensor = TransferTensor(tensor_id, cpu_base, npu_base, n_lines)
        if self.memory is not None and self.analyzer is not None:
            self.memory.register_tensor(tensor_id, cpu_base, n_lines)
        self.npu.register_tensor(tensor_id, npu_base, n_lines, code=code)
        self.tensors[tensor_id] = tensor
        return tensor


class TensorTeeSystem:
    """Registro de componentes carregados por nome, como extensões"""

    def __init__(self, settings: Optional[SimSettings] = None):
        self.settings = settings or SimSettings()
        self.components: Dict[str, Callable] = {}
        self.initial_components = [
            'components.cpu_baseline_tee',
            'components.tenanalyzer',
            'components.npu_tee',
            'components.transfer_protocol',
        ]
        for name in self.initial_components:
            self.load_component(name)

    def load_component(self, name: str):
        try:
            module = importlib.import_module(name)
        except ImportError as exc:
            raise ConfigError(f"componente não encontrado: {name} ({exc})") from None
        if not hasattr(module, "setup"):
            raise ConfigError(f"componente sem setup(): {name}")
        module.setup(self)
        logger.debug("✅ Carregado: %s", name)

    def add_component(self, key: str, factory: Callable):
        self.components[key] = factory

    def component(self, key: str) -> Callable:
        try:
            return self.components[key]
        except KeyError:
            raise ConfigError(f"componente não registrado: {key}") from None

    # ═══════════════════════════════════════════════════════════════
    # SESSÃO
    # ═══════════════════════════════════════════════════════════════

    def attest(self, cpu_image: EnclaveImage = DEFAULT_CPU_IMAGE,
               npu_image: EnclaveImage = DEFAULT_NPU_IMAGE) -> SessionState:
        """Confere as imagens contra as medições conhecidas e troca a chave de sessão"""
        return SessionState.attest_and_exchange(
            cpu_image, npu_image,
            expected_cpu=DEFAULT_CPU_IMAGE.report(),
            expected_npu=DEFAULT_NPU_IMAGE.report(),
            seed=self.settings.crypto.seed,
        )

    # ═══════════════════════════════════════════════════════════════
    # PLATAFORMA
    # ═══════════════════════════════════════════════════════════════

    def build_platform(self, mode: Optional[str] = None, functional: Optional[bool] = None,
                       region: Optional[Tuple[int, int]] = None,
                       session: Optional[SessionState] = None,
                       capture: bool = False) -> Platform:
        settings = self.settings
        if mode is not None and mode != settings.mode.name:
            settings = settings.with_overrides({"mode.name": mode})
        mode = settings.mode.name
        functional = settings.workload.functional if functional is None else functional
        base, n_lines = region or (config.TENSOR_BASE_VA, DEFAULT_REGION_LINES)

        ledger = ResourceLedger.from_settings(settings)
        verify = settings.mode.resolved_verify()
        secure = mode != "nonsecure"
        if secure and session is None:
            session = self.attest()
        session = session or SessionState()

        memory: Optional[ProtectedMemory] = None
        if not secure:
            cpu_key = npu_key = None
            cpu = PlainMemory(functional)
        else:
            if settings.mode.resolved_transfer() == "direct":
                cpu_key = npu_key = session.shared_key
            else:
                root = KeyMaterial.from_seed(settings.crypto.seed, "platform")
                cpu_key, npu_key = root.for_enclave(1), root.for_enclave(2)
            memory = ProtectedMemory(base, n_lines, functional)
            factory = self.component("cpu.baseline" if mode == "sgx-mgx" else "cpu.tensortee")
            cpu = factory(memory, cpu_key if functional else None, settings.cpu)

        npu = self.component("npu.tee")(npu_key if functional else None, settings,
                                        VerifyMode.from_settings(settings), functional, ledger)
        transfer = self.component("transfer")(session, cpu, npu, ledger, settings,
                                              functional=functional, capture=capture)
        platform = Platform(mode, settings, functional, ledger, EventLoop(), session, cpu,
                            memory, npu, transfer, CpuReplayer(cpu, ledger, settings))
        logger.info("🔄 plataforma %s montada (verificação %s, transferência %s)",
                    platform.label, verify, settings.mode.resolved_transfer())
        return platform
