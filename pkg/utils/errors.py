"""
🔐 TensorTEE Simulator - Errors
Hierarquia de exceções do simulador
"""

from enum import Enum
from typing import Optional


class FaultKind(Enum):
    """Origem de uma falha de integridade"""
    MAC_MISMATCH = "mac-mismatch"
    REPLAY_OR_TAMPER = "replay-or-tamper"
    TENSOR_MAC = "tensor-mac"
    CODE_MAC = "code-mac"
    CHANNEL_TAMPER = "channel-tamper"
    STAGED_DATA = "staged-data"


class TensorTeeError(Exception):
    """Erro base do simulador"""


class ConfigError(TensorTeeError):
    """Configuração inválida (campo desconhecido, JSON quebrado, recurso inexistente)"""


class SimulationError(TensorTeeError):
    """Violação interna do motor (ex.: evento agendado no passado)"""


class IntegrityFault(TensorTeeError):
    """Falha de verificação de integridade detectada pelo hardware modelado"""

    def __init__(self, kind: FaultKind, message: str = "",
                 tensor_id: Optional[int] = None, address: Optional[int] = None):
        self.kind = kind
        self.tensor_id = tensor_id
        self.address = address
        detail = message or kind.value
        if tensor_id is not None:
            detail += f" (tensor {tensor_id})"
        if address is not None:
            detail += f" @ {address:#x}"
        super().__init__(detail)


class ChannelTamper(IntegrityFault):
    """Mensagem do canal confiável falhou na autenticação"""

    def __init__(self, message: str = "tag do canal de metadados inválida"):
        super().__init__(FaultKind.CHANNEL_TAMPER, message)


class FaultLimitExceeded(IntegrityFault):
    """Contador de falhas da NPU passou do limite: execução interrompida"""

    def __init__(self, count: int, threshold: int, tensor_id: Optional[int] = None):
        self.count = count
        self.threshold = threshold
        super().__init__(FaultKind.TENSOR_MAC,
                         f"limite de falhas excedido ({count} > {threshold})",
                         tensor_id=tensor_id)


class AttestationFailure(TensorTeeError):
    """Relatórios de atestação não conferem"""


class TransferRejected(TensorTeeError):
    """Transferência tentada fora da fase KeyEstablished"""
