"""
🔐 TensorTEE Simulator - Configuration
Configurações centralizadas do simulador (valores padrão da plataforma CPU+NPU)
"""

# ═══════════════════════════════════════════════════════════════
# GEOMETRIA DE MEMÓRIA
# ═══════════════════════════════════════════════════════════════

CACHELINE_BYTES = 64           # Unidade de toda a memória off-chip
PAGE_BYTES = 4096              # Separação entre alocações de tensores
VN_BITS = 56                   # Largura do version number
MAC_BITS = 56                  # Largura do MAC (armazenado em campo de 64 bits)
MAC_STORED_BYTES = 7           # Bytes de MAC por unidade protegida
VNS_PER_LINE = 8               # 8 × 56 bits por linha de metadados (64 bits de padding)
MACS_PER_LINE = 8              # MACs empacotados por linha (modo TensorTEE na CPU)
MERKLE_ARITY = 8               # Árvore 8-ária sobre os VNs

# ═══════════════════════════════════════════════════════════════
# CPU (3.5 GHz, DDR4@2400 2 canais)
# A base de tempo global é o ciclo da CPU
# ═══════════════════════════════════════════════════════════════

CPU_FREQ_MHZ = 3500
CPU_CORES = 8
CPU_DRAM_CHANNELS = 2
CPU_DRAM_GBPS_PER_CHANNEL = 19.2      # DDR4-2400 × 2 canais ≈ 38.4 GB/s
CPU_DRAM_LATENCY_CYCLES = 180         # Latência de acesso (ciclos de CPU)
CPU_AES_GBPS_PER_CHANNEL = 19.2       # Motor AES dedicado por canal, totalmente pipelined
CPU_AES_LATENCY_CYCLES = 40
CPU_MAC_LATENCY_CYCLES = 40
CPU_METADATA_CACHE_BYTES = 32 * 1024  # Cache de metadados (VN-lines + nós da árvore)
CPU_COMPUTE_CYCLES_PER_LINE = 8       # Custo de computação por acesso do trace
CPU_MAC_BUFFER_LINES = 64             # Buffer de linhas de MAC empacotadas (modo TensorTEE)
CPU_HASH_LATENCY_CYCLES = 40          # Hash de um nó da árvore
CPU_LATENCY_TOLERANCE_CYCLES = 400    # Janela fora-de-ordem que esconde latência

# ═══════════════════════════════════════════════════════════════
# NPU (1 GHz, PE 512×512, GDDR5 128 GB/s)
# ═══════════════════════════════════════════════════════════════

NPU_FREQ_MHZ = 1000
NPU_PE_ROWS = 512
NPU_PE_COLS = 512
NPU_GDDR_CHANNELS = 16
NPU_GDDR_GBPS = 128.0                 # Banda agregada
NPU_GDDR_LATENCY_CYCLES = 100         # Ciclos de NPU
NPU_AES_GBPS_PER_ENGINE = 8.0         # Um motor por canal GDDR
NPU_AES_LATENCY_CYCLES = 40
NPU_MAC_LATENCY_CYCLES = 40
NPU_COMPUTE_CYCLES_PER_LINE = 8       # Ciclos do array sistólico por linha de peso por passada
NPU_TILE_LINES = 256                  # Linhas por stream de tile (scratchpad)
NPU_COMPARE_CYCLES = 2                # Comparação final do MAC do tensor

# ═══════════════════════════════════════════════════════════════
# LINK CPU ↔ NPU (PCIe 4.0 ×16)
# ═══════════════════════════════════════════════════════════════

LINK_GBPS = 32.0
LINK_LATENCY_CYCLES = 1750            # ~500 ns em ciclos de CPU
METADATA_CHANNEL_GBPS = 1.0           # Canal confiável de metadados
SYNC_CYCLES = 350                     # Sincronização de conclusão dos dois canais
XFER_AES_GBPS = 8.0                   # Motor AES único do caminho de relay (re-criptografia)

# ═══════════════════════════════════════════════════════════════
# CRIPTOGRAFIA (modelo funcional)
# ═══════════════════════════════════════════════════════════════

DEFAULT_SEED = 0x5EED
KEY_BYTES = 16                        # 128 bits para K_AES e K_MAC

# ═══════════════════════════════════════════════════════════════
# TENANALYZER (Meta Table, Tensor Filter, Bitmap)
# ═══════════════════════════════════════════════════════════════

META_TABLE_ENTRIES = 512
TENSOR_FILTER_ENTRIES = 10
FILTER_COLLECT_LIMIT = 4              # Endereços coletados antes de promover
FILTER_MAX_STRIDE = 64 * 1024         # Distância máxima para associar a uma entrada do filtro
MERGE_WINDOW = 8                      # Entradas recentes examinadas no merge
MAX_TENSOR_DIMS = 3
BITMAP_CACHE_BYTES = 6 * 1024

# ═══════════════════════════════════════════════════════════════
# NPU TEE (verificação)
# ═══════════════════════════════════════════════════════════════

FAULT_THRESHOLD = 3
MAC_GRANULARITIES = (64, 128, 256, 512, 1024, 2048, 4096)
MGX_MAC_GRANULARITY = 512             # Granularidade do baseline tipo MGX
POISON_TABLE_BITS = 512

# ═══════════════════════════════════════════════════════════════
# WORKLOADS (escala de bancada)
# ═══════════════════════════════════════════════════════════════

TENSOR_BASE_VA = 0x10_0000_0000
NPU_TENSOR_BASE = 0x80_0000_0000       # Memória do dispositivo
CODE_BASE_VA = 0x0040_0000            # Região de código dos kernels da NPU
DEFAULT_TENSOR_SIZES_KIB = (256, 512, 1024, 4096)   # Parâmetros; cada um vira w, g, m, v (16 tensores)
DEFAULT_ITERATIONS = 5
DEFAULT_SCENARIO = "zero-offload"
GEMM_DIM = 256
GEMM_TILE = 64
ELEMENT_BYTES = 4                     # FP32
DEFAULT_THREADS = 8
INTERLEAVE_QUANTUM_LINES = 16         # Linhas por rajada de cada core no trace
WRITEBACK_LAG_LINES = 32              # Atraso das write-backs filtradas pela LLC
BATCH_EMULATION_FACTOR = 4            # Repetições de stream por fwd/bwd
ADAM_LR = 1e-3
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

# Fuzz de consistência de VN (campanha vn-fuzz; --trials = número de traces)
FUZZ_REGION_LINES = (4, 8, 16, 16, 32)
FUZZ_TRACE_OPS = 1000
FUZZ_CHECK_EVERY = 64

# ═══════════════════════════════════════════════════════════════
# CLI / CÓDIGOS DE SAÍDA
# ═══════════════════════════════════════════════════════════════

EXIT_OK = 0
EXIT_CONFIG_ERROR = 2
EXIT_INTEGRITY_FAULT = 3
EXIT_ATTESTATION_FAILURE = 4

MODES = ("nonsecure", "sgx-mgx", "tensortee")
MODE_LABELS = {
    "nonsecure": "NonSecure",
    "sgx-mgx": "SGX+MGX",
    "tensortee": "TensorTEE",
}

METRICS_FILE = "metrics.json"
COST_CSV_COLUMNS = ("op", "pa", "data_bytes", "vn_bytes", "mac_bytes", "tree_bytes", "cycles")
NPU_CSV_COLUMNS = ("tensor_id", "mode", "lines", "stall_cycles", "verify_cycles", "faults")
TRANSFER_CSV_COLUMNS = ("protocol", "bytes_link", "bytes_aes", "cycles_total", "cycles_overlapped", "faults")
