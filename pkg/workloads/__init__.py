"""
🔐 TensorTEE Simulator - Workloads Package
"""
from .trace import MemRequest, TraceIO, TraceRecord
from .generators import (GemmLayout, ScenarioConfig, ScenarioLayout, gen_adam_trace,
                         gen_gemm_trace, gen_mixed_trace, gen_stream_trace)

__all__ = [
    'MemRequest',
    'TraceIO',
    'TraceRecord',
    'GemmLayout',
    'ScenarioConfig',
    'ScenarioLayout',
    'gen_adam_trace',
    'gen_gemm_trace',
    'gen_mixed_trace',
    'gen_stream_trace',
]
