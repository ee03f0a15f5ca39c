"""
🔐 TensorTEE Simulator - Engine Package
"""
from .events import EventLoop, Metrics, SimEvent
from .resources import ChannelGroup, Resource, ResourceLedger

__all__ = ['EventLoop', 'Metrics', 'SimEvent', 'ChannelGroup', 'Resource', 'ResourceLedger']
