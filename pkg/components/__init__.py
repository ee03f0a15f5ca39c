"""
🔐 TensorTEE Simulator - Components Package
"""
