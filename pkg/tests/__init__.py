"""
Toeplitz GOF Tests
==================
"""
