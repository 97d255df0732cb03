"""
Toeplitz GOF Core Module
========================

Configuration, the Monte Carlo harness, the command line and the JSON service.
"""
