"""
Commands package for init-robust
"""
