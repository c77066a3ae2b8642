"""
Tests for the tprop toolkit.
"""
