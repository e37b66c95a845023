"""Shock formation in nonlocal look-ahead conservation laws."""
