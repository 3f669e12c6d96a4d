"""Synthetic light-source-transfer corpus."""
