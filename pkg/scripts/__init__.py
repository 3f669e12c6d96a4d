"""Standalone maintenance scripts."""