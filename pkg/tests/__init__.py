"""Test package for the light-source-transfer engine."""
