"""
Test suite for pinvtools.

This package contains tests for the pinvtools library.
"""

# This file is intentionally left empty to mark the directory as a Python package.
