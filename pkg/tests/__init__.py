"""Test suite for the random PDE surrogates."""
