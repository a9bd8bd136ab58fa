"""Epsilon-differential agreement simulator."""
