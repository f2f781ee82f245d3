"""Shared helpers: vector math, grid traversal, worker pool and file formats."""
