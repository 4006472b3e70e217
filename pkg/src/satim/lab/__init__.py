"""Batch experiments: configuration, the four commands, CSV and plot-script output."""
