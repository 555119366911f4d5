"""
Shared utilities (logging, small helpers).

Kept dependency-light so scripts, tests and the CLI can import them without
pulling in the numerics.
"""
