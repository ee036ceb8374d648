"""Compile-once, run-forever web automation toolkit.

Sanitizes page HTML into compact skeletons, compiles a natural-language
intent against one skeleton into a deterministic workflow blueprint, then
executes that blueprint any number of times without further model calls.
"""

__version__ = "0.1.0"
