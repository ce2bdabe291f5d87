"""Monolithic and folded SRN builders."""
from .common import approx_local_counts, local_count_tables, r_meet_hat
from .folded import build_folded
from .monolithic import build_monolithic

__all__ = ["approx_local_counts", "build_folded", "build_monolithic", "local_count_tables", "r_meet_hat"]
